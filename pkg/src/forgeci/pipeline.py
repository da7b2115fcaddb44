"""Pipeline configuration parsing and command-script generation.

The config dialect is a deliberately tiny YAML subset: top-level scalar
mappings (``key: value``), top-level sequence mappings whose items are
``- `` lines at one deeper indent, ``#`` comments, and blank lines.
Indentation is exactly two spaces per level; tabs are rejected. A sequence
item may span several lines: lines indented past the item marker continue
the current item and are kept verbatim (minus the four-space base indent),
so multi-line shell conditionals survive as a single command.

From a parsed spec plus environment bindings we generate the executable
command script (the "Hudson" file): interpreter line, fail-fast directive,
one export per binding, then the phase commands in order.
"""

from __future__ import annotations

import hashlib
import os
import re
import shlex
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

RECOGNIZED_KEYS = ("language", "before_install", "script")
PHASE_ORDER = ("before_install", "script")

INTERPRETER_LINE = "#!/bin/sh"
FAILFAST_LINE = "set -e"

_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*):(?:\s+(.*))?$")
_BINDING_NAME_RE = re.compile(r"^[A-Z_][A-Z0-9_]*$")

ITEM_INDENT = 2
CONTINUATION_INDENT = 4


class PipelineError(ValueError):
    """Base class for pipeline config and script-generation errors."""


class UnknownKey(PipelineError):
    def __init__(self, name: str, line_no: int = 0):
        super().__init__(f"unknown key {name!r}" + (f" at line {line_no}" if line_no else ""))
        self.name = name
        self.line_no = line_no


class MissingScriptPhase(PipelineError):
    def __init__(self):
        super().__init__("phase 'script' is required and must be non-empty")


class IndentationError(PipelineError):  # noqa: A001 - contract name
    def __init__(self, line_no: int, reason: str = "bad indentation"):
        super().__init__(f"{reason} at line {line_no}")
        self.line_no = line_no


class EmptyCommand(PipelineError):
    def __init__(self, line_no: int):
        super().__init__(f"empty command at line {line_no}")
        self.line_no = line_no


class DuplicateBinding(PipelineError):
    def __init__(self, name: str):
        super().__init__(f"duplicate environment binding {name!r}")
        self.name = name


@dataclass(frozen=True)
class EnvBinding:
    """One NAME=value pair exported into the build environment."""

    name: str
    value: str

    def __post_init__(self) -> None:
        if not _BINDING_NAME_RE.match(self.name):
            raise PipelineError(f"invalid binding name {self.name!r}")


@dataclass(frozen=True)
class PipelineSpec:
    """Parsed pipeline: language plus the recognized phase command lists."""

    language: str = ""
    before_install: tuple[str, ...] = ()
    script: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.script:
            raise MissingScriptPhase()

    @property
    def phases(self) -> tuple[tuple[str, tuple[str, ...]], ...]:
        """Non-empty phases in canonical order."""
        out = []
        for name in PHASE_ORDER:
            commands = getattr(self, name)
            if commands:
                out.append((name, commands))
        return tuple(out)

    def commands(self) -> tuple[str, ...]:
        return tuple(c for _, cmds in self.phases for c in cmds)


@dataclass(frozen=True)
class HudsonScript:
    """Generated command script with its bindings and originating spec hash."""

    text: str
    bindings: tuple[EnvBinding, ...]
    spec_hash: str

    @property
    def filename(self) -> str:
        return f"hudson-{self.spec_hash}.sh"


# --- shared dialect scanner -------------------------------------------------

DocumentValue = Union[str, list[str]]


def parse_document(text: str) -> dict[str, DocumentValue]:
    """Scan the block dialect into an ordered key -> value mapping.

    Scalars map to strings, sequences to command lists. No keyword policy is
    applied here; callers layer their own key set on top. Duplicate sequence
    keys merge in order, a duplicate scalar key overwrites.
    """
    entries: dict[str, DocumentValue] = {}
    current_seq: Optional[list[str]] = None  # open sequence list
    open_item = False  # last seq item accepts continuations

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.lstrip(" ")
        if not stripped:
            continue
        if stripped.startswith("#"):
            continue
        indent = len(line) - len(stripped)
        if "\t" in line[:indent] or stripped.startswith("\t"):
            raise IndentationError(line_no, "tab in indentation")

        if indent == 0:
            open_item = False
            current_seq = None
            m = _KEY_RE.match(line)
            if not m:
                raise IndentationError(line_no, "expected 'key:' or 'key: value'")
            key, value = m.group(1), m.group(2)
            if value is not None:
                entries[key] = value.strip()
            else:
                seq = entries.get(key)
                if not isinstance(seq, list):
                    seq = []
                    entries[key] = seq
                current_seq = seq
            continue

        if indent == ITEM_INDENT:
            if current_seq is None:
                raise IndentationError(line_no, "sequence item outside a sequence")
            if stripped == "-" or stripped == "- ":
                raise EmptyCommand(line_no)
            if not stripped.startswith("- "):
                raise IndentationError(line_no, "expected '- ' sequence item")
            command = stripped[2:].strip()
            if not command:
                raise EmptyCommand(line_no)
            current_seq.append(command)
            open_item = True
            continue

        if indent >= CONTINUATION_INDENT:
            if current_seq is None or not open_item:
                raise IndentationError(line_no, "continuation without an open item")
            current_seq[-1] = current_seq[-1] + "\n" + line[CONTINUATION_INDENT:]
            continue

        raise IndentationError(line_no)

    return entries


# --- pipeline-specific layer ------------------------------------------------

def parse_pipeline(text: str) -> PipelineSpec:
    """Parse pipeline config text, enforcing the closed keyword set."""
    entries = parse_document(text)
    for key in entries:
        if key not in RECOGNIZED_KEYS:
            raise UnknownKey(key)

    language = entries.get("language", "")
    if isinstance(language, list):
        raise UnknownKey("language")  # sequence form is not the recognized shape

    def phase(name: str) -> tuple[str, ...]:
        value = entries.get(name, [])
        if isinstance(value, str):
            raise UnknownKey(name)  # scalar form is not the recognized shape
        return tuple(value)

    before_install = phase("before_install")
    script = phase("script")
    if not script:
        raise MissingScriptPhase()
    return PipelineSpec(language=str(language), before_install=before_install, script=script)


def render_pipeline(spec: PipelineSpec) -> str:
    """Emit the canonical dialect for a spec; parse(render(s)) == s."""
    lines: list[str] = []
    if spec.language:
        lines.append(f"language: {spec.language}")
        lines.append("")
    for name, commands in spec.phases:
        lines.append(f"{name}:")
        for command in commands:
            first, *rest = command.split("\n")
            lines.append(f"  - {first}")
            for cont in rest:
                lines.append("    " + cont)
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def spec_hash(spec: PipelineSpec) -> str:
    return hashlib.sha256(render_pipeline(spec).encode("utf-8")).hexdigest()


def generate_hudson_script(
    spec: PipelineSpec, bindings: Sequence[EnvBinding]
) -> HudsonScript:
    """Assemble the executable script: interpreter, fail-fast, exports, then
    the phase commands verbatim and in order.

    ``set -e`` makes the script's exit code the first failing command's code
    (or 0 when everything passes).
    """
    seen: set[str] = set()
    for b in bindings:
        if b.name in seen:
            raise DuplicateBinding(b.name)
        seen.add(b.name)

    lines = [INTERPRETER_LINE, FAILFAST_LINE]
    for b in bindings:
        lines.append(f"export {b.name}={shlex.quote(b.value)}")
    for command in spec.commands():
        lines.extend(command.split("\n"))
    text = "\n".join(lines) + "\n"
    return HudsonScript(text=text, bindings=tuple(bindings), spec_hash=spec_hash(spec))


def write_hudson_script(script: HudsonScript, directory: str) -> str:
    """Write the script to ``hudson-<hash>.sh`` in ``directory``, executable."""
    path = os.path.join(directory, script.filename)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(script.text)
    os.chmod(path, 0o755)
    return path


def load_pipeline(path: str) -> PipelineSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pipeline(fh.read())


def make_bindings(pairs: Iterable[tuple[str, str]]) -> tuple[EnvBinding, ...]:
    return tuple(EnvBinding(n, v) for n, v in pairs)
