"""Coverage, code-grade, and style-lint tooling for MATLAB-style sources.

A line counts as executable when, after stripping leading whitespace, it is
non-empty, does not start with ``%``, and its first whole token is none of
``end``, ``otherwise``, ``switch``, ``else``, ``case``, ``function``. Token
comparison is whole-word, so ``endpoint = 1;`` stays executable. Blank lines
are excluded even though they trivially lack a ``%``: they cannot execute.

Coverage is executed-over-executable as a percentage; the grade is total
analyzer messages over total executable lines, mapped onto the A..F chart.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

EXCLUDED_KEYWORDS = frozenset({"end", "otherwise", "switch", "else", "case", "function"})

_TOKEN_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)")

GRADE_LETTERS = ("A", "B", "C", "D", "E", "F")

LINT_RULES = (
    "trailing-whitespace",
    "tabs",
    "line-length",
    "missing-final-newline",
    "space-after-comma",
)

MAX_LINE_LENGTH = 120
TAB_REPLACEMENT = "    "


class QualityError(ValueError):
    pass


class UnknownFile(QualityError):
    def __init__(self, path: str):
        super().__init__(f"executed line references unknown file {path!r}")
        self.path = path


class EmptyCodebase(QualityError):
    def __init__(self):
        super().__init__("no executable lines in the codebase")


class NegativePercent(QualityError):
    def __init__(self, percent: float):
        super().__init__(f"percent must be >= 0, got {percent}")
        self.percent = percent


class UnknownRule(QualityError):
    def __init__(self, rule: str):
        super().__init__(f"unknown lint rule {rule!r}")
        self.rule = rule


@dataclass(frozen=True)
class LineClassification:
    path: str
    executable: frozenset[int]
    total_lines: int

    def __post_init__(self) -> None:
        if any(n < 1 or n > self.total_lines for n in self.executable):
            raise QualityError(f"{self.path}: executable line out of range")


@dataclass(frozen=True)
class FileCoverage:
    path: str
    executable: int
    executed: int
    ignored: int  # executed lines that were not classified executable

    @property
    def percent(self) -> float:
        if self.executable == 0:
            return 100.0
        return 100.0 * self.executed / self.executable


@dataclass(frozen=True)
class CoverageReport:
    files: tuple[FileCoverage, ...]
    total_executable: int
    total_executed: int
    total_ignored: int
    percent: float
    empty_denominator: bool = False

    def to_dict(self) -> dict:
        return {
            "percent": self.percent,
            "total_executable": self.total_executable,
            "total_executed": self.total_executed,
            "total_ignored": self.total_ignored,
            "empty_denominator": self.empty_denominator,
            "files": [
                {
                    "path": f.path,
                    "executable": f.executable,
                    "executed": f.executed,
                    "ignored": f.ignored,
                    "percent": f.percent,
                }
                for f in self.files
            ],
        }

    def to_text(self) -> str:
        width = max([len("file")] + [len(f.path) for f in self.files])
        lines = [f"{'file'.ljust(width)}  exec'd/executable  percent"]
        for f in self.files:
            lines.append(
                f"{f.path.ljust(width)}  {f.executed:>6}/{f.executable:<10}  {f.percent:6.2f}%"
            )
        suffix = " (empty denominator)" if self.empty_denominator else ""
        lines.append(
            f"{'TOTAL'.ljust(width)}  {self.total_executed:>6}/{self.total_executable:<10}  "
            f"{self.percent:6.2f}%{suffix}"
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class GradeReport:
    total_messages: int
    total_executable: int
    percent: float
    letter: str

    def to_dict(self) -> dict:
        return {
            "total_messages": self.total_messages,
            "total_executable": self.total_executable,
            "percent": self.percent,
            "letter": self.letter,
        }


@dataclass(frozen=True)
class LintViolation:
    path: str
    line: int
    rule: str
    message: str
    fixable: bool

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "line": self.line,
            "rule": self.rule,
            "message": self.message,
            "fixable": self.fixable,
        }


def classify_executable(path: str, text: str) -> LineClassification:
    """Classify each source line as executable or not."""
    executable: set[int] = set()
    lines = text.splitlines()
    for n, line in enumerate(lines, start=1):
        stripped = line.lstrip()
        if not stripped or stripped.startswith("%"):
            continue
        token = _TOKEN_RE.match(stripped)
        if token and token.group(1) in EXCLUDED_KEYWORDS:
            continue
        executable.add(n)
    return LineClassification(path=path, executable=frozenset(executable), total_lines=len(lines))


def compute_coverage(
    classifications: Sequence[LineClassification],
    executed: Iterable[tuple[str, int]],
) -> CoverageReport:
    """Coverage percent: executed executable lines over all executable lines.

    Executed lines outside a file's executable set are not counted in the
    ratio; they show up in the per-file ``ignored`` diagnostics instead.
    """
    by_path = {c.path: c for c in classifications}
    hits: dict[str, set[int]] = {p: set() for p in by_path}
    ignored: dict[str, int] = {p: 0 for p in by_path}
    for path, line in executed:
        if path not in by_path:
            raise UnknownFile(path)
        if line in by_path[path].executable:
            hits[path].add(line)
        else:
            ignored[path] += 1

    files = tuple(
        FileCoverage(
            path=c.path,
            executable=len(c.executable),
            executed=len(hits[c.path]),
            ignored=ignored[c.path],
        )
        for c in classifications
    )
    total_executable = sum(f.executable for f in files)
    total_executed = sum(f.executed for f in files)
    total_ignored = sum(f.ignored for f in files)
    if total_executable == 0:
        return CoverageReport(files, 0, total_executed, total_ignored, 100.0, empty_denominator=True)
    return CoverageReport(
        files,
        total_executable,
        total_executed,
        total_ignored,
        100.0 * total_executed / total_executable,
    )


def to_letter(percent: float) -> str:
    """Letter for a grade percent: A [0,3), B [3,6), C [6,9), D [9,12),
    E [12,15], F above 15."""
    if percent < 0:
        raise NegativePercent(percent)
    if percent < 3:
        return "A"
    if percent < 6:
        return "B"
    if percent < 9:
        return "C"
    if percent < 12:
        return "D"
    if percent <= 15:
        return "E"
    return "F"


def grade(
    message_counts: Mapping[str, int],
    classifications: Sequence[LineClassification],
) -> GradeReport:
    """Message density over executable lines, as a percent plus letter."""
    by_path = {c.path: c for c in classifications}
    for path in message_counts:
        if path not in by_path:
            raise UnknownFile(path)
    total_messages = sum(message_counts.values())
    total_executable = sum(len(c.executable) for c in classifications)
    if total_executable == 0:
        raise EmptyCodebase()
    percent = 100.0 * total_messages / total_executable
    return GradeReport(
        total_messages=total_messages,
        total_executable=total_executable,
        percent=percent,
        letter=to_letter(percent),
    )


# --- lint --------------------------------------------------------------------

_COMMA_RE = re.compile(r",(?=[^\s])")


def _check_line(path: str, n: int, line: str, rules: frozenset[str]) -> list[LintViolation]:
    out = []
    if "trailing-whitespace" in rules and line != line.rstrip():
        out.append(LintViolation(path, n, "trailing-whitespace", "trailing whitespace", True))
    if "tabs" in rules and "\t" in line:
        out.append(LintViolation(path, n, "tabs", "tab character", True))
    if "line-length" in rules and len(line) > MAX_LINE_LENGTH:
        out.append(
            LintViolation(
                path, n, "line-length", f"line exceeds {MAX_LINE_LENGTH} characters", False
            )
        )
    if "space-after-comma" in rules and _COMMA_RE.search(line):
        out.append(LintViolation(path, n, "space-after-comma", "missing space after comma", True))
    return out


def lint_text(path: str, text: str, rules: Sequence[str] = LINT_RULES) -> list[LintViolation]:
    """Check one file's text against the rule set."""
    ruleset = frozenset(rules)
    for rule in ruleset:
        if rule not in LINT_RULES:
            raise UnknownRule(rule)
    violations: list[LintViolation] = []
    lines = text.splitlines()
    for n, line in enumerate(lines, start=1):
        violations.extend(_check_line(path, n, line, ruleset))
    if "missing-final-newline" in ruleset and text and not text.endswith("\n"):
        violations.append(
            LintViolation(path, max(1, len(lines)), "missing-final-newline", "no final newline", True)
        )
    return violations


def fix_text(text: str, rules: Sequence[str] = LINT_RULES) -> str:
    """Apply every fixable rule; idempotent by construction (tabs are expanded
    before trailing whitespace is stripped, and a comma's inserted space can
    never trail a line because end-of-line commas are not violations)."""
    ruleset = frozenset(rules)
    for rule in ruleset:
        if rule not in LINT_RULES:
            raise UnknownRule(rule)
    lines = text.splitlines()
    fixed: list[str] = []
    for line in lines:
        if "tabs" in ruleset:
            line = line.replace("\t", TAB_REPLACEMENT)
        if "space-after-comma" in ruleset:
            line = _COMMA_RE.sub(", ", line)
        if "trailing-whitespace" in ruleset:
            line = line.rstrip()
        fixed.append(line)
    out = "\n".join(fixed)
    if text.endswith("\n") or ("missing-final-newline" in ruleset and text):
        out += "\n"
    return out


def lint_check(
    paths: Sequence[str],
    rules: Sequence[str] = LINT_RULES,
    reader: Optional[Callable[[str], str]] = None,
) -> tuple[list[LintViolation], list[str]]:
    """Check files; unreadable files are reported but do not stop the run.

    Returns (violations, io_errors).
    """
    read = reader or _read_file
    violations: list[LintViolation] = []
    errors: list[str] = []
    for path in paths:
        try:
            text = read(path)
        except OSError as exc:
            errors.append(f"{path}: {exc}")
            continue
        violations.extend(lint_text(path, text, rules))
    return violations, errors


def lint_fix(
    paths: Sequence[str],
    rules: Sequence[str] = LINT_RULES,
) -> tuple[list[str], list[LintViolation], list[str]]:
    """Rewrite files in place; returns (changed paths, remaining violations,
    io errors). After a fix pass, no fixable violations remain."""
    changed: list[str] = []
    remaining: list[LintViolation] = []
    errors: list[str] = []
    for path in paths:
        try:
            text = _read_file(path)
        except OSError as exc:
            errors.append(f"{path}: {exc}")
            continue
        fixed = fix_text(text, rules)
        if fixed != text:
            try:
                with open(path, "w", encoding="utf-8", newline="") as fh:
                    fh.write(fixed)
            except OSError as exc:
                errors.append(f"{path}: {exc}")
                continue
            changed.append(path)
        remaining.extend(lint_text(path, fixed, rules))
    return changed, remaining, errors


def _read_file(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def read_trace(path: str) -> list[tuple[str, int]]:
    """Execution trace file: JSON lines of {"file": path, "line": n}."""
    executed: list[tuple[str, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            record = json.loads(raw)
            executed.append((record["file"], int(record["line"])))
    return executed


def default_analyzer(paths: Sequence[str]) -> dict[str, int]:
    """Bundled analyzer: per-file lint violation counts stand in for a real
    static-analysis message source."""
    counts: dict[str, int] = {}
    for path in paths:
        counts[path] = len(lint_text(path, _read_file(path)))
    return counts
