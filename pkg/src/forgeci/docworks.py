"""Docstring extraction from function headers and static doc-site assembly.

A function's header comment is the contiguous ``%`` block directly under its
signature line. Inside it, an uppercase keyword line (``% USAGE:`` etc.)
opens a block; following non-empty comment lines belong to that block; an
empty comment line closes it. Text before the first keyword is free-form
preamble. Pages are emitted as plain Markdown so the site needs no toolchain.
"""

from __future__ import annotations

import os
import re
import warnings as _warnings
from dataclasses import dataclass
from typing import Optional

KEYWORDS = ("USAGE", "INPUT", "INPUTS", "OUTPUT", "OUTPUTS", "EXAMPLE", "NOTE", "AUTHOR")

# INPUT/INPUTS and OUTPUT/OUTPUTS may repeat; the others appear at most once.
REPEATABLE = frozenset({"INPUT", "INPUTS", "OUTPUT", "OUTPUTS"})

_SIGNATURE_RE = re.compile(r"^\s*function\b(.*)$")
_KEYWORD_LINE_RE = re.compile(r"^(" + "|".join(KEYWORDS) + r"):\s*(.*)$")
_NAME_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(|$)")


class DocError(ValueError):
    pass


class EmptyBlock(DocError):
    def __init__(self, keyword: str, line_no: int):
        super().__init__(f"keyword {keyword}: at line {line_no} has no content lines")
        self.keyword = keyword
        self.line_no = line_no


@dataclass(frozen=True)
class DocBlock:
    keyword: str
    lines: tuple[str, ...]


@dataclass(frozen=True)
class DocIssue:
    """Non-fatal problem found while extracting (kept instead of raising so
    extraction stays total over arbitrary input)."""

    kind: str
    keyword: str
    line_no: int


@dataclass
class DocRecord:
    name: str
    signature: str
    source_path: str
    preamble: tuple[str, ...] = ()
    blocks: tuple[DocBlock, ...] = ()
    issues: tuple[DocIssue, ...] = ()


def _comment_body(line: str) -> Optional[str]:
    """Strip a leading '%' and up to 4 spaces of comment indent; None when
    the line is not a comment."""
    stripped = line.lstrip()
    if not stripped.startswith("%"):
        return None
    body = stripped[1:]
    for _ in range(4):
        if body.startswith(" "):
            body = body[1:]
        else:
            break
    return body


def _function_name(signature: str) -> str:
    # name is the identifier called in 'function [out] = name(args)' or
    # 'function name(args)'; fall back on the last identifier present
    after = signature.split("=", 1)[-1] if "=" in signature else signature
    after = after.strip()
    m = _NAME_RE.match(after)
    if m:
        return m.group(1)
    idents = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", signature)
    return idents[-1] if idents else "anonymous"


def extract_docstrings(text: str, source_path: str = "<memory>", strict: bool = False) -> list[DocRecord]:
    """Extract one DocRecord per function signature line.

    With ``strict`` a keyword block with no content raises EmptyBlock;
    otherwise the problem lands in the record's ``issues`` and extraction
    continues, so the parser is total over arbitrary input.
    """
    lines = text.splitlines()
    records: list[DocRecord] = []
    i = 0
    while i < len(lines):
        sig_match = _SIGNATURE_RE.match(lines[i])
        if not sig_match:
            i += 1
            continue
        signature = lines[i].strip()
        name = _function_name(sig_match.group(1))
        i += 1

        preamble: list[str] = []
        blocks: list[DocBlock] = []
        issues: list[DocIssue] = []
        open_keyword: Optional[str] = None
        open_keyword_line = 0
        open_lines: list[str] = []
        seen: set[str] = set()

        def close_block() -> None:
            nonlocal open_keyword, open_lines
            if open_keyword is None:
                return
            if not open_lines:
                if strict:
                    raise EmptyBlock(open_keyword, open_keyword_line)
                issues.append(DocIssue("empty-block", open_keyword, open_keyword_line))
            else:
                blocks.append(DocBlock(open_keyword, tuple(open_lines)))
            open_keyword = None
            open_lines = []

        while i < len(lines):
            body = _comment_body(lines[i])
            if body is None:
                break
            line_no = i + 1
            i += 1
            if not body.strip():
                close_block()
                continue
            kw_match = _KEYWORD_LINE_RE.match(body)
            if kw_match:
                close_block()
                keyword = kw_match.group(1)
                if keyword in seen and keyword not in REPEATABLE:
                    issues.append(DocIssue("repeated-keyword", keyword, line_no))
                seen.add(keyword)
                open_keyword = keyword
                open_keyword_line = line_no
                inline = kw_match.group(2).strip()
                open_lines = [inline] if inline else []
                continue
            if open_keyword is not None:
                open_lines.append(body.rstrip())
            else:
                preamble.append(body.rstrip())
        close_block()

        records.append(
            DocRecord(
                name=name,
                signature=signature,
                source_path=source_path,
                preamble=tuple(preamble),
                blocks=tuple(blocks),
                issues=tuple(issues),
            )
        )
    return records


def extract_file(path: str, strict: bool = False) -> list[DocRecord]:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return extract_docstrings(fh.read(), source_path=path, strict=strict)


def extract_tree(root: str, strict: bool = False) -> list[DocRecord]:
    """Extract every record under ``root``, in sorted path order."""
    records: list[DocRecord] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for filename in sorted(filenames):
            if filename.endswith(".m"):
                records.extend(extract_file(os.path.join(dirpath, filename), strict=strict))
    return records


# --- site assembly ------------------------------------------------------------

def _render_block(block: DocBlock) -> list[str]:
    out = [f"## {block.keyword}", ""]
    if block.keyword == "EXAMPLE":
        out.append("```matlab")
        out.extend(block.lines)
        out.append("```")
    elif block.keyword == "NOTE":
        out.append("> **Note:**")
        out.extend(f"> {line}" for line in block.lines)
    else:
        out.extend(block.lines)
    out.append("")
    return out


def render_page(record: DocRecord) -> str:
    lines = [f"# {record.name}", "", f"`{record.signature}`", ""]
    if record.preamble:
        lines.extend(record.preamble)
        lines.append("")
    for block in record.blocks:
        lines.extend(_render_block(block))
    lines.append(f"*Source: `{record.source_path}`*")
    lines.append("")
    return "\n".join(lines)


def build_site(records: list[DocRecord], out_dir: str) -> list[str]:
    """Write an index page plus one page per function; returns the written
    paths. Duplicate function names get a numeric suffix and a warning entry
    in the index build is avoided by keeping names unique."""
    if not records:
        raise DocError("no records to build a site from")
    os.makedirs(out_dir, exist_ok=True)

    by_page: list[tuple[str, DocRecord]] = []
    used: dict[str, int] = {}
    warnings: list[str] = []
    for record in sorted(records, key=lambda r: (r.name, r.source_path)):
        count = used.get(record.name, 0)
        used[record.name] = count + 1
        page = record.name if count == 0 else f"{record.name}-{count + 1}"
        if count:
            warnings.append(f"duplicate function name {record.name!r}; page {page!r}")
        by_page.append((page, record))

    written: list[str] = []
    index = ["# Function reference", ""]
    for page, record in by_page:
        path = os.path.join(out_dir, f"{page}.md")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_page(record))
        written.append(path)
        index.append(f"- [{record.name}]({page}.md)")
    index.append("")
    index_path = os.path.join(out_dir, "index.md")
    with open(index_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(index))
    written.insert(0, index_path)

    for warning in warnings:
        _warnings.warn(warning, stacklevel=2)
    return written
