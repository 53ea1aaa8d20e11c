"""Single-file unified diff application with exact context matching."""

from __future__ import annotations

import re
from dataclasses import dataclass

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
MALFORMED = "malformed diff"
NO_APPLY = "patch does not apply"


class PatchError(Exception):
    """``str(exc)`` is one of :data:`MALFORMED` or :data:`NO_APPLY`."""


@dataclass
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: list[tuple[str, str]]  # (op, text) with op in " -+"


def parse_diff(diff: str) -> list[Hunk]:
    lines = diff.splitlines()
    i = 0
    while i < len(lines) and (lines[i].startswith("--- ") or lines[i].startswith("+++ ")):
        i += 1
    hunks: list[Hunk] = []
    while i < len(lines):
        m = _HUNK_RE.match(lines[i])
        if not m:
            raise PatchError(MALFORMED)
        old_len = int(m.group(2)) if m.group(2) is not None else 1
        new_len = int(m.group(4)) if m.group(4) is not None else 1
        hunk = Hunk(int(m.group(1)), old_len, int(m.group(3)), new_len, [])
        i += 1
        while i < len(lines) and not lines[i].startswith("@@"):
            line = lines[i]
            i += 1
            if line.startswith("\\"):
                continue  # "\ No newline at end of file"
            if line == "":
                hunk.lines.append((" ", ""))
            elif line[0] in " -+":
                hunk.lines.append((line[0], line[1:]))
            else:
                raise PatchError(MALFORMED)
        n_old = sum(1 for op, _ in hunk.lines if op != "+")
        n_new = sum(1 for op, _ in hunk.lines if op != "-")
        if n_old != hunk.old_len or n_new != hunk.new_len or not hunk.lines:
            raise PatchError(MALFORMED)
        hunks.append(hunk)
    if not hunks:
        raise PatchError(MALFORMED)
    return hunks


def apply_diff(text: str, diff: str) -> str:
    """Return ``text`` with ``diff`` applied.

    Every context and removed line must match the file exactly at the
    position named by its hunk header; no fuzz, no offset search.
    """
    hunks = parse_diff(diff)
    trailing_newline = text.endswith("\n")
    original = text.splitlines()
    out: list[str] = []
    cursor = 0
    for hunk in hunks:
        start = hunk.old_start - 1 if hunk.old_len > 0 else hunk.old_start
        if start < cursor or start > len(original):
            raise PatchError(NO_APPLY)
        out.extend(original[cursor:start])
        pos = start
        for op, line in hunk.lines:
            if op == "+":
                out.append(line)
                continue
            if pos >= len(original) or original[pos] != line:
                raise PatchError(NO_APPLY)
            if op == " ":
                out.append(line)
            pos += 1
        cursor = pos
    out.extend(original[cursor:])
    result = "\n".join(out)
    if out and (trailing_newline or not original):
        result += "\n"
    return result


def make_diff(old: str, new: str, path: str = "file", context: int = 1) -> str:
    """Unified diff from ``old`` to ``new`` in the accepted subset."""
    import difflib

    lines = difflib.unified_diff(
        old.splitlines(), new.splitlines(), f"a/{path}", f"b/{path}", n=context, lineterm=""
    )
    return "\n".join(lines) + "\n"
