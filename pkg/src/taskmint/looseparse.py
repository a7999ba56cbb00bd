"""Tolerant parsing for LLM-emitted Python-ish dictionaries.

Model responses mix single and double quotes, wrap output in code fences,
and add prose around the braces. This parser accepts all of that, keeps
apostrophes inside strings intact, and recovers entry by entry so one
malformed value never discards its well-formed siblings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

# A quote only terminates a string when what follows could legally follow
# a string: a key/value separator, a closer, or end of input.
_CLOSERS = frozenset(":,}]")

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "b": "\b", "\\": "\\", "'": "'", '"': '"', "/": "/"}

_RESYNC = re.compile(r",\s*['\"]")

_FENCE = re.compile(r"^\s*```[\w-]*\s*$")

# Text right after the last brace that reads as another entry coming: the
# response was cut off, not followed by prose.
_CONTINUATION = re.compile(r"\s*,\s*['\"]")


@dataclass
class ParseIssue:
    """One unparseable or ill-shaped fragment, reported instead of raised."""

    key: str | None
    reason: str
    detail: str = ""


class _Bad(Exception):
    def __init__(self, pos: int, message: str):
        super().__init__(message)
        self.pos = pos
        self.message = message


class _Cursor:
    __slots__ = ("text", "pos")

    def __init__(self, text: str, pos: int = 0):
        self.text = text
        self.pos = pos

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1


def extract_dict_source(text: str) -> str | None:
    """Cut the outermost {...} span, ignoring code fences and prose.

    A truncated response can end mid-entry, after the last complete
    brace; when the tail reads as another entry it is kept so the parser
    can report it instead of silently dropping it.
    """
    lines = [line for line in text.splitlines() if not _FENCE.match(line)]
    body = "\n".join(lines)
    start = body.find("{")
    end = body.rfind("}")
    if start == -1 or end == -1 or end < start:
        return None
    if _CONTINUATION.match(body, end + 1):
        return body[start:]
    return body[start : end + 1]


def parse_loose_dict(text: str) -> tuple[dict[str, Any], list[ParseIssue]]:
    """Parse a dictionary-shaped response, recovering per top-level entry."""
    source = extract_dict_source(text)
    if source is None:
        return {}, [ParseIssue(None, "no-dict", "no braced dictionary found")]
    cursor = _Cursor(source)
    cursor.skip_ws()
    if cursor.peek() != "{":
        return {}, [ParseIssue(None, "no-dict", "text does not start with a dictionary")]
    cursor.pos += 1
    entries: dict[str, Any] = {}
    issues: list[ParseIssue] = []
    while True:
        cursor.skip_ws()
        if cursor.peek() in ("", "}"):
            break
        before = cursor.pos
        try:
            key = _parse_string(cursor)
            cursor.skip_ws()
            if cursor.peek() != ":":
                raise _Bad(cursor.pos, "expected ':' after key")
            cursor.pos += 1
            value = _parse_value(cursor)
            entries[key] = value
            cursor.skip_ws()
            if cursor.peek() == ",":
                cursor.pos += 1
            elif cursor.peek() not in ("", "}"):
                raise _Bad(cursor.pos, "expected ',' or '}' after value")
        except _Bad as bad:
            issues.append(ParseIssue(None, "bad-entry", bad.message))
            match = _RESYNC.search(cursor.text, bad.pos)
            if match is None or match.start() < before:
                break
            cursor.pos = match.start() + 1
        if cursor.pos <= before:
            break
    return entries, issues


def _parse_value(cursor: _Cursor) -> Any:
    cursor.skip_ws()
    ch = cursor.peek()
    if ch == "":
        raise _Bad(cursor.pos, "unexpected end of input")
    if ch in "'\"":
        return _parse_string(cursor)
    if ch == "[":
        return _parse_list(cursor)
    if ch == "{":
        return _parse_dict(cursor)
    return _parse_bare(cursor)


def _parse_string(cursor: _Cursor) -> str:
    quote = cursor.peek()
    if quote not in "'\"":
        raise _Bad(cursor.pos, "expected a quoted string")
    text = cursor.text
    i = cursor.pos + 1
    out: list[str] = []
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "u" and i + 5 < len(text):
                try:
                    out.append(chr(int(text[i + 2 : i + 6], 16)))
                    i += 6
                    continue
                except ValueError:
                    pass
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
            continue
        if ch == quote:
            j = i + 1
            while j < len(text) and text[j].isspace():
                j += 1
            if j >= len(text) or text[j] in _CLOSERS:
                cursor.pos = i + 1
                return "".join(out)
            out.append(ch)
            i += 1
            continue
        out.append(ch)
        i += 1
    raise _Bad(cursor.pos, "unterminated string")


def _parse_list(cursor: _Cursor) -> list[Any]:
    cursor.pos += 1
    items: list[Any] = []
    while True:
        cursor.skip_ws()
        if cursor.peek() == "]":
            cursor.pos += 1
            return items
        if cursor.peek() == "":
            raise _Bad(cursor.pos, "unterminated list")
        items.append(_parse_value(cursor))
        cursor.skip_ws()
        if cursor.peek() == ",":
            cursor.pos += 1
        elif cursor.peek() != "]":
            raise _Bad(cursor.pos, "expected ',' or ']' in list")


def _parse_dict(cursor: _Cursor) -> dict[str, Any]:
    cursor.pos += 1
    out: dict[str, Any] = {}
    while True:
        cursor.skip_ws()
        if cursor.peek() == "}":
            cursor.pos += 1
            return out
        if cursor.peek() == "":
            raise _Bad(cursor.pos, "unterminated dictionary")
        key = _parse_string(cursor)
        cursor.skip_ws()
        if cursor.peek() != ":":
            raise _Bad(cursor.pos, "expected ':' after key")
        cursor.pos += 1
        out[key] = _parse_value(cursor)
        cursor.skip_ws()
        if cursor.peek() == ",":
            cursor.pos += 1
        elif cursor.peek() != "}":
            raise _Bad(cursor.pos, "expected ',' or '}' in dictionary")


_BARE = re.compile(r"[^,\]\}\s]+")


def _parse_bare(cursor: _Cursor) -> Any:
    match = _BARE.match(cursor.text, cursor.pos)
    if match is None:
        raise _Bad(cursor.pos, "expected a value")
    token = match.group(0)
    cursor.pos = match.end()
    lowered = token.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    if lowered in ("null", "none"):
        return None
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token
