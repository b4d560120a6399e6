"""Tokenizer and quoting helpers shared by the OPM and native TPM file formats.

Both formats are line oriented: whitespace-separated tokens, double-quoted
tokens for values containing whitespace or special characters, and ``#``
comments. Parsing is byte-deterministic and reports 1-based line/column
positions on error.
"""

from __future__ import annotations

from .model import TpmError

_SPECIAL = set(' \t"#=')


class LineSyntaxError(TpmError):
    """Malformed line in a graph file; carries line and column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def split_tokens(text: str, line_no: int) -> list[tuple[str, int]]:
    """Split one line into (token, column) pairs, honoring quotes and comments."""
    tokens: list[tuple[str, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        start = i
        parts: list[str] = []
        while i < n and text[i] not in " \t#":
            if text[i] == '"':
                i += 1
                while True:
                    if i >= n:
                        raise LineSyntaxError("unterminated quote", line_no, start + 1)
                    if text[i] == "\\" and i + 1 < n and text[i + 1] in '\\"':
                        parts.append(text[i + 1])
                        i += 2
                    elif text[i] == '"':
                        i += 1
                        break
                    else:
                        parts.append(text[i])
                        i += 1
            else:
                parts.append(text[i])
                i += 1
        tokens.append(("".join(parts), start + 1))
    return tokens


def quote(token: str) -> str:
    """Quote a token if it needs quoting for round-trip-safe output."""
    if token and not any(c in _SPECIAL for c in token):
        return token
    escaped = token.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def parse_kv(token: str) -> tuple[str, str] | None:
    """Split a key=value token; None when it is not one."""
    if "=" not in token:
        return None
    key, value = token.split("=", 1)
    if not key:
        return None
    return key, value


def format_kv(key: str, value: str) -> str:
    if not key or any(c in _SPECIAL for c in key):
        raise ValueError(f"attribute key {key!r} contains reserved characters")
    if value == "" or any(c in _SPECIAL for c in value):
        quoted = quote(value) if value else '""'
        return f"{key}={quoted}"
    return f"{key}={value}"
