"""Recursive-descent parser for the folder/path query language.

Keywords are case-insensitive and whitespace/comments are insignificant
(``#`` to end of line). String literals accept both ``'...'`` and the
typeset ``...'`` quoting found in published query listings. A bare token
``t<digits>`` is the integer tick ``<digits>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..model import TpmError
from .ast import (
    Comparison,
    Constant,
    PathRegex,
    PathSpec,
    QueryAst,
    RRepeat,
    RTerm,
    Term,
    TimeSemantic,
    TriplePattern,
    Variable,
    filter_variables,
    make_alt,
    make_seq,
)


class QuerySyntaxError(TpmError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnboundVariableError(TpmError):
    pass


class ArityError(TpmError):
    pass


class EmptyExpressionError(TpmError):
    pass


class UnknownKeywordError(TpmError):
    pass


_KEYWORDS = {"select", "fconstruct", "pconstruct", "apply", "as", "where", "filter",
             "all", "distinct"}

_TICK_RE = re.compile(r"t\d+$")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<attr>@[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<string>'(?:\\.|[^'\\])*')
  | (?P<tstring>`[^']*')
  | (?P<op>!=|<=|>=|&&|\|\||[=<>|*+?(){}\[\],.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # var attr number ident string op eof
    value: str
    line: int
    column: int


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        if body[i] == "\\" and i + 1 < len(body):
            out.append(body[i + 1])
            i += 2
        else:
            out.append(body[i])
            i += 1
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            column = pos - line_start + 1
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, column)
        kind = match.lastgroup
        value = match.group()
        column = pos - line_start + 1
        if kind == "string":
            tokens.append(Token("string", _unescape(value[1:-1]), line, column))
        elif kind == "tstring":
            tokens.append(Token("string", value[1:-1], line, column))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, column))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = match.end()
    tokens.append(Token("eof", "", line, len(text) - line_start + 1))
    return tokens


@dataclass(frozen=True)
class IntervalTemplate:
    """Which of the four slots each anchor tick fills for a time keyword."""

    keyword: str
    slots: tuple[str, ...]  # "a1" | "a2" | "?"

    @property
    def anchors(self) -> int:
        return 2 if "a2" in self.slots else 1

    def instantiate(self, *ticks: int) -> tuple:
        if len(ticks) != self.anchors:
            raise ArityError(
                f"{self.keyword!r} takes {self.anchors} anchor tick(s), got {len(ticks)}"
            )
        mapping = {"a1": ticks[0], "a2": ticks[-1], "?": None}
        return tuple(mapping[slot] for slot in self.slots)


_TIME_KEYWORDS: dict[str, tuple[str, ...]] = {
    "in": ("a1", "a1", "a1", "a1"),
    "on": ("a1", "a1", "a1", "a1"),
    "at": ("a1", "a1", "a1", "a1"),
    "during": ("a1", "a1", "a1", "a1"),
    "since": ("a1", "a1", "?", "?"),
    "after": ("a1", "?", "?", "?"),
    "before": ("?", "?", "?", "a1"),
    "till": ("?", "?", "a1", "a1"),
    "until": ("?", "?", "a1", "a1"),
    "untill": ("?", "?", "a1", "a1"),
    "by": ("?", "?", "a1", "a1"),
    "between": ("a1", "?", "?", "a2"),
}


def resolve_time_keyword(keyword: str) -> IntervalTemplate:
    """Interval template for a time-semantics keyword (UnknownKeywordError otherwise)."""
    slots = _TIME_KEYWORDS.get(keyword.lower())
    if slots is None:
        raise UnknownKeywordError(f"unknown time-semantics keyword {keyword!r}")
    return IntervalTemplate(keyword.lower(), slots)


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing --

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def error(self, message: str) -> QuerySyntaxError:
        token = self.current
        shown = token.value or "end of input"
        return QuerySyntaxError(f"{message} (got {shown!r})", token.line, token.column)

    def expect_op(self, op: str) -> Token:
        if self.current.kind == "op" and self.current.value == op:
            return self.advance()
        raise self.error(f"expected {op!r}")

    def at_op(self, op: str) -> bool:
        return self.current.kind == "op" and self.current.value == op

    def at_keyword(self, word: str) -> bool:
        return self.current.kind == "ident" and self.current.value.lower() == word

    def expect_keyword(self, word: str) -> Token:
        if self.at_keyword(word):
            return self.advance()
        raise self.error(f"expected keyword {word!r}")

    # -- statements --

    def statement(self) -> QueryAst:
        if self.at_keyword("select"):
            return self.select_statement()
        if self.at_keyword("fconstruct"):
            return self.fconstruct_statement()
        if self.at_keyword("pconstruct"):
            return self.pconstruct_statement()
        if self.at_op("("):
            return self.apply_statement()
        raise self.error("expected select, fconstruct, pconstruct or an apply scope")

    def select_statement(self) -> QueryAst:
        self.expect_keyword("select")
        ast = QueryAst(kind="select")
        ast.select_all_solutions, ast.projection = self.projection()
        ast.patterns, ast.filters = self.where_clause()
        return ast

    def projection(self) -> tuple[bool, list[str] | None]:
        all_solutions = False
        if self.at_keyword("all"):
            self.advance()
            all_solutions = True
        elif self.at_keyword("distinct"):
            self.advance()
        if self.at_op("*"):
            self.advance()
            return all_solutions, None
        names: list[str] = []
        while self.current.kind == "var":
            names.append(self.advance().value[1:])
        if not names:
            raise self.error("expected * or projection variables")
        return all_solutions, names

    def fconstruct_statement(self) -> QueryAst:
        self.expect_keyword("fconstruct")
        target = self.name()
        self.expect_keyword("as")
        target_var = self.variable().name
        ast = QueryAst(kind="fconstruct", target=target, target_var=target_var)
        if self.at_keyword("select"):
            self.advance()
            if self.at_op("("):
                self.advance()
                ast.folder_refs.append(self.name())
                while self.at_op(","):
                    self.advance()
                    ast.folder_refs.append(self.name())
                self.expect_op(")")
            else:
                ast.select_all_solutions, ast.projection = self.projection()
        ast.patterns, ast.filters = self.where_clause()
        return ast

    def pconstruct_statement(self) -> QueryAst:
        self.expect_keyword("pconstruct")
        target = self.name()
        self.expect_op("(")
        start = None if self.at_op(",") else self.term()
        self.expect_op(",")
        end = None if self.at_op(",") else self.term()
        self.expect_op(",")
        regex = self.regex()
        self.expect_op(")")
        self.expect_keyword("as")
        target_var = self.variable().name
        ast = QueryAst(
            kind="pconstruct",
            target=target,
            target_var=target_var,
            path_spec=PathSpec(start, end, regex),
        )
        ast.patterns, ast.filters = self.where_clause()
        return ast

    def apply_statement(self) -> QueryAst:
        self.expect_op("(")
        scope = [self.name()]
        while self.at_op(","):
            self.advance()
            scope.append(self.name())
        self.expect_op(")")
        self.expect_keyword("apply")
        self.expect_op("(")
        inner = self.statement()
        self.expect_op(")")
        return QueryAst(kind="apply", scope=scope, inner=inner)

    def name(self) -> str:
        if self.current.kind in ("ident", "string"):
            return self.advance().value
        raise self.error("expected a name")

    def variable(self) -> Variable:
        if self.current.kind == "var":
            return Variable(self.advance().value[1:])
        raise self.error("expected a ?variable")

    # -- where clause --

    def where_clause(self) -> tuple[list[TriplePattern], list]:
        self.expect_keyword("where")
        self.expect_op("{")
        patterns: list[TriplePattern] = []
        filters: list = []
        while not self.at_op("}"):
            if self.current.kind == "eof":
                raise self.error("unterminated where clause")
            if self.at_keyword("filter"):
                self.advance()
                self.expect_op("(")
                filters.append(self.expression())
                self.expect_op(")")
                if self.at_op("."):
                    self.advance()
            else:
                patterns.append(self.pattern())
        self.expect_op("}")
        return patterns, filters

    def pattern(self) -> TriplePattern:
        subject = self.term()
        if self.current.kind == "attr":
            predicate, is_attribute = self.advance().value[1:], True
        elif self.current.kind == "ident":
            predicate, is_attribute = self.advance().value, False
        else:
            raise self.error("expected an @attribute or relation predicate")
        obj = self.term()
        self.expect_op(".")
        return TriplePattern(subject, predicate, is_attribute, obj)

    def term(self) -> Term:
        token = self.current
        if token.kind == "var":
            self.advance()
            return Variable(token.value[1:])
        if token.kind == "string":
            self.advance()
            return Constant(token.value)
        if token.kind == "number":
            self.advance()
            return Constant(int(token.value))
        if token.kind == "ident":
            self.advance()
            if _TICK_RE.match(token.value):
                return Constant(int(token.value[1:]))
            return Constant(token.value)
        raise self.error("expected a term")

    # -- filter expressions --

    def expression(self):
        left = self.and_expression()
        while self.at_op("||"):
            self.advance()
            left = Comparison("||", left, self.and_expression())
        return left

    def and_expression(self):
        left = self.primary_expression()
        while self.at_op("&&"):
            self.advance()
            left = Comparison("&&", left, self.primary_expression())
        return left

    def primary_expression(self):
        if self.current.kind == "ident" and self.current.value.lower() == "timesemantic":
            return self.timesemantic()
        if self.at_op("("):
            self.advance()
            inner = self.expression()
            self.expect_op(")")
            return inner
        left = self.term()
        for op in ("!=", "<=", ">=", "=", "<", ">"):
            if self.at_op(op):
                self.advance()
                return Comparison(op, left, self.term())
        raise self.error("expected a comparison operator")

    def timesemantic(self) -> TimeSemantic:
        self.advance()
        self.expect_op("(")
        fact = self.variable()
        self.expect_op(",")
        interval = self.interval()
        self.expect_op(")")
        return TimeSemantic(fact, interval)

    def interval(self) -> tuple:
        start = self.current
        self.expect_op("[")
        slots: list = []
        while True:
            slots.append(self.slot())
            if self.at_op(","):
                self.advance()
                continue
            break
        self.expect_op("]")
        if len(slots) != 4:
            raise ArityError(
                f"line {start.line}: a time interval has exactly 4 slots, got {len(slots)}"
            )
        return tuple(slots)

    def slot(self):
        token = self.current
        if token.kind == "op" and token.value == "?":
            self.advance()
            return None
        if token.kind == "number":
            self.advance()
            return int(token.value)
        if token.kind == "ident" and _TICK_RE.match(token.value):
            self.advance()
            return int(token.value[1:])
        raise self.error("expected a tick or ? in the interval")

    # -- path regexes --

    def regex(self) -> PathRegex:
        return self.regex_alt()

    def regex_alt(self) -> PathRegex:
        options = [self.regex_seq()]
        while self.at_op("|"):
            self.advance()
            options.append(self.regex_seq())
        return make_alt(options)

    def regex_seq(self) -> PathRegex:
        parts = [self.regex_atom()]
        while self.current.kind == "var" or self.at_op("("):
            parts.append(self.regex_atom())
        return make_seq(parts)

    def regex_atom(self) -> PathRegex:
        if self.current.kind == "var":
            atom: PathRegex = RTerm(self.advance().value[1:])
        elif self.at_op("("):
            self.advance()
            atom = self.regex_alt()
            self.expect_op(")")
        else:
            raise self.error("expected a ?term or group in the path expression")
        while self.current.kind == "op" and self.current.value in ("?", "+", "*"):
            atom = RRepeat(atom, self.advance().value)
        return atom


def parse_query(text: str) -> QueryAst:
    """Parse one statement and check variable scoping."""
    parser = _Parser(tokenize(text))
    ast = parser.statement()
    if parser.current.kind != "eof":
        raise parser.error("trailing input after the statement")
    _check_bindings(ast)
    return ast


def parse_path_regex(text: str) -> PathRegex:
    """Parse a standalone path expression."""
    tokens = tokenize(text)
    if tokens[0].kind == "eof":
        raise EmptyExpressionError("empty path expression")
    parser = _Parser(tokens)
    regex = parser.regex()
    if parser.current.kind != "eof":
        raise parser.error("trailing input after the path expression")
    return regex


def _check_bindings(ast: QueryAst) -> None:
    if ast.kind == "apply":
        _check_bindings(ast.inner)  # type: ignore[arg-type]
        return
    bound = ast.variables()
    for name in ast.projection or []:
        if name not in bound:
            raise UnboundVariableError(f"projected variable ?{name} appears in no pattern")
    for expr in ast.filters:
        for name in filter_variables(expr):
            if name not in bound:
                raise UnboundVariableError(f"filter variable ?{name} appears in no pattern")
