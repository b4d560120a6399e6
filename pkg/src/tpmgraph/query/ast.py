"""AST for the folder/path query language, plus its canonical pretty-printer.

Statements: ``select`` (graph-level), ``fconstruct``/``pconstruct``
(materialize a timed folder/path node) and ``(scope) apply (inner)``.
The printer emits a canonical text form; ``parse(pretty(ast))`` yields a
structurally equal AST, which the round-trip tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

Interval = tuple  # 4 slots, each an int tick or None for the ? wildcard


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class Constant:
    value: Union[str, int, bool]


Term = Union[Variable, Constant]


@dataclass(frozen=True)
class TriplePattern:
    """``subject predicate object.`` — an @-prefixed predicate matches node

    attributes, a bare predicate matches edge relations.
    """

    subject: Term
    predicate: str
    is_attribute: bool
    object: Term


@dataclass(frozen=True)
class Comparison:
    op: str  # = != < <= > >= && ||
    left: "FilterExpr | Term"
    right: "FilterExpr | Term"


@dataclass(frozen=True)
class TimeSemantic:
    fact: Variable
    interval: Interval


FilterExpr = Union[Comparison, TimeSemantic]


@dataclass(frozen=True)
class RTerm:
    var: str


@dataclass(frozen=True)
class RSeq:
    parts: tuple

    def __post_init__(self) -> None:
        assert self.parts, "empty sequence"


@dataclass(frozen=True)
class RAlt:
    options: tuple


@dataclass(frozen=True)
class RRepeat:
    inner: "PathRegex"
    op: str  # ? + *


PathRegex = Union[RTerm, RSeq, RAlt, RRepeat]


def make_seq(parts: Iterable) -> PathRegex:
    """Sequence node with nested sequences flattened (the canonical shape)."""
    flat: list = []
    for part in parts:
        if isinstance(part, RSeq):
            flat.extend(part.parts)
        else:
            flat.append(part)
    if len(flat) == 1:
        return flat[0]
    return RSeq(tuple(flat))


def make_alt(options: Iterable) -> PathRegex:
    """Alternation node with nested alternations flattened."""
    flat: list = []
    for option in options:
        if isinstance(option, RAlt):
            flat.extend(option.options)
        else:
            flat.append(option)
    if len(flat) == 1:
        return flat[0]
    return RAlt(tuple(flat))


@dataclass(frozen=True)
class PathSpec:
    start: Term | None
    end: Term | None
    regex: PathRegex


@dataclass
class QueryAst:
    kind: str  # select | fconstruct | pconstruct | apply
    target: str | None = None
    target_var: str | None = None
    projection: list[str] | None = None  # variable names; None means *
    select_all_solutions: bool = False  # keep duplicate solutions
    folder_refs: list[str] = field(default_factory=list)
    patterns: list[TriplePattern] = field(default_factory=list)
    filters: list[FilterExpr] = field(default_factory=list)
    path_spec: PathSpec | None = None
    scope: list[str] = field(default_factory=list)
    inner: "QueryAst | None" = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QueryAst):
            return NotImplemented
        return _key(self) == _key(other)

    def variables(self) -> set[str]:
        """Variables bound by patterns or the construct header."""
        bound: set[str] = set()
        if self.target_var:
            bound.add(self.target_var)
        for pattern in self.patterns:
            for term in (pattern.subject, pattern.object):
                if isinstance(term, Variable):
                    bound.add(term.name)
        if self.path_spec is not None:
            bound |= regex_variables(self.path_spec.regex)
            for term in (self.path_spec.start, self.path_spec.end):
                if isinstance(term, Variable):
                    bound.add(term.name)
        return bound


def _key(ast: QueryAst) -> tuple:
    return (
        ast.kind,
        ast.target,
        ast.target_var,
        tuple(ast.projection) if ast.projection is not None else None,
        ast.select_all_solutions,
        tuple(ast.folder_refs),
        tuple(ast.patterns),
        tuple(ast.filters),
        ast.path_spec,
        tuple(ast.scope),
        _key(ast.inner) if ast.inner is not None else None,
    )


def regex_variables(regex: PathRegex) -> set[str]:
    if isinstance(regex, RTerm):
        return {regex.var}
    if isinstance(regex, RSeq):
        return set().union(*(regex_variables(p) for p in regex.parts))
    if isinstance(regex, RAlt):
        return set().union(*(regex_variables(o) for o in regex.options))
    return regex_variables(regex.inner)


def filter_variables(expr: FilterExpr) -> set[str]:
    if isinstance(expr, TimeSemantic):
        return {expr.fact.name}
    names: set[str] = set()
    for side in (expr.left, expr.right):
        if isinstance(side, Variable):
            names.add(side.name)
        elif isinstance(side, (Comparison, TimeSemantic)):
            names |= filter_variables(side)
    return names


# -- pretty printing -----------------------------------------------------------


def pretty(ast: QueryAst) -> str:
    if ast.kind == "select":
        return f"{_projection(ast)}\n{_where(ast)}"
    if ast.kind == "fconstruct":
        header = f"fconstruct {ast.target} as ?{ast.target_var}"
        if ast.folder_refs:
            header += "\nselect (" + ", ".join(ast.folder_refs) + ")"
        elif ast.projection is not None or ast.select_all_solutions:
            header += "\n" + _projection(ast)
        return f"{header}\n{_where(ast)}"
    if ast.kind == "pconstruct":
        spec = ast.path_spec
        start = _term(spec.start) if spec.start is not None else ""
        end = _term(spec.end) if spec.end is not None else ""
        header = (
            f"pconstruct {ast.target}\n({start}, {end}, {pretty_regex(spec.regex)})"
            f" as ?{ast.target_var}"
        )
        return f"{header}\n{_where(ast)}"
    assert ast.kind == "apply"
    inner = pretty(ast.inner) if ast.inner is not None else ""
    return "(" + ", ".join(ast.scope) + ") apply (\n" + _indent(inner) + "\n)"


def _projection(ast: QueryAst) -> str:
    modifier = "all " if ast.select_all_solutions else ""
    if ast.projection is None:
        return f"select {modifier}*"
    return "select " + modifier + " ".join(f"?{v}" for v in ast.projection)


def _where(ast: QueryAst) -> str:
    lines = [f" {_pattern(p)}" for p in ast.patterns]
    lines += [f" FILTER ( {pretty_filter(f)} )." for f in ast.filters]
    body = "\n".join(lines)
    return "where {\n" + body + ("\n}" if body else "}")


def _pattern(pattern: TriplePattern) -> str:
    predicate = f"@{pattern.predicate}" if pattern.is_attribute else pattern.predicate
    return f"{_term(pattern.subject)} {predicate} {_term(pattern.object)}."


def _term(term: Term) -> str:
    if isinstance(term, Variable):
        return f"?{term.name}"
    value = term.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if _is_bare(value):
        return value
    escaped = value.replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"


def _is_bare(value: str) -> bool:
    if not value or value in ("true", "false"):
        return False
    if not (value[0].isalpha() or value[0] == "_"):
        return False
    if all(c.isdigit() for c in value[1:]) and value[0] == "t":
        return False  # would re-parse as a tick literal
    return all(c.isalnum() or c in "_-" for c in value)


def pretty_filter(expr: FilterExpr) -> str:
    if isinstance(expr, TimeSemantic):
        slots = ",".join("?" if s is None else f"t{s}" for s in expr.interval)
        return f"Timesemantic(?{expr.fact.name}, [{slots}])"
    left = _operand(expr.left)
    right = _operand(expr.right)
    return f"{left} {expr.op} {right}"


def _operand(side) -> str:
    if isinstance(side, (Comparison, TimeSemantic)):
        return f"({pretty_filter(side)})"
    return _term(side)


def pretty_regex(regex: PathRegex) -> str:
    if isinstance(regex, RTerm):
        return f"?{regex.var}"
    if isinstance(regex, RSeq):
        return " ".join(_regex_atom(p) for p in regex.parts)
    if isinstance(regex, RAlt):
        return " | ".join(pretty_regex(o) for o in regex.options)
    return f"{_regex_atom(regex.inner, group_seq=True)}{regex.op}"


def _regex_atom(part: PathRegex, group_seq: bool = False) -> str:
    text = pretty_regex(part)
    if isinstance(part, RAlt) or (group_seq and isinstance(part, RSeq)):
        return f"({text})"
    return text


def _indent(text: str) -> str:
    return "\n".join(f" {line}" for line in text.splitlines())
