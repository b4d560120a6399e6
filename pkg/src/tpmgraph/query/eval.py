"""Query evaluation against a TPM graph.

Pattern matching is conjunctive with a most-selective-first join order;
``@``-predicates read node attributes (plus the virtual @isA, @type, @id,
@timestamp, @start, @duration, @timed), bare predicates match edge
relations. Path expressions are matched by walking the graph against a
compiled automaton under a simple-walk constraint; without start/end
anchors only maximal matches (no match that is a contiguous sub-walk of
another) are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..graph import TpmGraph
from ..model import (
    EdgeRecord,
    NodeRecord,
    Path,
    Relation,
    Timestamp,
    TpmError,
)
from .ast import (
    Comparison,
    Constant,
    PathRegex,
    QueryAst,
    RAlt,
    RRepeat,
    RSeq,
    RTerm,
    Term,
    TimeSemantic,
    TriplePattern,
    Variable,
    filter_variables,
    regex_variables,
)


class QueryTypeError(TpmError):
    pass


class QueryEvalError(TpmError):
    pass


class RegexUnsatisfiableError(TpmError):
    pass


class NameCollisionError(TpmError):
    pass


class UnknownContainerError(TpmError):
    pass


class TimeBoundViolationError(TpmError):
    pass


# -- time semantics ------------------------------------------------------------


def time_filter(ts: Timestamp, interval: tuple) -> bool:
    """Point-fact rule for a 4-slot interval: b1 <= ts <= b4 (slots 2 and 3

    constrain durated facts only); ``None`` slots are unconstrained.
    """
    b1, _, _, b4 = interval
    return (b1 is None or ts >= b1) and (b4 is None or ts <= b4)


def interval_time_filter(start: Timestamp, end: Timestamp, interval: tuple) -> bool:
    """Durated-fact rule: the fact starts at or after b1/b2 and ends at or

    before b3/b4 — [b2, b3] must contain the whole fact.
    """
    b1, b2, b3, b4 = interval
    return (
        (b1 is None or start >= b1)
        and (b2 is None or start >= b2)
        and (b3 is None or end <= b3)
        and (b4 is None or end <= b4)
    )


# -- attribute access ----------------------------------------------------------

_ISA_BY_KIND = {
    "event": "entityNode",
    "artifact": "entityNode",
    "agent": "entityNode",
    "folder": "folderNode",
    "path": "pathNode",
}


def node_attribute(node: NodeRecord, key: str):
    """Virtual or stored attribute of a node; None when absent."""
    lowered = key.lower()
    if lowered == "isa":
        return _ISA_BY_KIND[node.kind.value]
    if lowered == "id":
        return node.entity_id
    if lowered == "timestamp":
        return node.timestamp
    if lowered == "start":
        return node.start
    if lowered == "duration":
        return node.duration
    if lowered == "timed":
        return "true" if node.timed else "false"
    if key in node.attributes:
        return node.attributes[key]
    folded = {k.lower(): v for k, v in sorted(node.attributes.items())}
    return folded.get(lowered)


def edge_attribute(edge: EdgeRecord, key: str):
    lowered = key.lower()
    if lowered == "isa":
        return "edge"
    if lowered == "label":
        return edge.relation.value
    if lowered == "weight":
        return edge.weight
    return None


# -- binding sets ----------------------------------------------------------------


@dataclass
class BindingSet:
    """Ordered solutions; every row binds the same variables.

    ``path_indexes`` aligns with rows for per-path apply results
    (None outside path scope).
    """

    variables: list[str]
    rows: list[dict] = field(default_factory=list)
    path_indexes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def values(self, variable: str) -> list:
        return [row.get(variable) for row in self.rows]

    def to_tsv(self) -> str:
        header = list(self.variables)
        with_paths = any(i is not None for i in self.path_indexes)
        lines = ["\t".join((["path"] if with_paths else []) + [f"?{v}" for v in header])]
        for i, row in enumerate(self.rows):
            cells = [str(row.get(v, "")) for v in header]
            if with_paths:
                cells.insert(0, f"path:{self.path_indexes[i]}")
            lines.append("\t".join(cells))
        return "\n".join(lines)


@dataclass(frozen=True)
class Scope:
    """Restriction of evaluation to a member subgraph."""

    nodes: frozenset
    edge_keys: frozenset | None = None  # None: any edge between scope nodes

    def allows_edge(self, edge: EdgeRecord) -> bool:
        if edge.from_id not in self.nodes or edge.to_id not in self.nodes:
            return False
        return self.edge_keys is None or edge.key() in self.edge_keys


# -- conjunctive pattern solving -------------------------------------------------


def solve_patterns(
    graph: TpmGraph,
    patterns: list[TriplePattern],
    scope: Scope | None = None,
) -> list[dict]:
    solutions: list[dict] = [{}]
    remaining = list(patterns)
    while remaining and solutions:
        bound = set(solutions[0].keys())
        index = max(range(len(remaining)), key=lambda i: _selectivity(remaining[i], bound))
        pattern = remaining.pop(index)
        solutions = [
            extended
            for solution in solutions
            for extended in _match_pattern(graph, pattern, solution, scope)
        ]
    return solutions


def _selectivity(pattern: TriplePattern, bound: set) -> int:
    score = 0
    if isinstance(pattern.subject, Constant) or (
        isinstance(pattern.subject, Variable) and pattern.subject.name in bound
    ):
        score += 2
    if isinstance(pattern.object, Constant) or (
        isinstance(pattern.object, Variable) and pattern.object.name in bound
    ):
        score += 1
    return score


def _subject_candidates(graph: TpmGraph, term: Term, binding: dict, scope: Scope | None):
    if isinstance(term, Constant):
        ids = [str(term.value)]
    elif term.name in binding:
        value = binding[term.name]
        if not isinstance(value, str):
            return []
        ids = [value]
    else:
        ids = sorted(scope.nodes) if scope is not None else sorted(graph.node_ids())
    return [i for i in ids if i in graph and (scope is None or i in scope.nodes)]


def _match_pattern(
    graph: TpmGraph,
    pattern: TriplePattern,
    binding: dict,
    scope: Scope | None,
):
    if pattern.is_attribute:
        for node_id in _subject_candidates(graph, pattern.subject, binding, scope):
            value = node_attribute(graph.node(node_id), pattern.predicate)
            if value is None:
                continue
            extended = _bind(binding, pattern.subject, node_id)
            if extended is None:
                continue
            final = _bind(extended, pattern.object, value)
            if final is not None:
                yield final
        return
    relation = _relation_of(pattern.predicate)
    if relation is None:
        return
    subject_fixed = isinstance(pattern.subject, Constant) or (
        isinstance(pattern.subject, Variable) and pattern.subject.name in binding
    )
    object_fixed = isinstance(pattern.object, Constant) or (
        isinstance(pattern.object, Variable) and pattern.object.name in binding
    )
    if subject_fixed:
        for node_id in _subject_candidates(graph, pattern.subject, binding, scope):
            for edge in sorted(graph.out_edges(node_id), key=lambda e: e.key()):
                if edge.relation != relation:
                    continue
                if scope is not None and not scope.allows_edge(edge):
                    continue
                extended = _bind(binding, pattern.subject, node_id)
                if extended is None:
                    continue
                final = _bind(extended, pattern.object, edge.to_id)
                if final is not None:
                    yield final
        return
    if object_fixed:
        for node_id in _subject_candidates(graph, pattern.object, binding, scope):
            for edge in sorted(graph.in_edges(node_id), key=lambda e: e.key()):
                if edge.relation != relation:
                    continue
                if scope is not None and not scope.allows_edge(edge):
                    continue
                extended = _bind(binding, pattern.object, node_id)
                if extended is None:
                    continue
                final = _bind(extended, pattern.subject, edge.from_id)
                if final is not None:
                    yield final
        return
    for edge in sorted(graph.edges, key=lambda e: e.key()):
        if edge.relation != relation:
            continue
        if scope is not None and not scope.allows_edge(edge):
            continue
        extended = _bind(binding, pattern.subject, edge.from_id)
        if extended is None:
            continue
        final = _bind(extended, pattern.object, edge.to_id)
        if final is not None:
            yield final


def _relation_of(name: str) -> Relation | None:
    try:
        return Relation(name)
    except ValueError:
        return None


def _bind(binding: dict, term: Term, value) -> dict | None:
    if isinstance(term, Constant):
        return binding if _values_equal(term.value, value) else None
    if term.name in binding:
        return binding if _values_equal(binding[term.name], value) else None
    extended = dict(binding)
    extended[term.name] = value
    return extended


def _values_equal(a, b) -> bool:
    if isinstance(a, int) != isinstance(b, int):
        return False
    return a == b


# -- filter evaluation -----------------------------------------------------------


def evaluate_filter(graph: TpmGraph, expr, binding: dict) -> bool:
    if isinstance(expr, TimeSemantic):
        value = binding.get(expr.fact.name)
        if value is None:
            raise QueryEvalError(f"filter references unbound ?{expr.fact.name}")
        if isinstance(value, int):
            return time_filter(value, expr.interval)
        node = graph.get(str(value))
        if node is None:
            raise QueryTypeError(
                f"Timesemantic needs a timestamp or node, got {value!r}"
            )
        if node.is_container:
            lo, hi = node.interval()
            return interval_time_filter(lo, hi, expr.interval)
        return time_filter(node.timestamp, expr.interval)  # type: ignore[arg-type]
    assert isinstance(expr, Comparison)
    if expr.op in ("&&", "||"):
        left = evaluate_filter(graph, expr.left, binding)
        if expr.op == "&&":
            return left and evaluate_filter(graph, expr.right, binding)
        return left or evaluate_filter(graph, expr.right, binding)
    left = _operand_value(expr.left, binding)
    right = _operand_value(expr.right, binding)
    if expr.op == "=":
        return _values_equal(left, right)
    if expr.op == "!=":
        return not _values_equal(left, right)
    if isinstance(left, int) != isinstance(right, int):
        raise QueryTypeError(
            f"cannot order {left!r} against {right!r} (timestamp vs text)"
        )
    if expr.op == "<":
        return left < right
    if expr.op == "<=":
        return left <= right
    if expr.op == ">":
        return left > right
    assert expr.op == ">="
    return left >= right


def _operand_value(side, binding: dict):
    if isinstance(side, Variable):
        if side.name not in binding:
            raise QueryEvalError(f"filter references unbound ?{side.name}")
        return binding[side.name]
    if isinstance(side, Constant):
        return side.value
    raise QueryTypeError("nested boolean expressions cannot be compared")


# -- select ----------------------------------------------------------------------


def eval_select(
    graph: TpmGraph,
    ast: QueryAst,
    scope: Scope | None = None,
) -> BindingSet:
    """All solutions of a select statement (distinct projected rows by default)."""
    solutions = solve_patterns(graph, ast.patterns, scope)
    solutions = [
        s for s in solutions if all(evaluate_filter(graph, f, s) for f in ast.filters)
    ]
    if ast.projection is None:
        variables = sorted({name for s in solutions for name in s} | _pattern_vars(ast))
    else:
        variables = list(ast.projection)
    rows = [{v: s.get(v) for v in variables} for s in solutions]
    if not ast.select_all_solutions:
        seen = set()
        unique = []
        for row in rows:
            key = tuple(repr(row[v]) for v in variables)
            if key not in seen:
                seen.add(key)
                unique.append(row)
        rows = unique
    rows.sort(key=lambda row: tuple(str(row.get(v)) for v in variables))
    return BindingSet(variables, rows, [None] * len(rows))


def _pattern_vars(ast: QueryAst) -> set:
    names: set = set()
    for pattern in ast.patterns:
        for term in (pattern.subject, pattern.object):
            if isinstance(term, Variable):
                names.add(term.name)
    return names


# -- pconstruct term predicates ---------------------------------------------------


def split_construct_patterns(ast: QueryAst) -> tuple[dict, list, list]:
    """Partition a construct's where clause into target attribute definitions,

    per-term constraint groups and leftover (solution-level) patterns.
    """
    term_vars = regex_variables(ast.path_spec.regex) if ast.path_spec else set()
    if ast.path_spec:
        for endpoint in (ast.path_spec.start, ast.path_spec.end):
            if isinstance(endpoint, Variable):
                term_vars.add(endpoint.name)
    attribute_defs: dict[str, str | int] = {}
    by_term: dict[str, list[TriplePattern]] = {v: [] for v in term_vars}
    leftovers: list[TriplePattern] = []
    for pattern in ast.patterns:
        subject = pattern.subject
        if isinstance(subject, Variable) and subject.name == ast.target_var:
            if not pattern.is_attribute or not isinstance(pattern.object, Constant):
                raise QueryEvalError(
                    "construct target attributes must be @attribute constant patterns"
                )
            attribute_defs[pattern.predicate] = pattern.object.value
        elif isinstance(subject, Variable) and subject.name in term_vars:
            if not pattern.is_attribute:
                raise QueryEvalError(
                    "path term variables support @attribute constraints only"
                )
            by_term[subject.name].append(pattern)
        else:
            leftovers.append(pattern)
    return attribute_defs, [(v, by_term[v]) for v in sorted(by_term)], leftovers


def compile_term_predicates(
    graph: TpmGraph,
    term_groups: list,
    filters: list,
) -> tuple[dict, list]:
    """Build per-term element predicates; returns (predicates, leftover filters).

    A filter attaches to a term when it mentions only that term's local
    object variables; contradictory @isA or duplicate-constant constraints
    raise RegexUnsatisfiableError up front.
    """
    predicates: dict[str, Callable] = {}
    local_owner: dict[str, str] = {}
    groups: dict[str, list[TriplePattern]] = {}
    for term_var, patterns in term_groups:
        groups[term_var] = patterns
        seen_constants: dict[str, object] = {}
        for pattern in patterns:
            if isinstance(pattern.object, Variable):
                local_owner.setdefault(pattern.object.name, term_var)
            elif isinstance(pattern.object, Constant):
                key = pattern.predicate.lower()
                if key in seen_constants and seen_constants[key] != pattern.object.value:
                    raise RegexUnsatisfiableError(
                        f"?{term_var} @{pattern.predicate} is constrained to both "
                        f"{seen_constants[key]!r} and {pattern.object.value!r}"
                    )
                seen_constants[key] = pattern.object.value

    term_filters: dict[str, list] = {v: [] for v, _ in term_groups}
    leftover_filters: list = []
    for expr in filters:
        mentioned = filter_variables(expr)
        owners = {local_owner.get(name) for name in mentioned}
        owners |= {v for v, _ in term_groups if v in mentioned}
        owners.discard(None)
        if len(owners) == 1 and mentioned and all(
            name in local_owner or name in groups for name in mentioned
        ):
            term_filters[owners.pop()].append(expr)
        else:
            leftover_filters.append(expr)

    for term_var, patterns in term_groups:
        predicates[term_var] = _term_predicate(graph, term_var, patterns, term_filters[term_var])
    return predicates, leftover_filters


def _term_predicate(
    graph: TpmGraph, term_var: str, patterns: list[TriplePattern], filters: list
) -> Callable:
    def predicate(element) -> bool:
        binding: dict = {}
        is_edge = isinstance(element, EdgeRecord)
        for pattern in patterns:
            if is_edge:
                value = edge_attribute(element, pattern.predicate)
            else:
                value = node_attribute(graph.node(element), pattern.predicate)
            if value is None:
                return False
            target = pattern.object
            if isinstance(target, Constant):
                if not _values_equal(target.value, value):
                    return False
            else:
                if target.name in binding and not _values_equal(binding[target.name], value):
                    return False
                binding[target.name] = value
        binding[term_var] = element
        try:
            return all(evaluate_filter(graph, f, binding) for f in filters)
        except QueryEvalError:
            return False

    return predicate


# -- path matching (automaton route) ----------------------------------------------


class _Nfa:
    """Thompson construction over term-variable symbols."""

    def __init__(self) -> None:
        self.epsilon: list[list[int]] = []
        self.symbol: list[tuple[str, int] | None] = []

    def state(self) -> int:
        self.epsilon.append([])
        self.symbol.append(None)
        return len(self.epsilon) - 1

    def add_epsilon(self, src: int, dst: int) -> None:
        self.epsilon[src].append(dst)

    def closure(self, states: frozenset) -> frozenset:
        stack = list(states)
        seen = set(states)
        while stack:
            for nxt in self.epsilon[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)


def _compile_nfa(regex: PathRegex) -> tuple[_Nfa, int, int]:
    nfa = _Nfa()

    def build(part: PathRegex) -> tuple[int, int]:
        if isinstance(part, RTerm):
            start, accept = nfa.state(), nfa.state()
            nfa.symbol[start] = (part.var, accept)
            return start, accept
        if isinstance(part, RSeq):
            first_start, prev_accept = build(part.parts[0])
            for sub in part.parts[1:]:
                sub_start, sub_accept = build(sub)
                nfa.add_epsilon(prev_accept, sub_start)
                prev_accept = sub_accept
            return first_start, prev_accept
        if isinstance(part, RAlt):
            start, accept = nfa.state(), nfa.state()
            for option in part.options:
                sub_start, sub_accept = build(option)
                nfa.add_epsilon(start, sub_start)
                nfa.add_epsilon(sub_accept, accept)
            return start, accept
        assert isinstance(part, RRepeat)
        inner_start, inner_accept = build(part.inner)
        start, accept = nfa.state(), nfa.state()
        nfa.add_epsilon(start, inner_start)
        if part.op in ("?", "*"):
            nfa.add_epsilon(start, accept)
        nfa.add_epsilon(inner_accept, accept)
        if part.op in ("+", "*"):
            nfa.add_epsilon(inner_accept, inner_start)
        return start, accept

    start, accept = build(regex)
    return nfa, start, accept


def match_regex_paths(
    graph: TpmGraph,
    regex: PathRegex,
    predicates: dict,
    start_predicate: Callable | None = None,
    end_predicate: Callable | None = None,
    maximal: bool | None = None,
) -> list[Path]:
    """Walks of the graph whose alternating node/edge sequence matches regex.

    Walks are simple (no repeated node). With no endpoint anchors, only
    maximal matches are kept; anchored queries report every conforming walk.
    """
    from ..reachability import prune_subwalks

    if maximal is None:
        maximal = start_predicate is None and end_predicate is None
    nfa, start_state, accept = _compile_nfa(regex)

    def advance(states: frozenset, element) -> frozenset:
        reached = set()
        for state in states:
            arrow = nfa.symbol[state]
            if arrow is None:
                continue
            var, nxt = arrow
            predicate = predicates.get(var)
            if predicate is None or predicate(element):
                reached.add(nxt)
        return nfa.closure(frozenset(reached))

    results: list[Path] = []
    initial = nfa.closure(frozenset({start_state}))
    for origin in sorted(graph.node_ids()):
        if start_predicate is not None and not start_predicate(origin):
            continue
        states = advance(initial, origin)
        if not states:
            continue
        stack: list[tuple[str, frozenset, tuple, tuple, frozenset]] = [
            (origin, states, (origin,), (), frozenset({origin}))
        ]
        while stack:
            current, states, nodes, edges, visited = stack.pop()
            if accept in states and (end_predicate is None or end_predicate(current)):
                results.append(Path(nodes, edges))
            for edge in sorted(graph.out_edges(current), key=lambda e: e.key(), reverse=True):
                if edge.to_id in visited:
                    continue
                after_edge = advance(states, edge)
                if not after_edge:
                    continue
                after_node = advance(after_edge, edge.to_id)
                if not after_node:
                    continue
                stack.append(
                    (
                        edge.to_id,
                        after_node,
                        nodes + (edge.to_id,),
                        edges + (edge,),
                        visited | {edge.to_id},
                    )
                )
    if maximal:
        results = prune_subwalks(results)
    results.sort(key=lambda p: p.sort_key())
    return results


def term_from_spec(graph: TpmGraph, term: Term | None, predicates: dict) -> Callable | None:
    """Endpoint predicate from a pconstruct header slot."""
    if term is None:
        return None
    if isinstance(term, Variable):
        return predicates.get(term.name)
    wanted = str(term.value)

    def predicate(element) -> bool:
        return isinstance(element, str) and element == wanted

    return predicate
