"""Traversal and closure algorithms behind path queries.

Two built-in reachability routes per the usual taxonomy: DFS traversal
(time O(n+m)) and an exact transitive closure (space O(n^2), guarded by a
node bound). ``oracle_match`` is the brute-force reference for regex path
matching: it enumerates every simple walk and checks each against a direct
recursive interpreter, independently of the engine's automaton route.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .graph import TpmGraph
from .model import EdgeRecord, GraphTooLargeError, Path
from .opm import OpmEdge, OpmGraph
from .query.ast import PathRegex, RAlt, RRepeat, RSeq, RTerm

NodePredicate = Callable[[str], bool]
EdgePredicate = Callable[[EdgeRecord], bool]


@dataclass
class ClosureMatrix:
    """Boolean reachability matrix with a node-id index; reflexive by definition."""

    index: dict[str, int]
    rows: list[set[int]]

    def reachable(self, from_id: str, to_id: str) -> bool:
        return self.index[to_id] in self.rows[self.index[from_id]]

    def pairs(self) -> set[tuple[str, str]]:
        ids = {i: n for n, i in self.index.items()}
        return {(ids[a], ids[b]) for a, row in enumerate(self.rows) for b in row}


def transitive_closure(
    graph: TpmGraph,
    edge_predicate: EdgePredicate | None = None,
    max_nodes: int = 10_000,
) -> ClosureMatrix:
    """Exact closure of the (optionally filtered) edge relation."""
    node_ids = sorted(graph.node_ids())
    if len(node_ids) > max_nodes:
        raise GraphTooLargeError(
            f"{len(node_ids)} nodes exceeds the closure bound of {max_nodes}"
        )
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    adjacency: list[list[int]] = [[] for _ in node_ids]
    for edge in graph.edges:
        if edge_predicate is None or edge_predicate(edge):
            adjacency[index[edge.from_id]].append(index[edge.to_id])
    rows: list[set[int]] = []
    for start in range(len(node_ids)):
        seen = {start}
        stack = [start]
        while stack:
            current = stack.pop()
            for nxt in adjacency[current]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        rows.append(seen)
    return ClosureMatrix(index, rows)


def traverse_paths(
    graph: TpmGraph,
    start: NodePredicate,
    end: NodePredicate,
    edge_predicate: EdgePredicate | None = None,
    max_len: int = 16,
) -> list[Path]:
    """All simple paths from start-matching to end-matching nodes (1..max_len edges)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    results: list[Path] = []
    for start_id in sorted(graph.node_ids()):
        if not start(start_id):
            continue
        _dfs_paths(graph, start_id, end, edge_predicate, max_len, results)
    results.sort(key=lambda p: p.sort_key())
    return results


def _dfs_paths(
    graph: TpmGraph,
    start_id: str,
    end: NodePredicate,
    edge_predicate: EdgePredicate | None,
    max_len: int,
    results: list[Path],
) -> None:
    nodes = [start_id]
    edges: list[EdgeRecord] = []
    visited = {start_id}

    def extend(current: str) -> None:
        for edge in sorted(graph.out_edges(current), key=lambda e: e.key()):
            if edge_predicate is not None and not edge_predicate(edge):
                continue
            if edge.to_id in visited:
                continue
            nodes.append(edge.to_id)
            edges.append(edge)
            visited.add(edge.to_id)
            if end(edge.to_id):
                results.append(Path(tuple(nodes), tuple(edges)))
            if len(edges) < max_len:
                extend(edge.to_id)
            visited.discard(edge.to_id)
            nodes.pop()
            edges.pop()

    extend(start_id)


def eliminate_cycles(graph):
    """Break directed cycles by dropping the back edges a DFS finds.

    Works on TpmGraph and OpmGraph alike; traversal follows insertion order,
    so the removal list is deterministic. Returns (acyclic graph, removed
    edges) of the same graph type.
    """
    if isinstance(graph, TpmGraph):
        node_ids = list(graph.node_ids())
        edges = list(graph.edges)
    elif isinstance(graph, OpmGraph):
        node_ids = list(graph.nodes)
        edges = list(graph.edges)
    else:
        raise TypeError(f"unsupported graph type {type(graph)!r}")
    removed_idx = _back_edges(node_ids, [(e.from_id, e.to_id) for e in edges])
    kept = [e for i, e in enumerate(edges) if i not in removed_idx]
    removed = [edges[i] for i in sorted(removed_idx)]
    if isinstance(graph, TpmGraph):
        return TpmGraph.from_validated((n.copy() for n in graph.nodes()), kept), removed
    out = OpmGraph(nodes=dict(graph.nodes), edges=kept)
    return out, removed


def _back_edges(node_ids: list[str], edges: list[tuple[str, str]]) -> set[int]:
    out: dict[str, list[tuple[int, str]]] = {}
    for i, (src, dst) in enumerate(edges):
        out.setdefault(src, []).append((i, dst))
    color: dict[str, int] = {}
    removed: set[int] = set()

    def walk(node_id: str) -> None:
        color[node_id] = 1
        for edge_idx, dst in out.get(node_id, ()):
            if edge_idx in removed:
                continue
            state = color.get(dst, 0)
            if state == 1:
                removed.add(edge_idx)
            elif state == 0:
                walk(dst)
        color[node_id] = 2

    for node_id in node_ids:
        if color.get(node_id, 0) == 0:
            walk(node_id)
    return removed


def topological_order(node_ids: list[str], edges: list[tuple[str, str]]) -> list[str] | None:
    """Kahn's algorithm; None when the edges contain a cycle (used as an

    independent check on eliminate_cycles output).
    """
    indegree = {n: 0 for n in node_ids}
    out: dict[str, list[str]] = {n: [] for n in node_ids}
    for src, dst in edges:
        out[src].append(dst)
        indegree[dst] += 1
    queue = [n for n in node_ids if indegree[n] == 0]
    order: list[str] = []
    while queue:
        node = queue.pop()
        order.append(node)
        for dst in out[node]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                queue.append(dst)
    return order if len(order) == len(node_ids) else None


# -- brute-force regex oracle -------------------------------------------------


def oracle_match(
    graph: TpmGraph,
    regex: PathRegex,
    term_predicates: dict[str, Callable],
    max_nodes: int = 12,
    maximal: bool = True,
) -> list[Path]:
    """Reference path matcher: enumerate all simple walks, filter by a

    recursive regex interpreter, then keep maximal matches. Only intended
    for small graphs; raises GraphTooLargeError beyond ``max_nodes``.
    """
    if len(graph) > max_nodes:
        raise GraphTooLargeError(f"oracle_match is limited to {max_nodes} nodes")
    matches: list[Path] = []
    for walk in _all_simple_walks(graph):
        if _interpret(regex, walk.sequence(), 0, graph, term_predicates):
            matches.append(walk)
    if maximal:
        matches = prune_subwalks(matches)
    matches.sort(key=lambda p: p.sort_key())
    return matches


def prune_subwalks(paths: list[Path]) -> list[Path]:
    """Drop every walk that is a contiguous sub-walk of another returned walk."""
    return [
        p
        for p in paths
        if not any(q is not p and p.is_subwalk_of(q) for q in paths)
    ]


def _all_simple_walks(graph: TpmGraph):
    for start_id in sorted(graph.node_ids()):
        nodes = [start_id]
        edges: list[EdgeRecord] = []
        visited = {start_id}
        yield Path((start_id,), ())

        def extend(current: str):
            for edge in sorted(graph.out_edges(current), key=lambda e: e.key()):
                if edge.to_id in visited:
                    continue
                nodes.append(edge.to_id)
                edges.append(edge)
                visited.add(edge.to_id)
                yield Path(tuple(nodes), tuple(edges))
                yield from extend(edge.to_id)
                visited.discard(edge.to_id)
                nodes.pop()
                edges.pop()

        yield from extend(start_id)


def _interpret(
    regex: PathRegex,
    sequence: tuple,
    position: int,
    graph: TpmGraph,
    predicates: dict[str, Callable],
) -> bool:
    """Full-match check: does regex consume sequence[position:] entirely?

    Term variables without a predicate match any element; the alternating
    node/edge discipline falls out of the sequence shape itself.
    """

    def match_part(part: PathRegex, pos: int) -> set[int]:
        if isinstance(part, RTerm):
            if pos >= len(sequence):
                return set()
            predicate = predicates.get(part.var)
            if predicate is not None and not predicate(sequence[pos]):
                return set()
            return {pos + 1}
        if isinstance(part, RSeq):
            positions = {pos}
            for sub in part.parts:
                positions = {p for q in positions for p in match_part(sub, q)}
                if not positions:
                    return set()
            return positions
        if isinstance(part, RAlt):
            return {p for option in part.options for p in match_part(option, pos)}
        assert isinstance(part, RRepeat)
        if part.op == "?":
            return {pos} | match_part(part.inner, pos)
        reached: set[int] = set()
        frontier = match_part(part.inner, pos)
        while frontier:
            new = frontier - reached
            reached |= new
            frontier = {p for q in new for p in match_part(part.inner, q)}
        return ({pos} | reached) if part.op == "*" else reached

    return len(sequence) in match_part(regex, position)
