"""The TPM graph store.

Single-writer / multi-reader: every mutating method takes an internal lock;
reads are plain dict lookups and safe to run concurrently with each other.
Causal edges (used, wasGeneratedBy, wasTriggeredBy, wasDerivedFrom) are kept
acyclic; temporal edges are validated against the endpoint timestamps.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Iterator

from .model import (
    CAUSAL_RELATIONS,
    CONTAINER_KINDS,
    INSTANCE_KINDS,
    LEGAL_ENDPOINTS,
    CycleIntroducedError,
    DuplicateNodeIdError,
    EdgeRecord,
    IllegalRelationError,
    InvalidIntervalError,
    MalformedNodeError,
    NodeKind,
    NodeRecord,
    NotAContainerError,
    Relation,
    TemporalViolationError,
    Timestamp,
    UnknownEndpointError,
)


class TpmGraph:
    """Directed temporal provenance graph of typed nodes and typed edges."""

    def __init__(self) -> None:
        self._nodes: dict[str, NodeRecord] = {}
        self._edges: list[EdgeRecord] = []
        self._edge_keys: set[tuple[str, str, str]] = set()
        self._out: dict[str, list[EdgeRecord]] = {}
        self._in: dict[str, list[EdgeRecord]] = {}
        self._by_entity: dict[str, list[str]] = {}
        self._lock = threading.RLock()

    # -- basic access ------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, node_id: str) -> NodeRecord:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownEndpointError(f"no node {node_id!r}") from None

    def get(self, node_id: str) -> NodeRecord | None:
        return self._nodes.get(node_id)

    def nodes(self) -> Iterator[NodeRecord]:
        return iter(self._nodes.values())

    def node_ids(self) -> Iterator[str]:
        return iter(self._nodes.keys())

    @property
    def edges(self) -> list[EdgeRecord]:
        return self._edges

    def out_edges(self, node_id: str) -> list[EdgeRecord]:
        return self._out.get(node_id, [])

    def in_edges(self, node_id: str) -> list[EdgeRecord]:
        return self._in.get(node_id, [])

    def has_edge(self, from_id: str, relation: Relation, to_id: str) -> bool:
        return (from_id, relation.value, to_id) in self._edge_keys

    def max_timestamp(self) -> Timestamp:
        return max((n.interval()[1] for n in self._nodes.values()), default=0)

    # -- mutation ----------------------------------------------------------

    def add_node(self, node: NodeRecord) -> str:
        """Store a node, enforcing kind/timestamp shape and instance uniqueness."""
        with self._lock:
            if node.node_id in self._nodes:
                raise DuplicateNodeIdError(f"node id {node.node_id!r} already present")
            if node.kind in INSTANCE_KINDS:
                for other_id in self._by_entity.get(node.entity_id, ()):
                    other = self._nodes[other_id]
                    if other.kind == node.kind and other.timestamp == node.timestamp:
                        raise MalformedNodeError(
                            f"entity {node.entity_id!r} already has a "
                            f"{node.kind.value} instance at t={node.timestamp}"
                        )
            self._nodes[node.node_id] = node
            self._by_entity.setdefault(node.entity_id, []).append(node.node_id)
            return node.node_id

    def add_edge(self, edge: EdgeRecord) -> None:
        """Store an edge after endpoint, legality, cycle and temporal checks.

        A missing happenedBefore/startedBefore weight is computed; a wrong
        one is rejected. Re-adding an identical edge is a no-op.
        """
        with self._lock:
            src = self._nodes.get(edge.from_id)
            dst = self._nodes.get(edge.to_id)
            if src is None or dst is None:
                missing = edge.from_id if src is None else edge.to_id
                raise UnknownEndpointError(f"edge endpoint {missing!r} not in graph")
            if (src.kind, dst.kind) not in LEGAL_ENDPOINTS[edge.relation]:
                raise IllegalRelationError(
                    f"{src.kind.value} -{edge.relation.value}-> {dst.kind.value} "
                    "is not a legal combination"
                )
            if edge.key() in self._edge_keys:
                return
            if edge.relation in CAUSAL_RELATIONS:
                self._check_causal_cycle(edge, src, dst)
            edge = self._check_temporal(edge, src, dst)
            self._edges.append(edge)
            self._edge_keys.add(edge.key())
            self._out.setdefault(edge.from_id, []).append(edge)
            self._in.setdefault(edge.to_id, []).append(edge)

    def remove_edge(self, edge: EdgeRecord) -> None:
        """Drop a stored edge (used for isPartOf maintenance of containers)."""
        with self._lock:
            if edge.key() not in self._edge_keys:
                return
            self._edge_keys.discard(edge.key())
            self._edges = [e for e in self._edges if e.key() != edge.key()]
            self._out[edge.from_id] = [
                e for e in self._out.get(edge.from_id, []) if e.key() != edge.key()
            ]
            self._in[edge.to_id] = [
                e for e in self._in.get(edge.to_id, []) if e.key() != edge.key()
            ]

    def set_attribute(self, node_id: str, key: str, value: str) -> None:
        with self._lock:
            self.node(node_id).attributes[key] = value

    def update_container_interval(self, node_id: str, start: Timestamp, duration: int) -> None:
        with self._lock:
            node = self.node(node_id)
            if not node.is_container:
                raise NotAContainerError(f"{node_id!r} is not a folder or path node")
            if start < 0 or duration < 0:
                raise MalformedNodeError("negative start or duration")
            node.start = start
            node.duration = duration

    def _check_temporal(
        self, edge: EdgeRecord, src: NodeRecord, dst: NodeRecord
    ) -> EdgeRecord:
        rel = edge.relation
        if rel == Relation.HAPPENED_BEFORE:
            if src.kind in (NodeKind.ARTIFACT, NodeKind.AGENT) and src.entity_id != dst.entity_id:
                raise IllegalRelationError(
                    "happenedBefore links instances of a single entity "
                    f"({src.entity_id!r} != {dst.entity_id!r})"
                )
            if src.timestamp >= dst.timestamp:  # type: ignore[operator]
                raise TemporalViolationError(
                    f"happenedBefore requires t({edge.from_id}) < t({edge.to_id})"
                )
            want = dst.timestamp - src.timestamp  # type: ignore[operator]
            return self._with_weight(edge, want)
        if rel == Relation.STARTED_BEFORE:
            if src.start >= dst.start:  # type: ignore[operator]
                raise TemporalViolationError(
                    f"startedBefore requires start({edge.from_id}) < start({edge.to_id})"
                )
            return self._with_weight(edge, dst.start - src.start)  # type: ignore[operator]
        if edge.weight is not None:
            raise IllegalRelationError(f"{rel.value} edges carry no weight")
        if rel in (Relation.USED, Relation.WAS_GENERATED_BY, Relation.WAS_CONTROLLED_BY):
            if src.timestamp != dst.timestamp:
                raise TemporalViolationError(
                    f"{rel.value} connects an event and an instance at one timestamp "
                    f"(got {src.timestamp} vs {dst.timestamp})"
                )
        elif rel in (Relation.WAS_TRIGGERED_BY, Relation.WAS_DERIVED_FROM):
            if src.timestamp <= dst.timestamp:  # type: ignore[operator]
                raise TemporalViolationError(
                    f"{rel.value} requires t({edge.from_id}) > t({edge.to_id})"
                )
        elif rel == Relation.IS_PART_OF:
            lo, hi = dst.interval()
            anchor = src.anchor()
            if not lo <= anchor <= hi:
                raise TemporalViolationError(
                    f"member {edge.from_id!r} at t={anchor} outside container "
                    f"window [{lo}, {hi}]"
                )
        return edge

    @staticmethod
    def _with_weight(edge: EdgeRecord, want: int) -> EdgeRecord:
        if edge.weight is None:
            return EdgeRecord(edge.from_id, edge.to_id, edge.relation, want)
        if edge.weight != want:
            raise TemporalViolationError(
                f"{edge.relation.value} weight {edge.weight} != timestamp difference {want}"
            )
        return edge

    def _check_causal_cycle(self, edge: EdgeRecord, src: NodeRecord, dst: NodeRecord) -> None:
        # Causal edges never increase the timestamp along their direction, so a
        # cycle through the new edge needs a stored causal path dst ->* src,
        # which is only possible when t(src) <= t(dst).
        if src.timestamp > dst.timestamp:  # type: ignore[operator]
            return
        same_level_only = src.timestamp == dst.timestamp
        stack = [edge.to_id]
        seen = {edge.to_id}
        while stack:
            current = stack.pop()
            if current == edge.from_id:
                raise CycleIntroducedError(
                    f"edge {edge.from_id!r} -{edge.relation.value}-> {edge.to_id!r} "
                    "closes a causality cycle"
                )
            for out in self._out.get(current, ()):
                if out.relation not in CAUSAL_RELATIONS or out.to_id in seen:
                    continue
                if same_level_only and self._nodes[out.to_id].timestamp != src.timestamp:
                    continue
                seen.add(out.to_id)
                stack.append(out.to_id)

    # -- queries -----------------------------------------------------------

    def instances_of(self, entity_id: str) -> list[NodeRecord]:
        """All nodes of one entity, ordered by time (then node id)."""
        ids = self._by_entity.get(entity_id, [])
        return sorted(
            (self._nodes[i] for i in ids), key=lambda n: (n.anchor(), n.node_id)
        )

    def window(self, tau1: Timestamp, tau2: Timestamp) -> "TpmGraph":
        """Subgraph of nodes whose time intersects [tau1, tau2], with edges

        whose endpoints both survive.
        """
        if tau1 > tau2:
            raise InvalidIntervalError(f"window requires tau1 <= tau2 (got {tau1} > {tau2})")
        keep: dict[str, NodeRecord] = {}
        for node in self._nodes.values():
            lo, hi = node.interval()
            if lo <= tau2 and hi >= tau1:
                keep[node.node_id] = node
        edges = [e for e in self._edges if e.from_id in keep and e.to_id in keep]
        return TpmGraph.from_validated(keep.values(), edges)

    def inherited_causal_edges(self, container_id: str) -> list[EdgeRecord]:
        """Derived (never stored) causal edges a folder/path inherits from members.

        A container spanning [t_s, t_s+d] inherits, from its member events:
        used artifacts and controlling agents inside the window, generated
        artifacts inside the window, and trigger sources strictly before t_s.
        """
        container = self.node(container_id)
        if not container.is_container:
            raise NotAContainerError(f"{container_id!r} is not a folder or path node")
        lo, hi = container.interval()
        members = [e.from_id for e in self.in_edges(container_id) if e.relation == Relation.IS_PART_OF]
        derived: list[EdgeRecord] = []
        seen: set[tuple[str, str, str]] = set()

        def emit(from_id: str, relation: Relation, to_id: str) -> None:
            key = (from_id, relation.value, to_id)
            if key not in seen:
                seen.add(key)
                derived.append(EdgeRecord(from_id, to_id, relation))

        for member_id in members:
            member = self._nodes[member_id]
            if member.kind != NodeKind.EVENT:
                continue
            for edge in self.out_edges(member_id):
                other = self._nodes[edge.to_id]
                if edge.relation == Relation.USED and lo <= other.timestamp <= hi:  # type: ignore[operator]
                    emit(container_id, Relation.USED, edge.to_id)
                elif edge.relation == Relation.WAS_CONTROLLED_BY and lo <= other.timestamp <= hi:  # type: ignore[operator]
                    emit(container_id, Relation.WAS_CONTROLLED_BY, edge.to_id)
                elif edge.relation == Relation.WAS_TRIGGERED_BY and other.timestamp < lo:  # type: ignore[operator]
                    emit(container_id, Relation.WAS_TRIGGERED_BY, edge.to_id)
            for edge in self.in_edges(member_id):
                if edge.relation != Relation.WAS_GENERATED_BY:
                    continue
                artifact = self._nodes[edge.from_id]
                if lo <= artifact.timestamp <= hi:  # type: ignore[operator]
                    emit(edge.from_id, Relation.WAS_GENERATED_BY, container_id)
        return derived

    def members_of(self, container_id: str) -> list[str]:
        container = self.node(container_id)
        if not container.is_container:
            raise NotAContainerError(f"{container_id!r} is not a folder or path node")
        return [e.from_id for e in self.in_edges(container_id) if e.relation == Relation.IS_PART_OF]

    # -- invariants & helpers ------------------------------------------------

    def validate(self) -> list[str]:
        """Full invariant scan; returns human-readable violations (empty = ok)."""
        problems: list[str] = []
        for edge in self._edges:
            src, dst = self._nodes.get(edge.from_id), self._nodes.get(edge.to_id)
            if src is None or dst is None:
                problems.append(f"dangling edge {edge.key()}")
                continue
            if (src.kind, dst.kind) not in LEGAL_ENDPOINTS[edge.relation]:
                problems.append(f"illegal endpoints for {edge.key()}")
        problems.extend(self._check_chains())
        if self._causal_cycle_exists():
            problems.append("causality subgraph contains a cycle")
        return problems

    def _check_chains(self) -> list[str]:
        problems: list[str] = []
        for entity_id, ids in self._by_entity.items():
            for kind in (NodeKind.ARTIFACT, NodeKind.AGENT):
                chain = sorted(
                    (self._nodes[i] for i in ids if self._nodes[i].kind == kind),
                    key=lambda n: n.timestamp,  # type: ignore[arg-type,return-value]
                )
                if len(chain) < 2:
                    continue
                expected = {
                    (a.node_id, b.node_id): b.timestamp - a.timestamp  # type: ignore[operator]
                    for a, b in zip(chain, chain[1:])
                }
                actual: dict[tuple[str, str], int | None] = {}
                for node in chain:
                    for edge in self.out_edges(node.node_id):
                        if (
                            edge.relation == Relation.HAPPENED_BEFORE
                            and self._nodes[edge.to_id].entity_id == entity_id
                        ):
                            actual[(edge.from_id, edge.to_id)] = edge.weight
                if set(actual) != set(expected):
                    problems.append(f"entity {entity_id!r}: broken happenedBefore chain")
                    continue
                for pair, weight in expected.items():
                    if actual[pair] != weight:
                        problems.append(
                            f"entity {entity_id!r}: happenedBefore weight mismatch at {pair}"
                        )
        return problems

    def _causal_cycle_exists(self) -> bool:
        color: dict[str, int] = {}

        def dfs(node_id: str) -> bool:
            color[node_id] = 1
            for edge in self._out.get(node_id, ()):
                if edge.relation not in CAUSAL_RELATIONS:
                    continue
                state = color.get(edge.to_id, 0)
                if state == 1:
                    return True
                if state == 0 and dfs(edge.to_id):
                    return True
            color[node_id] = 2
            return False

        return any(color.get(n, 0) == 0 and dfs(n) for n in list(self._nodes))

    @classmethod
    def from_validated(
        cls, nodes: Iterable[NodeRecord], edges: Iterable[EdgeRecord]
    ) -> "TpmGraph":
        """Build a graph from content already known to satisfy the invariants."""
        graph = cls()
        for node in nodes:
            graph._nodes[node.node_id] = node
            graph._by_entity.setdefault(node.entity_id, []).append(node.node_id)
        for edge in edges:
            graph._edges.append(edge)
            graph._edge_keys.add(edge.key())
            graph._out.setdefault(edge.from_id, []).append(edge)
            graph._in.setdefault(edge.to_id, []).append(edge)
        return graph

    def subgraph(self, node_ids: Iterable[str]) -> "TpmGraph":
        wanted = {i for i in node_ids if i in self._nodes}
        edges = [e for e in self._edges if e.from_id in wanted and e.to_id in wanted]
        return TpmGraph.from_validated((self._nodes[i] for i in sorted(wanted)), edges)

    def canonical(self) -> tuple:
        nodes = tuple(
            sorted(
                (
                    n.node_id,
                    n.kind.value,
                    n.entity_id,
                    n.timestamp,
                    n.start,
                    n.duration,
                    tuple(sorted(n.attributes.items())),
                    n.timed,
                )
                for n in self._nodes.values()
            )
        )
        edges = tuple(sorted((e.from_id, e.relation.value, e.to_id, e.weight) for e in self._edges))
        return (nodes, edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TpmGraph):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self) -> int:  # pragma: no cover - graphs are not dict keys
        return hash(self.canonical())

    def filtered_edges(self, predicate: Callable[[EdgeRecord], bool]) -> list[EdgeRecord]:
        return [e for e in self._edges if predicate(e)]
