"""Domain types for temporal provenance graphs.

Nodes are per-timestamp instances of entities (events, artifact instances,
agent instances) or timed containers (folder and path nodes carrying a
start timestamp and a duration). Edges are causal, temporal or aggregation
relationships with per-relation endpoint and ordering rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

Timestamp = int


class TpmError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateNodeIdError(TpmError):
    pass


class MalformedNodeError(TpmError):
    pass


class UnknownEndpointError(TpmError):
    pass


class IllegalRelationError(TpmError):
    pass


class TemporalViolationError(TpmError):
    pass


class CycleIntroducedError(TpmError):
    pass


class InvalidIntervalError(TpmError):
    pass


class NotAContainerError(TpmError):
    pass


class GraphTooLargeError(TpmError):
    pass


class ConversionError(TpmError):
    pass


class NodeKind(str, Enum):
    EVENT = "event"
    ARTIFACT = "artifact"
    AGENT = "agent"
    FOLDER = "folder"
    PATH = "path"


INSTANCE_KINDS = frozenset({NodeKind.EVENT, NodeKind.ARTIFACT, NodeKind.AGENT})
CONTAINER_KINDS = frozenset({NodeKind.FOLDER, NodeKind.PATH})


class Relation(str, Enum):
    USED = "used"
    WAS_GENERATED_BY = "wasGeneratedBy"
    WAS_TRIGGERED_BY = "wasTriggeredBy"
    WAS_DERIVED_FROM = "wasDerivedFrom"
    WAS_CONTROLLED_BY = "wasControlledBy"
    HAPPENED_BEFORE = "happenedBefore"
    STARTED_BEFORE = "startedBefore"
    IS_PART_OF = "isPartOf"


#: Relations forming the (acyclic) causality subgraph.
CAUSAL_RELATIONS = frozenset(
    {
        Relation.USED,
        Relation.WAS_GENERATED_BY,
        Relation.WAS_TRIGGERED_BY,
        Relation.WAS_DERIVED_FROM,
    }
)

#: Relations carrying a temporal-distance weight.
WEIGHTED_RELATIONS = frozenset({Relation.HAPPENED_BEFORE, Relation.STARTED_BEFORE})

#: Legal (from-kind, to-kind) pairs per stored relation. Container causal
#: edges (a folder "used" an artifact, ...) are derived views, never stored.
LEGAL_ENDPOINTS: dict[Relation, frozenset[tuple[NodeKind, NodeKind]]] = {
    Relation.USED: frozenset({(NodeKind.EVENT, NodeKind.ARTIFACT)}),
    Relation.WAS_GENERATED_BY: frozenset({(NodeKind.ARTIFACT, NodeKind.EVENT)}),
    Relation.WAS_TRIGGERED_BY: frozenset({(NodeKind.EVENT, NodeKind.EVENT)}),
    Relation.WAS_DERIVED_FROM: frozenset({(NodeKind.ARTIFACT, NodeKind.ARTIFACT)}),
    Relation.WAS_CONTROLLED_BY: frozenset({(NodeKind.EVENT, NodeKind.AGENT)}),
    Relation.HAPPENED_BEFORE: frozenset(
        {
            (NodeKind.EVENT, NodeKind.EVENT),
            (NodeKind.ARTIFACT, NodeKind.ARTIFACT),
            (NodeKind.AGENT, NodeKind.AGENT),
        }
    ),
    Relation.STARTED_BEFORE: frozenset(
        {(NodeKind.FOLDER, NodeKind.FOLDER), (NodeKind.PATH, NodeKind.PATH)}
    ),
    Relation.IS_PART_OF: frozenset(
        (k, c) for k in NodeKind for c in (NodeKind.FOLDER, NodeKind.PATH)
    ),
}


def relation_from_name(name: str) -> Relation:
    try:
        return Relation(name)
    except ValueError:
        raise IllegalRelationError(f"unknown relation {name!r}") from None


@dataclass
class NodeRecord:
    """One graph node: an entity instance at a point in time, or a timed container.

    Instance kinds (event/artifact/agent) carry exactly one ``timestamp``;
    container kinds (folder/path) carry ``start`` and ``duration`` and may be
    ``timed`` (kept current by an agent). ``attributes`` holds descriptive
    text attributes such as type and description.
    """

    node_id: str
    kind: NodeKind
    entity_id: str
    timestamp: Timestamp | None = None
    start: Timestamp | None = None
    duration: int | None = None
    attributes: dict[str, str] = field(default_factory=dict)
    timed: bool = False

    def __post_init__(self) -> None:
        if not self.node_id:
            raise MalformedNodeError("node_id must be non-empty")
        if not self.entity_id:
            raise MalformedNodeError(f"node {self.node_id!r}: entity_id must be non-empty")
        if self.kind in INSTANCE_KINDS:
            if self.timestamp is None:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: {self.kind.value} nodes need a timestamp"
                )
            if self.start is not None or self.duration is not None:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: {self.kind.value} nodes carry no duration"
                )
            if self.timestamp < 0:
                raise MalformedNodeError(f"node {self.node_id!r}: negative timestamp")
            if self.timed:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: only folder/path nodes can be timed"
                )
        else:
            if self.start is None or self.duration is None:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: {self.kind.value} nodes need (start, duration)"
                )
            if self.timestamp is not None:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: {self.kind.value} nodes carry no bare timestamp"
                )
            if self.start < 0 or self.duration < 0:
                raise MalformedNodeError(
                    f"node {self.node_id!r}: negative start or duration"
                )

    @property
    def is_container(self) -> bool:
        return self.kind in CONTAINER_KINDS

    def anchor(self) -> Timestamp:
        """The node's ordering timestamp: instance timestamp or container start."""
        return self.timestamp if self.timestamp is not None else self.start  # type: ignore[return-value]

    def interval(self) -> tuple[Timestamp, Timestamp]:
        """Closed time interval occupied by the node."""
        if self.is_container:
            return (self.start, self.start + self.duration)  # type: ignore[operator]
        return (self.timestamp, self.timestamp)  # type: ignore[return-value]

    def copy(self) -> "NodeRecord":
        return NodeRecord(
            node_id=self.node_id,
            kind=self.kind,
            entity_id=self.entity_id,
            timestamp=self.timestamp,
            start=self.start,
            duration=self.duration,
            attributes=dict(self.attributes),
            timed=self.timed,
        )


@dataclass(frozen=True)
class EdgeRecord:
    """A directed, typed edge; happenedBefore/startedBefore edges carry a weight."""

    from_id: str
    to_id: str
    relation: Relation
    weight: int | None = None

    def key(self) -> tuple[str, str, str]:
        return (self.from_id, self.relation.value, self.to_id)


@dataclass(frozen=True)
class Path:
    """An alternating node/edge walk through a graph (nodes has one more element)."""

    nodes: tuple[str, ...]
    edges: tuple[EdgeRecord, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) != len(self.edges) + 1:
            raise ValueError("path must alternate nodes and edges")

    def sequence(self) -> tuple:
        """Flattened (node, edge, node, ...) element sequence."""
        out: list = [self.nodes[0]]
        for edge, node in zip(self.edges, self.nodes[1:]):
            out.append(edge)
            out.append(node)
        return tuple(out)

    def sort_key(self) -> tuple:
        return (len(self.nodes), self.nodes, tuple(e.key() for e in self.edges))

    def is_subwalk_of(self, other: "Path") -> bool:
        """True if this walk appears as a contiguous, node-aligned slice of other."""
        if len(self.nodes) > len(other.nodes):
            return False
        for off in range(len(other.nodes) - len(self.nodes) + 1):
            if (
                other.nodes[off : off + len(self.nodes)] == self.nodes
                and other.edges[off : off + len(self.edges)] == self.edges
            ):
                return True
        return False
