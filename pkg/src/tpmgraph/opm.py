"""Parsing and validation of annotated OPM causality graphs.

File format (UTF-8, line oriented, ``#`` comments)::

    node <id> <kind> [key=value ...]
    edge <from> <relation> <to> [t=<ticks>] [key=value ...]

Kinds are artifact/process/agent; relations are the five OPM causal
dependencies. ``t`` annotates the interaction instant (use, generation,
control, trigger or derivation time). Parsing is split from validation:
a file with dangling or temporally inconsistent edges still parses, and
``validate_opm`` reports every violation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable, TextIO

from .lineio import LineSyntaxError, format_kv, parse_kv, quote, split_tokens
from .model import Timestamp, TpmError


class OpmKind(str, Enum):
    ARTIFACT = "artifact"
    PROCESS = "process"
    AGENT = "agent"


class OpmRelation(str, Enum):
    USED = "used"
    WAS_GENERATED_BY = "wasGeneratedBy"
    WAS_TRIGGERED_BY = "wasTriggeredBy"
    WAS_DERIVED_FROM = "wasDerivedFrom"
    WAS_CONTROLLED_BY = "wasControlledBy"


#: Legal (from-kind, to-kind) pairs for OPM causal edges.
OPM_ENDPOINTS: dict[OpmRelation, tuple[OpmKind, OpmKind]] = {
    OpmRelation.USED: (OpmKind.PROCESS, OpmKind.ARTIFACT),
    OpmRelation.WAS_GENERATED_BY: (OpmKind.ARTIFACT, OpmKind.PROCESS),
    OpmRelation.WAS_TRIGGERED_BY: (OpmKind.PROCESS, OpmKind.PROCESS),
    OpmRelation.WAS_DERIVED_FROM: (OpmKind.ARTIFACT, OpmKind.ARTIFACT),
    OpmRelation.WAS_CONTROLLED_BY: (OpmKind.PROCESS, OpmKind.AGENT),
}


class UnknownKindError(TpmError):
    pass


class UnknownRelationError(TpmError):
    pass


@dataclass
class OpmNode:
    node_id: str
    kind: OpmKind
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OpmEdge:
    from_id: str
    relation: OpmRelation
    to_id: str
    time: Timestamp | None = None
    attributes: tuple[tuple[str, str], ...] = ()

    def key(self) -> tuple:
        return (self.from_id, self.relation.value, self.to_id, self.time, self.attributes)


@dataclass
class OpmGraph:
    """An ingested OPM causality graph; may be invalid until validated."""

    nodes: dict[str, OpmNode] = field(default_factory=dict)
    edges: list[OpmEdge] = field(default_factory=list)

    def nodes_of_kind(self, kind: OpmKind) -> list[OpmNode]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def counts(self) -> dict[str, int]:
        return {
            "artifacts": len(self.nodes_of_kind(OpmKind.ARTIFACT)),
            "processes": len(self.nodes_of_kind(OpmKind.PROCESS)),
            "agents": len(self.nodes_of_kind(OpmKind.AGENT)),
            "edges": len(self.edges),
        }

    def canonical(self) -> tuple:
        nodes = tuple(
            sorted((n.node_id, n.kind.value, tuple(sorted(n.attributes.items())))
                   for n in self.nodes.values())
        )
        return (nodes, tuple(sorted(e.key() for e in self.edges)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OpmGraph):
            return NotImplemented
        return self.canonical() == other.canonical()


def parse_opm(source: str | bytes | TextIO | BinaryIO) -> OpmGraph:
    """Parse the OPM line format into an OpmGraph.

    Unknown attribute keys are preserved verbatim. Dangling edge endpoints
    are accepted here and reported by validate_opm. Raises LineSyntaxError,
    UnknownKindError or UnknownRelationError with the offending position.
    """
    text = _as_text(source)
    graph = OpmGraph()
    seen_edges: set[tuple] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = split_tokens(raw, line_no)
        if not tokens:
            continue
        head, col = tokens[0]
        if head == "node":
            if len(tokens) < 3:
                raise LineSyntaxError("node lines need: node <id> <kind>", line_no, col)
            node_id = tokens[1][0]
            kind_token, kind_col = tokens[2]
            try:
                kind = OpmKind(kind_token)
            except ValueError:
                raise UnknownKindError(
                    f"line {line_no}, column {kind_col}: unknown node kind {kind_token!r}"
                ) from None
            if node_id in graph.nodes:
                raise LineSyntaxError(f"duplicate node id {node_id!r}", line_no, tokens[1][1])
            attrs = _parse_attrs(tokens[3:], line_no)
            graph.nodes[node_id] = OpmNode(node_id, kind, attrs)
        elif head == "edge":
            if len(tokens) < 4:
                raise LineSyntaxError(
                    "edge lines need: edge <from> <relation> <to>", line_no, col
                )
            rel_token, rel_col = tokens[2]
            try:
                relation = OpmRelation(rel_token)
            except ValueError:
                raise UnknownRelationError(
                    f"line {line_no}, column {rel_col}: unknown relation {rel_token!r}"
                ) from None
            time: Timestamp | None = None
            extras: list[tuple[str, str]] = []
            for token, tcol in tokens[4:]:
                kv = parse_kv(token)
                if kv is None:
                    raise LineSyntaxError(
                        f"expected key=value, got {token!r}", line_no, tcol
                    )
                key, value = kv
                if key == "t":
                    try:
                        time = int(value)
                    except ValueError:
                        raise LineSyntaxError(
                            f"t= wants an integer tick, got {value!r}", line_no, tcol
                        ) from None
                    if time < 0:
                        raise LineSyntaxError("ticks are non-negative", line_no, tcol)
                else:
                    extras.append((key, value))
            edge = OpmEdge(tokens[1][0], relation, tokens[3][0], time, tuple(extras))
            if edge.key() not in seen_edges:
                seen_edges.add(edge.key())
                graph.edges.append(edge)
        else:
            raise LineSyntaxError(f"unknown directive {head!r}", line_no, col)
    return graph


def serialize_opm(graph: OpmGraph) -> str:
    """Canonical text form: sorted nodes then sorted edges, stable quoting."""
    lines: list[str] = []
    for node in sorted(graph.nodes.values(), key=lambda n: n.node_id):
        parts = ["node", quote(node.node_id), node.kind.value]
        parts += [format_kv(k, v) for k, v in sorted(node.attributes.items())]
        lines.append(" ".join(parts))
    for edge in sorted(graph.edges, key=lambda e: e.key()):
        parts = ["edge", quote(edge.from_id), edge.relation.value, quote(edge.to_id)]
        if edge.time is not None:
            parts.append(f"t={edge.time}")
        parts += [format_kv(k, v) for k, v in edge.attributes]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class ValidationEntry:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass
class ValidationReport:
    entries: list[ValidationEntry] = field(default_factory=list)

    @property
    def errors(self) -> list[ValidationEntry]:
        return [e for e in self.entries if e.severity == "error"]

    @property
    def warnings(self) -> list[ValidationEntry]:
        return [e for e in self.entries if e.severity == "warning"]

    def is_empty(self) -> bool:
        return not self.entries

    def add(self, severity: str, code: str, message: str) -> None:
        self.entries.append(ValidationEntry(severity, code, message))

    def format(self) -> str:
        if not self.entries:
            return "validation: clean"
        return "\n".join(f"{e.severity}: [{e.code}] {e.message}" for e in self.entries)


def interaction_times(graph: OpmGraph) -> dict[str, list[Timestamp]]:
    """Annotated interaction instants per node id, sorted and deduplicated.

    Artifacts interact when used, generated, or derived (the derived side);
    agents when controlling; processes at every annotated incident edge on
    their side of the interaction.
    """
    times: dict[str, set[Timestamp]] = {n: set() for n in graph.nodes}
    for edge in graph.edges:
        if edge.time is None:
            continue
        sides = _interacting_sides(edge)
        for node_id in sides:
            if node_id in times:
                times[node_id].add(edge.time)
    return {n: sorted(ts) for n, ts in times.items()}


def _interacting_sides(edge: OpmEdge) -> tuple[str, ...]:
    if edge.relation == OpmRelation.USED:
        return (edge.from_id, edge.to_id)  # process, artifact
    if edge.relation == OpmRelation.WAS_GENERATED_BY:
        return (edge.from_id, edge.to_id)  # artifact, process
    if edge.relation == OpmRelation.WAS_CONTROLLED_BY:
        return (edge.from_id, edge.to_id)  # process, agent
    if edge.relation == OpmRelation.WAS_TRIGGERED_BY:
        return (edge.from_id,)  # the triggered process starts here
    return (edge.from_id,)  # derivation stamps the derived artifact only


def validate_opm(graph: OpmGraph) -> ValidationReport:
    """Report every rule violation; an empty report means the graph converts cleanly."""
    report = ValidationReport()
    for edge in graph.edges:
        src = graph.nodes.get(edge.from_id)
        dst = graph.nodes.get(edge.to_id)
        if src is None:
            report.add("error", "DanglingEndpoint", f"edge references missing node {edge.from_id!r}")
        if dst is None:
            report.add("error", "DanglingEndpoint", f"edge references missing node {edge.to_id!r}")
        if src is None or dst is None:
            continue
        want = OPM_ENDPOINTS[edge.relation]
        if (src.kind, dst.kind) != want:
            report.add(
                "error",
                "IllegalRelation",
                f"{src.kind.value} -{edge.relation.value}-> {dst.kind.value} "
                f"(expected {want[0].value} -> {want[1].value})",
            )
        if edge.time is None:
            report.add(
                "warning",
                "MissingAnnotation",
                f"edge {edge.from_id!r} -{edge.relation.value}-> {edge.to_id!r} "
                "has no time annotation; conversion will synthesize one",
            )
    times = interaction_times(graph)
    for process in graph.nodes_of_kind(OpmKind.PROCESS):
        if not times.get(process.node_id):
            incident = any(
                process.node_id in (e.from_id, e.to_id) for e in graph.edges
            )
            if incident:
                report.add(
                    "warning",
                    "NoAnnotatedInteraction",
                    f"process {process.node_id!r} has no annotated interaction; "
                    "conversion will use tick 0",
                )
    for edge in graph.edges:
        if edge.time is None or edge.from_id not in graph.nodes or edge.to_id not in graph.nodes:
            continue
        if edge.relation == OpmRelation.WAS_DERIVED_FROM:
            earlier = [t for t in times.get(edge.to_id, []) if t < edge.time]
            if not earlier:
                report.add(
                    "error",
                    "TemporalInconsistency",
                    f"{edge.from_id!r} wasDerivedFrom {edge.to_id!r} at t={edge.time}, "
                    f"but {edge.to_id!r} has no interaction strictly earlier",
                )
        elif edge.relation == OpmRelation.WAS_TRIGGERED_BY:
            earlier = [t for t in times.get(edge.to_id, []) if t < edge.time]
            if not earlier:
                report.add(
                    "error",
                    "TemporalInconsistency",
                    f"{edge.from_id!r} wasTriggeredBy {edge.to_id!r} at t={edge.time}, "
                    f"but {edge.to_id!r} has no event strictly earlier",
                )
    _check_cycles(graph, report)
    return report


def _check_cycles(graph: OpmGraph, report: ValidationReport) -> None:
    # DFS over the four causality relations; each back edge closes one cycle.
    # A cycle whose edges are all annotated with non-identical ticks is only
    # a warning: per-instant expansion dissolves it.
    causal = [e for e in graph.edges if e.relation != OpmRelation.WAS_CONTROLLED_BY
              and e.from_id in graph.nodes and e.to_id in graph.nodes]
    out: dict[str, list[OpmEdge]] = {}
    for edge in causal:
        out.setdefault(edge.from_id, []).append(edge)
    color: dict[str, int] = {}
    stack_edges: list[OpmEdge] = []
    on_stack: dict[str, int] = {}

    def walk(node_id: str) -> None:
        color[node_id] = 1
        on_stack[node_id] = len(stack_edges)
        for edge in out.get(node_id, ()):  # insertion order: deterministic
            state = color.get(edge.to_id, 0)
            if state == 1:
                cycle = stack_edges[on_stack[edge.to_id]:] + [edge]
                annots = [e.time for e in cycle]
                resolvable = all(t is not None for t in annots) and len(set(annots)) > 1
                names = " -> ".join([cycle[0].from_id] + [e.to_id for e in cycle])
                report.add(
                    "warning" if resolvable else "error",
                    "CausalityCycle",
                    f"causality cycle {names}"
                    + (" (temporally resolvable)" if resolvable else ""),
                )
            elif state == 0:
                stack_edges.append(edge)
                walk(edge.to_id)
                stack_edges.pop()
        del on_stack[node_id]
        color[node_id] = 2

    for node_id in graph.nodes:
        if color.get(node_id, 0) == 0:
            walk(node_id)


def _parse_attrs(tokens: Iterable[tuple[str, int]], line_no: int) -> dict[str, str]:
    attrs: dict[str, str] = {}
    for token, col in tokens:
        kv = parse_kv(token)
        if kv is None:
            raise LineSyntaxError(f"expected key=value, got {token!r}", line_no, col)
        attrs[kv[0]] = kv[1]
    return attrs


def _as_text(source: str | bytes | TextIO | BinaryIO) -> str:
    if isinstance(source, str):
        return source
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def load_opm_file(path: str) -> OpmGraph:
    with io.open(path, "rb") as handle:
        return parse_opm(handle)
