"""OPM-to-TPM conversion.

Three expansion steps: one artifact instance per annotated interaction time,
one agent instance per control time, one event per (process, time) grouped
into process folders; consecutive instances are chained with weighted
happenedBefore edges and folder instances of one process type with
startedBefore edges. Causal edges are then re-linked to the instance pair
at their annotation time.

Attribute conventions on produced nodes: ``type`` is the coarse kind
(event/artifact/agent; folders get type=process). An OPM process's own
``type`` attribute becomes ``process_type`` (it also keys the startedBefore
chains); a ``type`` attribute on artifacts or agents becomes ``subtype``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import TpmGraph
from .model import (
    ConversionError,
    EdgeRecord,
    NodeKind,
    NodeRecord,
    Relation,
    Timestamp,
)
from .opm import (
    OpmEdge,
    OpmGraph,
    OpmKind,
    OpmRelation,
    interaction_times,
    validate_opm,
)


@dataclass
class ConversionReport:
    artifact_instances_created: int = 0
    agent_instances_created: int = 0
    events_created: int = 0
    folders_created: int = 0
    happened_before_edges: int = 0
    started_before_edges: int = 0
    causal_edges: int = 0
    warnings: list[str] = field(default_factory=list)

    def format(self) -> str:
        rows = [
            ("artifact instances", self.artifact_instances_created),
            ("agent instances", self.agent_instances_created),
            ("events", self.events_created),
            ("process folders", self.folders_created),
            ("happenedBefore edges", self.happened_before_edges),
            ("startedBefore edges", self.started_before_edges),
            ("re-linked causal edges", self.causal_edges),
        ]
        width = max(len(label) for label, _ in rows)
        lines = [f"{label.ljust(width)}  {count}" for label, count in rows]
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines)


def instance_id(entity_id: str, t: Timestamp) -> str:
    return f"{entity_id}@{t}"


def folder_id(label: str, start: Timestamp) -> str:
    return f"{label}#{start}"


def resolve_annotations(
    opm: OpmGraph,
) -> tuple[list[tuple[OpmEdge, Timestamp]], list[str]]:
    """Pair every edge with its interaction time, synthesizing missing ones.

    An unannotated process-incident edge gets the process's earliest
    annotated time (tick 0 when the process has none); an unannotated
    derivation gets the derived artifact's latest annotated time.
    """
    annotated = interaction_times(opm)
    warnings: list[str] = []
    resolved: list[tuple[OpmEdge, Timestamp]] = []
    for edge in opm.edges:
        if edge.time is not None:
            resolved.append((edge, edge.time))
            continue
        if edge.relation == OpmRelation.WAS_DERIVED_FROM:
            times = annotated.get(edge.from_id, [])
            t = times[-1] if times else 0
        else:
            pid = edge.to_id if edge.relation == OpmRelation.WAS_GENERATED_BY else edge.from_id
            times = annotated.get(pid, [])
            t = times[0] if times else 0
        warnings.append(
            f"edge {edge.from_id!r} -{edge.relation.value}-> {edge.to_id!r}: "
            f"no annotation, synthesized t={t}"
        )
        resolved.append((edge, t))
    return resolved, warnings


def _resolved_instance_times(
    opm: OpmGraph, resolved: list[tuple[OpmEdge, Timestamp]]
) -> dict[str, list[Timestamp]]:
    times: dict[str, set[Timestamp]] = {n: set() for n in opm.nodes}
    for edge, t in resolved:
        if edge.relation == OpmRelation.WAS_DERIVED_FROM:
            sides = (edge.from_id,)
        elif edge.relation == OpmRelation.WAS_TRIGGERED_BY:
            sides = (edge.from_id,)
        else:
            sides = (edge.from_id, edge.to_id)
        for node_id in sides:
            if node_id in times:
                times[node_id].add(t)
    return {n: sorted(ts) for n, ts in times.items()}


def _carried_attributes(node_kind: OpmKind, attrs: dict[str, str]) -> dict[str, str]:
    carried: dict[str, str] = {}
    for key, value in sorted(attrs.items()):
        if key == "type":
            carried["process_type" if node_kind == OpmKind.PROCESS else "subtype"] = value
        elif key == "process_instance":
            continue
        else:
            carried[key] = value
    return carried


def _expand_chain(
    opm: OpmGraph,
    graph: TpmGraph,
    opm_kind: OpmKind,
    node_kind: NodeKind,
    times: dict[str, list[Timestamp]],
    report_warnings: list[str],
) -> tuple[int, int]:
    created = edges = 0
    for node in sorted(opm.nodes_of_kind(opm_kind), key=lambda n: n.node_id):
        ticks = times.get(node.node_id, [])
        if not ticks:
            report_warnings.append(
                f"{opm_kind.value} {node.node_id!r} has no interactions; no instances created"
            )
            continue
        attrs = _carried_attributes(opm_kind, node.attributes)
        for t in ticks:
            graph.add_node(
                NodeRecord(
                    node_id=instance_id(node.node_id, t),
                    kind=node_kind,
                    entity_id=node.node_id,
                    timestamp=t,
                    attributes={"type": node_kind.value, **attrs},
                )
            )
            created += 1
        for a, b in zip(ticks, ticks[1:]):
            graph.add_edge(
                EdgeRecord(
                    instance_id(node.node_id, a),
                    instance_id(node.node_id, b),
                    Relation.HAPPENED_BEFORE,
                    b - a,
                )
            )
            edges += 1
    return created, edges


def expand_artifacts(opm: OpmGraph) -> TpmGraph:
    """Step 1: one artifact instance per annotated interaction time, chained."""
    graph = TpmGraph()
    resolved, _ = resolve_annotations(opm)
    times = _resolved_instance_times(opm, resolved)
    _expand_chain(opm, graph, OpmKind.ARTIFACT, NodeKind.ARTIFACT, times, [])
    return graph


def expand_agents(opm: OpmGraph) -> TpmGraph:
    """Step 2: one agent instance per control time, chained."""
    graph = TpmGraph()
    resolved, _ = resolve_annotations(opm)
    times = _resolved_instance_times(opm, resolved)
    _expand_chain(opm, graph, OpmKind.AGENT, NodeKind.AGENT, times, [])
    return graph


def expand_processes(opm: OpmGraph) -> TpmGraph:
    """Step 3: events per (process, time), grouped into process folders."""
    graph = TpmGraph()
    resolved, _ = resolve_annotations(opm)
    times = _resolved_instance_times(opm, resolved)
    _expand_process_step(opm, graph, times, [])
    return graph


def _expand_process_step(
    opm: OpmGraph,
    graph: TpmGraph,
    times: dict[str, list[Timestamp]],
    warnings: list[str],
) -> tuple[int, int, int, int]:
    """Returns (events, folders, happened_before, started_before) counts."""
    processes = sorted(opm.nodes_of_kind(OpmKind.PROCESS), key=lambda n: n.node_id)
    groups: dict[str, list] = {}
    for process in processes:
        label = process.attributes.get("process_instance", process.node_id)
        groups.setdefault(label, []).append(process)

    events = folders = hb = sb = 0
    chains: dict[str, list[tuple[Timestamp, str]]] = {}
    for label in sorted(groups):
        members = groups[label]
        group_events: list[tuple[Timestamp, str]] = []
        for process in members:
            attrs = _carried_attributes(OpmKind.PROCESS, process.attributes)
            for t in times.get(process.node_id, []):
                event_id = instance_id(process.node_id, t)
                graph.add_node(
                    NodeRecord(
                        node_id=event_id,
                        kind=NodeKind.EVENT,
                        entity_id=process.node_id,
                        timestamp=t,
                        attributes={"type": "event", "process": process.node_id, **attrs},
                    )
                )
                group_events.append((t, event_id))
                events += 1
        if not group_events:
            continue
        group_events.sort()
        start = group_events[0][0]
        duration = group_events[-1][0] - start
        fid = folder_id(label, start)
        ptypes = sorted({p.attributes.get("type") for p in members if "type" in p.attributes})
        if len(ptypes) > 1:
            warnings.append(f"process instance {label!r} mixes process types {ptypes}")
        folder_attrs = {"type": "process", "label": label}
        if ptypes:
            folder_attrs["process_type"] = ptypes[0]
        graph.add_node(
            NodeRecord(
                node_id=fid,
                kind=NodeKind.FOLDER,
                entity_id=label,
                start=start,
                duration=duration,
                attributes=folder_attrs,
            )
        )
        folders += 1
        for t, event_id in group_events:
            graph.add_edge(EdgeRecord(event_id, fid, Relation.IS_PART_OF))
        for (ta, ida), (tb, idb) in zip(group_events, group_events[1:]):
            if ta == tb:
                warnings.append(
                    f"process instance {label!r}: events {ida!r} and {idb!r} share "
                    f"t={ta}; no happenedBefore edge"
                )
                continue
            graph.add_edge(EdgeRecord(ida, idb, Relation.HAPPENED_BEFORE, tb - ta))
            hb += 1
        chain_key = ptypes[0] if ptypes else label
        chains.setdefault(chain_key, []).append((start, fid))

    for chain_key in sorted(chains):
        folders_of_type = sorted(chains[chain_key])
        for (sa, ida), (sb_, idb) in zip(folders_of_type, folders_of_type[1:]):
            if sa == sb_:
                warnings.append(
                    f"process type {chain_key!r}: folders {ida!r} and {idb!r} share "
                    f"start t={sa}; no startedBefore edge"
                )
                continue
            graph.add_edge(EdgeRecord(ida, idb, Relation.STARTED_BEFORE, sb_ - sa))
            sb += 1
    return events, folders, hb, sb


def convert(opm: OpmGraph, strict: bool = True) -> tuple[TpmGraph, ConversionReport]:
    """Run the full three-step conversion and re-link causal edges.

    With ``strict`` (the default) the graph must validate without errors;
    warnings (missing annotations, temporally resolvable cycles) pass through
    into the report.
    """
    report = ConversionReport()
    if strict:
        validation = validate_opm(opm)
        if validation.errors:
            raise ConversionError(
                "refusing to convert an invalid OPM graph:\n" + validation.format()
            )

    resolved, warnings = resolve_annotations(opm)
    report.warnings.extend(warnings)
    times = _resolved_instance_times(opm, resolved)

    graph = TpmGraph()
    report.artifact_instances_created, hb_a = _expand_chain(
        opm, graph, OpmKind.ARTIFACT, NodeKind.ARTIFACT, times, report.warnings
    )
    report.agent_instances_created, hb_g = _expand_chain(
        opm, graph, OpmKind.AGENT, NodeKind.AGENT, times, report.warnings
    )
    events, folders, hb_e, sb = _expand_process_step(opm, graph, times, report.warnings)
    report.events_created = events
    report.folders_created = folders
    report.happened_before_edges = hb_a + hb_g + hb_e
    report.started_before_edges = sb

    for edge, t in sorted(resolved, key=lambda pair: (pair[1], pair[0].key())):
        if _relink(graph, opm, times, edge, t, report.warnings):
            report.causal_edges += 1

    problems = graph.validate()
    if problems:  # unreachable on validated input; guards the conversion contract
        raise ConversionError("conversion produced an inconsistent graph: " + "; ".join(problems))
    return graph, report


def _relink(
    graph: TpmGraph,
    opm: OpmGraph,
    times: dict[str, list[Timestamp]],
    edge: OpmEdge,
    t: Timestamp,
    warnings: list[str],
) -> bool:
    rel = edge.relation
    if rel == OpmRelation.USED:
        graph.add_edge(
            EdgeRecord(instance_id(edge.from_id, t), instance_id(edge.to_id, t), Relation.USED)
        )
        return True
    if rel == OpmRelation.WAS_GENERATED_BY:
        graph.add_edge(
            EdgeRecord(
                instance_id(edge.from_id, t),
                instance_id(edge.to_id, t),
                Relation.WAS_GENERATED_BY,
            )
        )
        return True
    if rel == OpmRelation.WAS_CONTROLLED_BY:
        graph.add_edge(
            EdgeRecord(
                instance_id(edge.from_id, t),
                instance_id(edge.to_id, t),
                Relation.WAS_CONTROLLED_BY,
            )
        )
        return True
    if rel == OpmRelation.WAS_DERIVED_FROM:
        earlier = [x for x in times.get(edge.to_id, []) if x < t]
        if not earlier:
            warnings.append(
                f"dropped {edge.from_id!r} wasDerivedFrom {edge.to_id!r} at t={t}: "
                "no earlier source instance"
            )
            return False
        graph.add_edge(
            EdgeRecord(
                instance_id(edge.from_id, t),
                instance_id(edge.to_id, earlier[-1]),
                Relation.WAS_DERIVED_FROM,
            )
        )
        return True
    # wasTriggeredBy: triggered event at the annotation time (or the process's
    # earliest event), targeting the triggering process's latest earlier event.
    from_times = times.get(edge.from_id, [])
    if not from_times:
        warnings.append(f"dropped trigger edge for {edge.from_id!r}: process has no events")
        return False
    from_t = t if t in from_times else from_times[0]
    earlier = [x for x in times.get(edge.to_id, []) if x < from_t]
    if not earlier:
        warnings.append(
            f"dropped {edge.from_id!r} wasTriggeredBy {edge.to_id!r}: "
            f"no triggering event strictly before t={from_t}"
        )
        return False
    graph.add_edge(
        EdgeRecord(
            instance_id(edge.from_id, from_t),
            instance_id(edge.to_id, earlier[-1]),
            Relation.WAS_TRIGGERED_BY,
        )
    )
    return True
