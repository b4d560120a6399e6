"""Synthetic benchmarks comparing path queries on OPM and TPM representations.

The generator models course-style provenance: processes run sequentially,
each controlled by an agent, using existing artifacts and generating or
updating others. Update interactions (use then regenerate one artifact)
create the classic shifting-granularity cycles on the OPM side, which the
per-instant TPM expansion dissolves. Every interaction gets a globally
unique tick, derivations target strictly older artifacts and triggers
strictly older processes, so each TPM path projects onto a distinct OPM
path and per-query path counts satisfy TPM <= OPM by construction.

The fixed query suite covers why (influence chains over wasGeneratedBy/
used/wasDerivedFrom), how (wasGeneratedBy/wasTriggeredBy), where
(derivation chains) and when (where-queries restricted to a time window,
which only the TPM side can narrow).
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from .convert import convert
from .graph import TpmGraph
from .model import NodeKind, Relation
from .opm import OpmEdge, OpmGraph, OpmKind, OpmNode, OpmRelation
from .reachability import eliminate_cycles, traverse_paths

_PHASES = ("brainstorming", "analysis", "design", "implementation", "testing")


def generate_opm(
    n_events: int,
    seed: int,
    update_prob: float = 0.3,
    derive_prob: float = 0.5,
    trigger_prob: float = 0.25,
) -> OpmGraph:
    """Seeded synthetic OPM graph with roughly n_events annotated interactions."""
    rng = random.Random(seed)
    graph = OpmGraph()
    n_agents = max(3, n_events // 40)
    agents = [f"agent{i}" for i in range(n_agents)]
    for agent in agents:
        graph.nodes[agent] = OpmNode(agent, OpmKind.AGENT, {"role": "member"})

    artifacts: list[str] = []

    def new_artifact() -> str:
        name = f"doc{len(artifacts)}"
        artifacts.append(name)
        graph.nodes[name] = OpmNode(name, OpmKind.ARTIFACT)
        return name

    tick = 0
    events = 0
    pid = 0
    process_first_tick: dict[str, int] = {}
    while events < n_events:
        pid += 1
        process = f"proc{pid}"
        phase = _PHASES[pid % len(_PHASES)]
        graph.nodes[process] = OpmNode(process, OpmKind.PROCESS, {"type": phase})
        agent = rng.choice(agents)
        used_here: list[str] = []
        interactions = rng.randint(2, 4)
        first_tick = None
        update_target: str | None = None
        for slot in range(interactions):
            tick += rng.randint(1, 3)
            if first_tick is None:
                first_tick = tick
            roll = rng.random()
            if artifacts and roll < update_prob and update_target is None and slot + 1 < interactions:
                # use now, regenerate later in this process: the OPM cycle case
                update_target = rng.choice(artifacts)
                graph.edges.append(
                    OpmEdge(process, OpmRelation.USED, update_target, tick)
                )
                used_here.append(update_target)
            elif update_target is not None and slot == interactions - 1:
                graph.edges.append(
                    OpmEdge(update_target, OpmRelation.WAS_GENERATED_BY, process, tick)
                )
            elif artifacts and roll < 0.6:
                # bias towards recent artifacts: realistic locality, longer chains
                window = artifacts[-20:]
                artifact = rng.choice(window)
                graph.edges.append(OpmEdge(process, OpmRelation.USED, artifact, tick))
                used_here.append(artifact)
            else:
                artifact = new_artifact()
                graph.edges.append(
                    OpmEdge(artifact, OpmRelation.WAS_GENERATED_BY, process, tick)
                )
                sources = [a for a in used_here if a != artifact]
                if sources and rng.random() < derive_prob:
                    graph.edges.append(
                        OpmEdge(artifact, OpmRelation.WAS_DERIVED_FROM, rng.choice(sources), tick)
                    )
            graph.edges.append(OpmEdge(process, OpmRelation.WAS_CONTROLLED_BY, agent, tick))
            events += 1
        if pid > 1 and rng.random() < trigger_prob:
            older = f"proc{rng.randint(1, pid - 1)}"
            graph.edges.append(
                OpmEdge(process, OpmRelation.WAS_TRIGGERED_BY, older, first_tick)
            )
        process_first_tick[process] = first_tick
    return graph


# -- query suite ----------------------------------------------------------------


def _opm_simple_paths(
    opm: OpmGraph,
    start_id: str,
    relations: set[OpmRelation],
    end_kind: OpmKind,
    max_len: int,
) -> int:
    out: dict[str, list[OpmEdge]] = {}
    for edge in opm.edges:
        if edge.relation in relations and edge.from_id in opm.nodes and edge.to_id in opm.nodes:
            out.setdefault(edge.from_id, []).append(edge)
    count = 0
    stack: list[tuple[str, frozenset, int]] = [(start_id, frozenset({start_id}), 0)]
    while stack:
        current, visited, depth = stack.pop()
        for edge in out.get(current, ()):  # deterministic insertion order
            if edge.to_id in visited:
                continue
            if opm.nodes[edge.to_id].kind == end_kind:
                count += 1
            if depth + 1 < max_len:
                stack.append((edge.to_id, visited | {edge.to_id}, depth + 1))
    return count


def _tpm_query_paths(
    graph: TpmGraph,
    entity: str,
    relations: set[Relation],
    end_kind: NodeKind,
    max_len: int,
) -> int:
    instance_ids = {n.node_id for n in graph.instances_of(entity)}
    paths = traverse_paths(
        graph,
        start=lambda n: n in instance_ids,
        end=lambda n: graph.node(n).kind == end_kind,
        edge_predicate=lambda e: e.relation in relations,
        max_len=max_len,
    )
    return len(paths)


_WHY_OPM = {OpmRelation.WAS_GENERATED_BY, OpmRelation.USED, OpmRelation.WAS_DERIVED_FROM}
_WHY_TPM = {Relation.WAS_GENERATED_BY, Relation.USED, Relation.WAS_DERIVED_FROM}
_HOW_OPM = {OpmRelation.WAS_GENERATED_BY, OpmRelation.WAS_TRIGGERED_BY}
_HOW_TPM = {Relation.WAS_GENERATED_BY, Relation.WAS_TRIGGERED_BY}
_WHERE_OPM = {OpmRelation.WAS_DERIVED_FROM}
_WHERE_TPM = {Relation.WAS_DERIVED_FROM}


@dataclass(frozen=True)
class QueryStat:
    family: str
    anchor: str
    opm_paths: int
    tpm_paths: int


@dataclass
class SizeResult:
    requested: int
    events: int
    opm_nodes: int = 0
    opm_edges: int = 0
    tpm_nodes: int = 0
    tpm_edges: int = 0
    opm_cycles_removed: int = 0
    tpm_cycles_removed: int = 0
    queries: list[QueryStat] = field(default_factory=list)
    opm_seconds: float = 0.0
    tpm_seconds: float = 0.0


@dataclass
class BenchReport:
    seed: int
    results: list[SizeResult] = field(default_factory=list)

    def counts_table(self) -> str:
        """Deterministic part of the report (identical across runs per seed)."""
        lines = [
            "size    events  opm_nodes  opm_edges  tpm_nodes  tpm_edges  "
            "opm_cycles  tpm_cycles"
        ]
        for r in self.results:
            lines.append(
                f"{r.requested:<7} {r.events:<7} {r.opm_nodes:<10} {r.opm_edges:<10} "
                f"{r.tpm_nodes:<10} {r.tpm_edges:<10} {r.opm_cycles_removed:<11} "
                f"{r.tpm_cycles_removed}"
            )
        lines.append("")
        lines.append("size    family  anchor        opm_paths  tpm_paths")
        for r in self.results:
            for q in r.queries:
                lines.append(
                    f"{r.requested:<7} {q.family:<7} {q.anchor:<13} "
                    f"{q.opm_paths:<10} {q.tpm_paths}"
                )
        return "\n".join(lines)

    def timing_table(self) -> str:
        lines = ["size    opm_ms    tpm_ms"]
        for r in self.results:
            lines.append(
                f"{r.requested:<7} {r.opm_seconds * 1000:<9.1f} {r.tpm_seconds * 1000:.1f}"
            )
        return "\n".join(lines)

    def format(self) -> str:
        return self.counts_table() + "\n\n" + self.timing_table()


def run_bench(
    sizes: list[int],
    seed: int,
    max_path_len: int = 6,
    samples: int = 6,
) -> BenchReport:
    report = BenchReport(seed=seed)
    for size in sizes:
        report.results.append(_bench_one(size, seed, max_path_len, samples))
    return report


def _bench_one(size: int, seed: int, max_path_len: int, samples: int) -> SizeResult:
    result = SizeResult(requested=size, events=0)
    if size <= 0:
        return result
    opm = generate_opm(size, seed)
    tpm, _ = convert(opm, strict=False)
    counts = opm.counts()
    result.events = size
    result.opm_nodes = len(opm.nodes)
    result.opm_edges = counts["edges"]
    result.tpm_nodes = len(tpm)
    result.tpm_edges = len(tpm.edges)

    rng = random.Random(seed + 1)
    generated = sorted(
        {
            e.from_id
            for e in opm.edges
            if e.relation == OpmRelation.WAS_GENERATED_BY and e.from_id in opm.nodes
        }
    )
    pool = generated or sorted(n.node_id for n in opm.nodes_of_kind(OpmKind.ARTIFACT))
    anchors = rng.sample(pool, min(samples, len(pool)))
    lo, hi = _mid_window(tpm)

    # The OPM pipeline must run cycle elimination (simple-walk semantics break
    # down in closures otherwise); traversal still walks the original graph so
    # every TPM path has its OPM counterpart and the count comparison is fair.
    started = time.perf_counter()
    _, removed_opm = eliminate_cycles(opm)
    opm_counts: dict[tuple[str, str], int] = {}
    for anchor in anchors:
        opm_counts[("why", anchor)] = _opm_simple_paths(
            opm, anchor, _WHY_OPM, OpmKind.ARTIFACT, max_path_len
        )
        opm_counts[("how", anchor)] = _opm_simple_paths(
            opm, anchor, _HOW_OPM, OpmKind.PROCESS, max_path_len
        )
        opm_counts[("where", anchor)] = _opm_simple_paths(
            opm, anchor, _WHERE_OPM, OpmKind.ARTIFACT, max_path_len
        )
        opm_counts[("when", anchor)] = opm_counts[("where", anchor)]
    result.opm_seconds = time.perf_counter() - started
    result.opm_cycles_removed = len(removed_opm)

    started = time.perf_counter()
    acyclic_tpm, removed_tpm = eliminate_cycles(tpm)
    windowed = tpm.window(lo, hi)
    tpm_counts: dict[tuple[str, str], int] = {}
    for anchor in anchors:
        tpm_counts[("why", anchor)] = _tpm_query_paths(
            acyclic_tpm, anchor, _WHY_TPM, NodeKind.ARTIFACT, max_path_len
        )
        tpm_counts[("how", anchor)] = _tpm_query_paths(
            acyclic_tpm, anchor, _HOW_TPM, NodeKind.EVENT, max_path_len
        )
        tpm_counts[("where", anchor)] = _tpm_query_paths(
            acyclic_tpm, anchor, _WHERE_TPM, NodeKind.ARTIFACT, max_path_len
        )
        tpm_counts[("when", anchor)] = _tpm_query_paths(
            windowed, anchor, _WHERE_TPM, NodeKind.ARTIFACT, max_path_len
        )
    result.tpm_seconds = time.perf_counter() - started
    result.tpm_cycles_removed = len(removed_tpm)

    for anchor in anchors:
        for family in ("why", "how", "where", "when"):
            result.queries.append(
                QueryStat(family, anchor, opm_counts[(family, anchor)], tpm_counts[(family, anchor)])
            )
    return result


def _mid_window(tpm: TpmGraph) -> tuple[int, int]:
    high = tpm.max_timestamp()
    return high // 4, (3 * high) // 4


def fit_exponent(points: list[tuple[float, float]]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    import math

    logs = [(math.log(x), math.log(y)) for x, y in points if x > 0 and y > 0]
    n = len(logs)
    if n < 2:
        return 0.0
    mean_x = sum(x for x, _ in logs) / n
    mean_y = sum(y for _, y in logs) / n
    num = sum((x - mean_x) * (y - mean_y) for x, y in logs)
    den = sum((x - mean_x) ** 2 for x, _ in logs)
    return num / den if den else 0.0
