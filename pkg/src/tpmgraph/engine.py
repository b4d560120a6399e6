"""Stateful query engine: materialized folder/path nodes and their agents.

Construct statements add a folder or path node to the graph, link members
with isPartOf edges and keep an evolution log of membership deltas. Timed
nodes get an agent: pull agents re-evaluate the defining query on a tick
schedule, push agents when notified of changes touching their watched set
(by default the member closure: members plus the endpoints of member-
incident edges; an empty result watches everything). Agent execution is
serialized with graph mutation; failures in one agent never block others.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

from .graph import TpmGraph
from .model import (
    EdgeRecord,
    NodeKind,
    NodeRecord,
    Path,
    Relation,
    Timestamp,
    TpmError,
)
from .query.ast import QueryAst
from .query.eval import (
    BindingSet,
    NameCollisionError,
    QueryEvalError,
    Scope,
    TimeBoundViolationError,
    UnknownContainerError,
    compile_term_predicates,
    eval_select,
    evaluate_filter,
    match_regex_paths,
    solve_patterns,
    split_construct_patterns,
    term_from_spec,
)
from .query.parser import parse_query

logger = logging.getLogger(__name__)


class NotTimedError(TpmError):
    pass


class DuplicateRegistrationError(TpmError):
    pass


class InvalidAgentModeError(TpmError):
    pass


@dataclass(frozen=True)
class EvolutionDelta:
    at: Timestamp
    added: frozenset
    removed: frozenset
    agent_id: str

    def is_empty(self) -> bool:
        return not self.added and not self.removed

    def format(self) -> str:
        parts = [f"delta {self.agent_id} {self.at}"]
        parts += [f"+{i}" for i in sorted(self.added)]
        parts += [f"-{i}" for i in sorted(self.removed)]
        return " ".join(parts)


@dataclass(frozen=True)
class PullMode:
    interval: int = 1


@dataclass(frozen=True)
class PushMode:
    watched: frozenset | None = None  # None: hybrid member closure
    watch_all: bool = False


@dataclass
class AgentRegistration:
    agent_id: str
    target: str
    mode: PullMode | PushMode
    last_run: Timestamp
    watched: frozenset | None = None  # None means "everything"


@dataclass
class MaterializedNode:
    """A folder or path node together with its membership, defining query,

    discovered paths (path nodes only) and evolution log.
    """

    name: str
    kind: NodeKind
    query: QueryAst
    members: set = field(default_factory=set)
    paths: list[Path] | None = None
    log: list[EvolutionDelta] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    query_text: str | None = None

    @property
    def node_id(self) -> str:
        return self.name

    def members_at(self, t: Timestamp) -> set:
        members: set = set()
        for delta in self.log:
            if delta.at > t:
                break
            members |= delta.added
            members -= delta.removed
        return members


class Engine:
    """Owns one graph plus its materialized nodes and agent registrations."""

    def __init__(self, graph: TpmGraph | None = None) -> None:
        self.graph = graph if graph is not None else TpmGraph()
        self.materialized: dict[str, MaterializedNode] = {}
        self.agents: dict[str, AgentRegistration] = {}
        self._lock = threading.RLock()

    # -- statement dispatch --------------------------------------------------

    def execute(self, text: str, now: Timestamp | None = None):
        """Parse and run one statement; returns a BindingSet or MaterializedNode."""
        ast = parse_query(text)
        return self.run(ast, now=now, query_text=text)

    def run(self, ast: QueryAst, now: Timestamp | None = None, query_text: str | None = None):
        if now is None:
            now = self.graph.max_timestamp()
        if ast.kind == "select":
            return self.select(ast)
        if ast.kind == "fconstruct":
            return self.fconstruct(ast, now, query_text=query_text)
        if ast.kind == "pconstruct":
            return self.pconstruct(ast, now, query_text=query_text)
        assert ast.kind == "apply"
        return self.apply(ast)

    def select(self, ast: QueryAst) -> BindingSet:
        return eval_select(self.graph, ast)

    # -- constructs ------------------------------------------------------------

    def fconstruct(
        self,
        ast: QueryAst,
        now: Timestamp,
        agent_mode: PullMode | PushMode | None = None,
        query_text: str | None = None,
    ) -> MaterializedNode:
        """Materialize a folder node from the query's projected solutions."""
        with self._lock:
            name = ast.target
            self._check_name_free(name)
            attribute_defs, _, patterns = split_construct_patterns(ast)
            members, warnings = self._folder_members(ast, patterns)
            node, mat = self._store_container(
                ast, NodeKind.FOLDER, name, attribute_defs, members, now, warnings
            )
            mat.query_text = query_text
            self.materialized[name] = mat
            if node.timed:
                self.register(name, agent_mode or PullMode(1), now=now)
            return mat

    def pconstruct(
        self,
        ast: QueryAst,
        now: Timestamp,
        agent_mode: PullMode | PushMode | None = None,
        query_text: str | None = None,
    ) -> MaterializedNode:
        """Materialize a path node from the walks matching the path expression."""
        with self._lock:
            name = ast.target
            self._check_name_free(name)
            attribute_defs, _, _ = split_construct_patterns(ast)
            paths, warnings = self._match_paths(ast)
            members = {node for path in paths for node in path.nodes}
            node, mat = self._store_container(
                ast, NodeKind.PATH, name, attribute_defs, members, now, warnings
            )
            mat.paths = paths
            mat.query_text = query_text
            self.materialized[name] = mat
            if node.timed:
                self.register(name, agent_mode or PullMode(1), now=now)
            return mat

    def _check_name_free(self, name: str | None) -> None:
        if not name:
            raise QueryEvalError("construct statements need a target name")
        if name in self.materialized or name in self.graph:
            raise NameCollisionError(f"a node named {name!r} already exists")

    def _folder_members(
        self, ast: QueryAst, patterns
    ) -> tuple[set, list[str]]:
        warnings: list[str] = []
        if ast.folder_refs:
            members = set()
            for ref in ast.folder_refs:
                target = self.materialized.get(ref)
                if target is None:
                    raise UnknownContainerError(f"no materialized node named {ref!r}")
                members.add(target.node_id)
            return members, warnings
        solutions = solve_patterns(self.graph, patterns)
        solutions = [
            s for s in solutions if all(evaluate_filter(self.graph, f, s) for f in ast.filters)
        ]
        explicit = ast.projection is not None
        projected = ast.projection
        if projected is None:
            projected = sorted({name for s in solutions for name in s})
        members: set = set()
        warned: set = set()
        for solution in solutions:
            for var in projected:
                value = solution.get(var)
                if isinstance(value, str) and value in self.graph:
                    members.add(value)
                elif value is not None and explicit and var not in warned:
                    warned.add(var)
                    warnings.append(
                        f"?{var} binds literals (e.g. {value!r}), not graph nodes; skipped"
                    )
        return members, warnings

    def _match_paths(self, ast: QueryAst) -> tuple[list[Path], list[str]]:
        warnings: list[str] = []
        _, term_groups, leftovers = split_construct_patterns(ast)
        predicates, leftover_filters = compile_term_predicates(
            self.graph, term_groups, ast.filters
        )
        if leftovers:
            guards = solve_patterns(self.graph, leftovers)
            guards = [
                g
                for g in guards
                if all(evaluate_filter(self.graph, f, g) for f in leftover_filters)
            ]
            if not guards:
                return [], warnings
        elif leftover_filters:
            raise QueryEvalError(
                "filters crossing path terms are not supported; bind them to one term"
            )
        spec = ast.path_spec
        start = term_from_spec(self.graph, spec.start, predicates)
        end = term_from_spec(self.graph, spec.end, predicates)
        paths = match_regex_paths(self.graph, spec.regex, predicates, start, end)
        return paths, warnings

    def _store_container(
        self,
        ast: QueryAst,
        kind: NodeKind,
        name: str,
        attribute_defs: dict,
        members: set,
        now: Timestamp,
        warnings: list[str],
    ) -> tuple[NodeRecord, MaterializedNode]:
        attrs = {k: str(v) for k, v in attribute_defs.items()
                 if k not in ("timed", "start", "duration")}
        timed = str(attribute_defs.get("timed", "")).lower() == "true"
        declared_start = attribute_defs.get("start")
        declared_duration = attribute_defs.get("duration")
        anchors = [self.graph.node(m).anchor() for m in members]
        if declared_start is not None or declared_duration is not None:
            start = int(declared_start if declared_start is not None else min(anchors, default=now))
            duration = int(declared_duration if declared_duration is not None else 0)
            outside = [m for m in members
                       if not start <= self.graph.node(m).anchor() <= start + duration]
            if outside:
                raise TimeBoundViolationError(
                    f"members outside the declared window of {name!r}: {sorted(outside)}"
                )
        elif anchors:
            start = min(anchors)
            duration = max(anchors) - start
        else:
            start, duration = now, 0
            warnings.append(f"{name!r} has no members; window stored as (now={now}, 0)")
        node = NodeRecord(
            node_id=name,
            kind=kind,
            entity_id=name,
            start=start,
            duration=duration,
            attributes=attrs,
            timed=timed,
        )
        self.graph.add_node(node)
        for member in sorted(members):
            self.graph.add_edge(EdgeRecord(member, name, Relation.IS_PART_OF))
        mat = MaterializedNode(name=name, kind=kind, query=ast, members=set(members),
                               warnings=warnings)
        mat.log.append(
            EvolutionDelta(now, frozenset(members), frozenset(), f"init:{name}")
        )
        return node, mat

    def adopt(self, mat: MaterializedNode) -> None:
        """Register an already-persisted materialized node (its graph node and

        isPartOf edges are expected to be present in the graph).
        """
        self.materialized[mat.name] = mat

    # -- apply -------------------------------------------------------------------

    def apply(self, ast: QueryAst) -> BindingSet:
        """Evaluate the inner query against the member subgraphs of the scope;

        path nodes are evaluated per path with a path index on each row.
        """
        inner = ast.inner
        if inner is None or inner.kind != "select":
            raise QueryEvalError("apply bodies must be select statements")
        combined: BindingSet | None = None
        for scope_name in ast.scope:
            mat = self.materialized.get(scope_name)
            if mat is None:
                raise UnknownContainerError(f"no materialized node named {scope_name!r}")
            if mat.kind == NodeKind.PATH and mat.paths is not None:
                for index, path in enumerate(mat.paths):
                    scope = Scope(
                        frozenset(path.nodes),
                        frozenset(e.key() for e in path.edges),
                    )
                    result = eval_select(self.graph, inner, scope)
                    combined = _append(combined, result, index)
            else:
                scope = Scope(frozenset(mat.members))
                result = eval_select(self.graph, inner, scope)
                combined = _append(combined, result, None)
        return combined if combined is not None else BindingSet([], [], [])

    # -- agents --------------------------------------------------------------------

    def register(
        self,
        target: str,
        mode: PullMode | PushMode,
        now: Timestamp = 0,
    ) -> AgentRegistration:
        with self._lock:
            mat = self.materialized.get(target)
            if mat is None:
                raise UnknownContainerError(f"no materialized node named {target!r}")
            node = self.graph.node(mat.node_id)
            if not node.timed:
                raise NotTimedError(f"{target!r} is not a timed node")
            agent_id = f"agent:{target}"
            if agent_id in self.agents:
                raise DuplicateRegistrationError(f"{target!r} already has an agent")
            if isinstance(mode, PullMode) and mode.interval <= 0:
                raise InvalidAgentModeError("pull intervals must be positive")
            registration = AgentRegistration(agent_id, target, mode, last_run=now)
            if isinstance(mode, PushMode):
                if mode.watch_all:
                    registration.watched = None
                elif mode.watched is not None:
                    registration.watched = frozenset(mode.watched)
                else:
                    registration.watched = self._member_closure(mat)
            self.agents[agent_id] = registration
            return registration

    def tick(self, now: Timestamp) -> list[EvolutionDelta]:
        """Run every pull agent whose interval has elapsed; returns their deltas

        (empty deltas are returned as evidence of a run but never logged).
        """
        deltas: list[EvolutionDelta] = []
        with self._lock:
            for agent_id in sorted(self.agents):
                registration = self.agents[agent_id]
                if not isinstance(registration.mode, PullMode):
                    continue
                if now - registration.last_run < registration.mode.interval:
                    continue
                try:
                    deltas.append(self._re_evaluate(registration, now))
                except TpmError as exc:
                    logger.warning("agent %s failed: %s", agent_id, exc)
        return deltas

    def notify_change(self, changed: set, now: Timestamp) -> list[EvolutionDelta]:
        """Re-run push agents whose watched set intersects the changed node ids."""
        deltas: list[EvolutionDelta] = []
        with self._lock:
            for agent_id in sorted(self.agents):
                registration = self.agents[agent_id]
                if not isinstance(registration.mode, PushMode):
                    continue
                watched = registration.watched
                if watched is not None and not (watched & set(changed)):
                    continue
                try:
                    deltas.append(self._re_evaluate(registration, now))
                except TpmError as exc:
                    logger.warning("agent %s failed: %s", agent_id, exc)
        return deltas

    def _member_closure(self, mat: MaterializedNode) -> frozenset | None:
        """Members plus the endpoints of member-incident edges; None (watch

        everything) while the result is empty.
        """
        if not mat.members:
            return None
        closure = set(mat.members)
        for member in mat.members:
            for edge in self.graph.out_edges(member):
                closure.add(edge.to_id)
            for edge in self.graph.in_edges(member):
                closure.add(edge.from_id)
        return frozenset(closure)

    def _re_evaluate(self, registration: AgentRegistration, now: Timestamp) -> EvolutionDelta:
        mat = self.materialized[registration.target]
        if mat.kind == NodeKind.PATH:
            paths, _ = self._match_paths(mat.query)
            new_members = {node for path in paths for node in path.nodes}
            mat.paths = paths
        else:
            _, _, patterns = split_construct_patterns(mat.query)
            new_members, _ = self._folder_members(mat.query, patterns)
            new_members.discard(mat.node_id)
        delta = EvolutionDelta(
            now,
            frozenset(new_members - mat.members),
            frozenset(mat.members - new_members),
            registration.agent_id,
        )
        if not delta.is_empty():
            self._sync_membership(mat, new_members)
            mat.log.append(delta)
        registration.last_run = now
        if isinstance(registration.mode, PushMode) and not registration.mode.watch_all:
            registration.watched = self._member_closure(mat)
        return delta

    def _sync_membership(self, mat: MaterializedNode, new_members: set) -> None:
        container_id = mat.node_id
        for removed in sorted(mat.members - new_members):
            self.graph.remove_edge(EdgeRecord(removed, container_id, Relation.IS_PART_OF))
        if new_members:
            anchors = [self.graph.node(m).anchor() for m in new_members]
            self.graph.update_container_interval(
                container_id, min(anchors), max(anchors) - min(anchors)
            )
        for added in sorted(new_members - mat.members):
            self.graph.add_edge(EdgeRecord(added, container_id, Relation.IS_PART_OF))
        mat.members = set(new_members)

    # -- evolution ---------------------------------------------------------------

    def evolution_at(self, target: str, t: Timestamp) -> TpmGraph:
        """Member subgraph as of time t, reconstructed by replaying the log."""
        mat = self.materialized.get(target)
        if mat is None:
            raise UnknownContainerError(f"no materialized node named {target!r}")
        return self.graph.subgraph(mat.members_at(t))

    def export_evolution_log(self) -> str:
        deltas = [d for mat in self.materialized.values() for d in mat.log]
        deltas.sort(key=lambda d: (d.at, d.agent_id))
        return "\n".join(d.format() for d in deltas)


def _append(combined: BindingSet | None, result: BindingSet, index) -> BindingSet:
    if combined is None:
        combined = BindingSet(result.variables, [], [])
    combined.rows.extend(result.rows)
    combined.path_indexes.extend([index] * len(result.rows))
    return combined
