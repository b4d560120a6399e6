import random

import pytest

import paperqueries as pq
from conftest import grow_to
from tpmgraph.engine import (
    DuplicateRegistrationError,
    Engine,
    NotTimedError,
    PullMode,
    PushMode,
)
from tpmgraph.graph import TpmGraph
from tpmgraph.model import EdgeRecord, NodeKind, NodeRecord, Relation
from tpmgraph.query.eval import UnknownContainerError
from tpmgraph.query.parser import parse_query


def growing_engine(full, t0=3):
    partial = TpmGraph()
    grow_to(partial, full, t0)
    return Engine(partial)


class TestRegister:
    def test_fconstruct_with_timed_auto_registers_pull(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        agent = example1_engine.agents["agent:analysis_process"]
        assert isinstance(agent.mode, PullMode)
        assert agent.mode.interval == 1

    def test_duplicate_registration(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        with pytest.raises(DuplicateRegistrationError):
            example1_engine.register("analysis_process", PullMode(1))

    def test_not_timed(self, example1_engine):
        example1_engine.execute(
            "fconstruct plain as ?f select ?e where { ?e @type event. }", now=6
        )
        with pytest.raises(NotTimedError):
            example1_engine.register("plain", PullMode(1))

    def test_push_watched_initialized_from_members(self, example1_tpm):
        engine = Engine(example1_tpm)
        engine.pconstruct(
            parse_query(pq.PCONSTRUCT_DERIVATION), now=6, agent_mode=PushMode()
        )
        agent = engine.agents["agent:analysisDoc_derivation"]
        members = engine.materialized["analysisDoc_derivation"].members
        assert members <= agent.watched

    def test_unknown_target(self, example1_engine):
        with pytest.raises(UnknownContainerError):
            example1_engine.register("ghost", PullMode(1))


class TestTick:
    def test_folder_tracks_growth(self, example1_tpm):
        engine = growing_engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        assert engine.materialized["analysis_process"].members == {"P3@3"}

        grow_to(engine.graph, example1_tpm, 5)
        deltas = engine.tick(5)
        assert len(deltas) == 1
        assert deltas[0].added == {"P4@4", "P5@5"}
        assert engine.materialized["analysis_process"].members == {"P3@3", "P4@4", "P5@5"}

        grow_to(engine.graph, example1_tpm, 6)
        deltas = engine.tick(6)
        assert deltas[0].added == {"P6@6"}

    def test_tick_before_interval_returns_nothing(self, example1_tpm):
        engine = Engine(example1_tpm)
        mat = engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        engine.agents["agent:analysis_process"].mode = PullMode(5)
        assert engine.tick(8) == []

    def test_tick_without_change_returns_empty_delta_unlogged(self, example1_tpm):
        engine = Engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        log_before = len(engine.materialized["analysis_process"].log)
        deltas = engine.tick(7)
        assert len(deltas) == 1
        assert deltas[0].is_empty()
        assert len(engine.materialized["analysis_process"].log) == log_before

    def test_idempotence(self, example1_tpm):
        engine = Engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        engine.tick(7)
        engine.tick(8)
        log = engine.materialized["analysis_process"].log
        assert len(log) == 1  # only the creation delta

    def test_container_interval_follows_membership(self, example1_tpm):
        engine = growing_engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        node = engine.graph.node("analysis_process")
        assert (node.start, node.duration) == (3, 0)
        grow_to(engine.graph, example1_tpm, 6)
        engine.tick(6)
        assert (node.start, node.duration) == (3, 3)


class TestNotifyChange:
    def test_attribute_change_triggers_push_re_evaluation(self, example1_tpm):
        engine = Engine(example1_tpm)
        engine.pconstruct(
            parse_query(pq.PCONSTRUCT_DERIVATION), now=6, agent_mode=PushMode()
        )
        agent = engine.agents["agent:analysisDoc_derivation"]
        runs_before = agent.last_run
        engine.graph.set_attribute("Analysis.doc@4", "note", "edited")
        deltas = engine.notify_change({"Analysis.doc@4"}, now=7)
        assert len(deltas) == 1
        assert agent.last_run == 7 > runs_before

    def test_disjoint_change_does_not_fire(self, example1_tpm):
        engine = Engine(example1_tpm)
        engine.pconstruct(
            parse_query(pq.PCONSTRUCT_DERIVATION), now=6, agent_mode=PushMode()
        )
        assert engine.notify_change({"P1#1"}, now=7) == []

    def test_new_derivation_edge_extends_path_node(self, example1_tpm):
        # a t7 edit: Event-7 regenerates Analysis.doc from Brainstorming.doc
        engine = Engine(example1_tpm)
        engine.pconstruct(
            parse_query(pq.PCONSTRUCT_DERIVATION), now=6, agent_mode=PushMode()
        )
        graph = engine.graph
        graph.add_node(NodeRecord("P7@7", NodeKind.EVENT, "P7", timestamp=7,
                                  attributes={"type": "event"}))
        graph.add_node(
            NodeRecord("Analysis.doc@7", NodeKind.ARTIFACT, "Analysis.doc", timestamp=7,
                       attributes={"type": "artifact", "id": "Analysis.doc"})
        )
        graph.add_edge(EdgeRecord("Analysis.doc@6", "Analysis.doc@7", Relation.HAPPENED_BEFORE))
        graph.add_edge(EdgeRecord("Analysis.doc@7", "P7@7", Relation.WAS_GENERATED_BY))
        graph.add_edge(
            EdgeRecord("Analysis.doc@7", "Brainstorming.doc@4", Relation.WAS_DERIVED_FROM)
        )
        deltas = engine.notify_change({"Analysis.doc@6", "Analysis.doc@7"}, now=7)
        assert len(deltas) == 1
        assert "Analysis.doc@7" in deltas[0].added
        mat = engine.materialized["analysisDoc_derivation"]
        assert any(p.nodes[-1] == "Brainstorming.doc@4" and "Analysis.doc@7" in p.nodes
                   for p in mat.paths)

    def test_watched_set_refreshes_after_run(self, example1_tpm):
        engine = growing_engine(example1_tpm, t0=4)
        engine.fconstruct(
            parse_query(pq.FCONSTRUCT_ANALYSIS), now=4, agent_mode=PushMode()
        )
        agent = engine.agents["agent:analysis_process"]
        watched_before = set(agent.watched)
        changed = grow_to(engine.graph, example1_tpm, 6)
        engine.notify_change(changed, now=6)
        assert "P6@6" in engine.materialized["analysis_process"].members
        assert set(agent.watched) != watched_before

    def test_empty_folder_watches_everything(self, example1_tpm):
        engine = growing_engine(example1_tpm, t0=1)
        engine.fconstruct(
            parse_query(pq.FCONSTRUCT_ANALYSIS), now=1, agent_mode=PushMode()
        )
        assert engine.agents["agent:analysis_process"].watched is None
        changed = grow_to(engine.graph, example1_tpm, 3)
        deltas = engine.notify_change(changed, now=3)
        assert deltas and deltas[0].added == {"P3@3"}


class TestEvolution:
    def test_folder_evolution_matches_growth(self, example1_tpm):
        engine = growing_engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        for t in (4, 5, 6):
            grow_to(engine.graph, example1_tpm, t)
            engine.tick(t)
        assert {n.node_id for n in engine.evolution_at("analysis_process", 3).nodes()} == {"P3@3"}
        assert {n.node_id for n in engine.evolution_at("analysis_process", 5).nodes()} == {
            "P3@3", "P4@4", "P5@5",
        }
        assert {n.node_id for n in engine.evolution_at("analysis_process", 6).nodes()} == {
            "P3@3", "P4@4", "P5@5", "P6@6",
        }

    def test_before_creation_is_empty(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        assert len(example1_engine.evolution_at("analysis_process", 2)) == 0

    def test_unknown_container(self, example1_engine):
        with pytest.raises(UnknownContainerError):
            example1_engine.evolution_at("ghost", 3)

    def test_replay_consistency(self, example1_tpm):
        engine = growing_engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        for t in (4, 5, 6):
            grow_to(engine.graph, example1_tpm, t)
            engine.tick(t)
        mat = engine.materialized["analysis_process"]
        assert mat.members_at(6) == mat.members

    def test_log_export_format(self, example1_tpm):
        engine = growing_engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        grow_to(engine.graph, example1_tpm, 5)
        engine.tick(5)
        lines = engine.export_evolution_log().splitlines()
        assert lines[0] == "delta init:analysis_process 3 +P3@3"
        assert lines[1] == "delta agent:analysis_process 5 +P4@4 +P5@5"


class TestPullPushEquivalence:
    def test_watch_all_push_matches_pull_deltas(self, example1_tpm):
        pull_text = pq.FCONSTRUCT_ANALYSIS.replace("analysis_process", "by_pull")
        push_text = pq.FCONSTRUCT_ANALYSIS.replace("analysis_process", "by_push")
        engine = growing_engine(example1_tpm)
        engine.fconstruct(parse_query(pull_text), now=3, agent_mode=PullMode(1))
        engine.fconstruct(parse_query(push_text), now=3, agent_mode=PushMode(watch_all=True))
        for t in (4, 5, 6):
            changed = grow_to(engine.graph, example1_tpm, t)
            engine.notify_change(changed, now=t)
            engine.tick(t)
        pull_mat = engine.materialized["by_pull"]
        push_mat = engine.materialized["by_push"]
        assert pull_mat.members == push_mat.members
        pull_deltas = sorted((d.at, d.added, d.removed) for d in pull_mat.log)
        push_deltas = sorted((d.at, d.added, d.removed) for d in push_mat.log)
        assert pull_deltas == push_deltas

    def test_hybrid_push_converges_on_random_growth(self, example1_tpm):
        rng = random.Random(11)
        for trial in range(5):
            engine = growing_engine(example1_tpm, t0=1)
            pull_text = pq.FCONSTRUCT_ANALYSIS.replace("analysis_process", "pull_f")
            push_text = pq.FCONSTRUCT_ANALYSIS.replace("analysis_process", "push_f")
            engine.fconstruct(parse_query(pull_text), now=1, agent_mode=PullMode(1))
            engine.fconstruct(parse_query(push_text), now=1, agent_mode=PushMode())
            times = sorted(rng.sample(range(2, 7), rng.randint(2, 5)))
            if times[-1] != 6:
                times.append(6)
            for t in times:
                changed = grow_to(engine.graph, example1_tpm, t)
                engine.notify_change(changed, now=t)
                engine.tick(t)
            assert (
                engine.materialized["pull_f"].members
                == engine.materialized["push_f"].members
            )
