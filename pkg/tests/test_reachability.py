import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_regex_query, random_tpm_graph
from tpmgraph.graph import TpmGraph
from tpmgraph.model import (
    CAUSAL_RELATIONS,
    EdgeRecord,
    GraphTooLargeError,
    NodeKind,
    NodeRecord,
    Relation,
)
from tpmgraph.opm import parse_opm
from tpmgraph.query.eval import compile_term_predicates, split_construct_patterns
from tpmgraph.query.parser import parse_path_regex
from tpmgraph.reachability import (
    eliminate_cycles,
    oracle_match,
    topological_order,
    transitive_closure,
    traverse_paths,
)


def chain_graph(*ticks):
    graph = TpmGraph()
    previous = None
    for t in ticks:
        node_id = f"A@{t}"
        graph.add_node(NodeRecord(node_id, NodeKind.ARTIFACT, "A", timestamp=t))
        if previous:
            graph.add_edge(EdgeRecord(previous, node_id, Relation.HAPPENED_BEFORE))
        previous = node_id
    return graph


class TestTraversePaths:
    def test_derivation_paths_on_example1(self, example1_tpm):
        analysis = {n.node_id for n in example1_tpm.instances_of("Analysis.doc")}
        relations = {Relation.HAPPENED_BEFORE, Relation.WAS_DERIVED_FROM}
        origins = {
            n.node_id
            for n in example1_tpm.nodes()
            if n.kind == NodeKind.ARTIFACT and n.entity_id != "Analysis.doc"
        }
        paths = traverse_paths(
            example1_tpm,
            start=lambda n: n in analysis,
            end=lambda n: n in origins,
            edge_predicate=lambda e: e.relation in relations,
            max_len=8,
        )
        # three distinct origin instances are reachable over hb+wdf chains
        assert {p.nodes[-1] for p in paths} == {
            "Brainstorming.doc@2", "Brainstorming.doc@4", "Sample_Analysis.pdf@2",
            "Sample_Analysis.pdf@5",
        }

    def test_empty_start(self, example1_tpm):
        assert traverse_paths(example1_tpm, lambda n: False, lambda n: True) == []

    def test_max_len_one_gives_direct_edges(self):
        graph = chain_graph(1, 2, 3)
        paths = traverse_paths(graph, lambda n: True, lambda n: True, max_len=1)
        assert sorted(p.nodes for p in paths) == [("A@1", "A@2"), ("A@2", "A@3")]

    def test_max_len_must_be_positive(self, example1_tpm):
        with pytest.raises(ValueError):
            traverse_paths(example1_tpm, lambda n: True, lambda n: True, max_len=0)

    def test_ordering_is_by_length_then_nodes(self):
        graph = chain_graph(1, 2, 3)
        paths = traverse_paths(graph, lambda n: True, lambda n: True, max_len=4)
        keys = [p.sort_key() for p in paths]
        assert keys == sorted(keys)


class TestTransitiveClosure:
    def test_three_node_chain(self):
        graph = chain_graph(1, 2, 3)
        closure = transitive_closure(graph)
        pairs = {
            (a, b) for a, b in closure.pairs() if a != b
        }
        assert pairs == {("A@1", "A@2"), ("A@1", "A@3"), ("A@2", "A@3")}
        assert closure.reachable("A@1", "A@1")  # reflexive

    def test_agrees_with_traversal_on_example1(self, example1_tpm):
        closure = transitive_closure(
            example1_tpm, edge_predicate=lambda e: e.relation in CAUSAL_RELATIONS
        )
        ids = sorted(example1_tpm.node_ids())
        for a in ids:
            for b in ids:
                if a == b:
                    continue
                paths = traverse_paths(
                    example1_tpm,
                    start=lambda n: n == a,
                    end=lambda n: n == b,
                    edge_predicate=lambda e: e.relation in CAUSAL_RELATIONS,
                    max_len=len(ids),
                )
                assert bool(paths) == closure.reachable(a, b)

    def test_empty_graph(self):
        closure = transitive_closure(TpmGraph())
        assert closure.pairs() == set()

    def test_too_large(self):
        graph = chain_graph(*range(1, 12))
        with pytest.raises(GraphTooLargeError):
            transitive_closure(graph, max_nodes=5)


class TestEliminateCycles:
    def test_acyclic_input_is_identity(self, example1_tpm):
        acyclic, removed = eliminate_cycles(example1_tpm)
        assert removed == []
        assert acyclic == example1_tpm

    def test_two_cycle_removes_back_edge(self):
        # a -> b (used) inserted first, b -> a (wasGeneratedBy) second: the DFS
        # from a sees b -> a as the back edge and removes it.
        opm = parse_opm(
            "node a process\nnode b artifact\n"
            "edge a used b t=1\nedge b wasGeneratedBy a t=2\n"
        )
        acyclic, removed = eliminate_cycles(opm)
        assert len(removed) == 1
        assert (removed[0].from_id, removed[0].to_id) == ("b", "a")
        assert len(acyclic.edges) == 1

    def test_shifting_granularity_fixture(self):
        # artifact repeatedly updated by processes that also consume it
        text = ["node doc artifact"]
        for i, (use_t, gen_t) in enumerate([(1, 2), (3, 4), (5, 6)]):
            text.append(f"node p{i} process")
            text.append(f"edge p{i} used doc t={use_t}")
            text.append(f"edge doc wasGeneratedBy p{i} t={gen_t}")
        opm = parse_opm("\n".join(text) + "\n")
        acyclic, removed = eliminate_cycles(opm)
        assert len(removed) >= 1
        order = topological_order(
            list(acyclic.nodes), [(e.from_id, e.to_id) for e in acyclic.edges]
        )
        assert order is not None

    def test_determinism(self):
        opm = parse_opm(
            "node a artifact\nnode b artifact\nnode p process\nnode q process\n"
            "edge p used a t=1\nedge a wasGeneratedBy p t=2\n"
            "edge q used b t=3\nedge b wasGeneratedBy q t=4\n"
        )
        first = [e.key() for e in eliminate_cycles(opm)[1]]
        second = [e.key() for e in eliminate_cycles(opm)[1]]
        assert first == second


class TestOracleMatch:
    def test_timeseries_regex_on_example1(self, example1_tpm):
        ast = random_regex_query(random.Random(0), "unused")  # for structure only
        regex = parse_path_regex("?node (?edge ?node)+")
        small = example1_tpm.subgraph(
            [n.node_id for n in example1_tpm.instances_of("Analysis.doc")]
        )
        predicates = {
            "node": lambda el: isinstance(el, str),
            "edge": lambda el: getattr(el, "relation", None) == Relation.HAPPENED_BEFORE,
        }
        paths = oracle_match(small, regex, predicates)
        assert [p.nodes for p in paths] == [
            ("Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5", "Analysis.doc@6")
        ]

    def test_single_node_regex(self, example1_tpm):
        small = example1_tpm.subgraph(["Alex@1", "Alex@6"])
        paths = oracle_match(small, parse_path_regex("?n"), {})
        assert sorted(p.nodes for p in paths) == [("Alex@1",), ("Alex@6",)]

    def test_unsatisfiable_regex(self, example1_tpm):
        small = example1_tpm.subgraph(["Alex@1"])
        predicates = {"n": lambda el: False}
        assert oracle_match(small, parse_path_regex("?n"), predicates) == []

    def test_too_large(self, example1_tpm):
        with pytest.raises(GraphTooLargeError):
            oracle_match(example1_tpm, parse_path_regex("?n"), {}, max_nodes=5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5_000))
def test_closure_traversal_agreement(seed):
    graph = random_tpm_graph(random.Random(seed))
    closure = transitive_closure(graph)
    ids = sorted(graph.node_ids())
    for a in ids:
        for b in ids:
            if a == b:
                continue
            paths = traverse_paths(
                graph,
                start=lambda n: n == a,
                end=lambda n: n == b,
                max_len=len(ids),
            )
            assert bool(paths) == closure.reachable(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5_000))
def test_eliminate_cycles_passes_topological_check(seed):
    graph = random_tpm_graph(random.Random(seed))
    acyclic, _ = eliminate_cycles(graph)
    order = topological_order(
        list(acyclic.node_ids()), [(e.from_id, e.to_id) for e in acyclic.edges]
    )
    assert order is not None
