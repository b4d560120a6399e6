import random

import pytest

import paperqueries as pq
from conftest import grow_to
from generators import random_tpm_graph
from tpmgraph.engine import Engine
from tpmgraph.graph import TpmGraph
from tpmgraph.model import NodeKind, Relation
from tpmgraph.query.eval import (
    NameCollisionError,
    QueryTypeError,
    RegexUnsatisfiableError,
    Scope,
    TimeBoundViolationError,
    UnknownContainerError,
    eval_select,
    interval_time_filter,
    time_filter,
)
from tpmgraph.query.parser import parse_query


class TestTimeFilter:
    def test_between_includes_interior(self):
        assert time_filter(4, (3, None, None, 6)) is True

    def test_after_excludes_earlier(self):
        assert time_filter(2, (3, None, None, None)) is False

    def test_before_excludes_later(self):
        assert time_filter(5, (None, None, None, 4)) is False

    def test_bounds_are_inclusive(self):
        assert time_filter(3, (3, None, None, 6))
        assert time_filter(6, (3, None, None, 6))
        assert time_filter(5, (None, None, None, 5))

    def test_point_fact_ignores_middle_slots(self):
        assert time_filter(9, (1, 4, 5, None)) is True

    def test_interval_fact_must_be_contained(self):
        assert interval_time_filter(3, 5, (1, 3, 5, 9)) is True
        assert interval_time_filter(2, 5, (1, 3, 5, 9)) is False
        assert interval_time_filter(3, 6, (1, 3, 5, 9)) is False

    def test_during_single_tick(self):
        interval = (4, 4, 4, 4)
        assert time_filter(4, interval)
        assert not time_filter(5, interval)
        assert interval_time_filter(4, 4, interval)
        assert not interval_time_filter(4, 5, interval)


class TestEvalSelect:
    def test_derived_from_doc_ids(self, example1_engine):
        result = example1_engine.execute(pq.DERIVED_FROM_SELECT)
        assert result.values("docID") == ["Brainstorming.doc", "Sample_Analysis.pdf"]

    def test_unsatisfiable_constant_is_empty(self, example1_engine):
        result = example1_engine.execute(
            "select ?x where { ?x @id 'No-Such-Entity'. }"
        )
        assert len(result) == 0

    def test_star_on_single_node_graph(self):
        graph = random_tpm_graph(random.Random(3), max_nodes=1)
        sub = graph.subgraph([next(iter(sorted(graph.node_ids())))])
        engine = Engine(sub)
        result = engine.execute("select * where { ?n @isA entityNode. }")
        assert len(result) == 1

    def test_relation_pattern_binds_both_sides(self, example1_engine):
        result = example1_engine.execute(
            "select ?a ?b where { ?a wasDerivedFrom ?b. }"
        )
        assert sorted(zip(result.values("a"), result.values("b"))) == [
            ("Analysis.doc@4", "Brainstorming.doc@2"),
            ("Analysis.doc@5", "Sample_Analysis.pdf@2"),
        ]

    def test_type_error_on_ordering_text_against_timestamp(self, example1_engine):
        with pytest.raises(QueryTypeError):
            example1_engine.execute(
                "select ?e where { ?e @type event. ?e @timestamp ?ts. "
                "FILTER (?ts < 'abc'). }"
            )

    def test_equality_across_types_is_false_not_error(self, example1_engine):
        result = example1_engine.execute(
            "select ?e where { ?e @type event. ?e @timestamp ?ts. "
            "FILTER (?ts = 'abc'). }"
        )
        assert len(result) == 0

    def test_distinct_by_default(self, example1_engine):
        distinct = example1_engine.execute(
            "select ?id where { ?a @type artifact. ?a @id ?id. }"
        )
        assert distinct.values("id") == [
            "Analysis.doc", "Brainstorming.doc", "IEEE-analysis", "Sample_Analysis.pdf",
        ]
        dupes = example1_engine.execute(
            "select all ?id where { ?a @type artifact. ?a @id ?id. }"
        )
        assert len(dupes) == 10  # one row per instance

    def test_attribute_names_case_insensitive(self, example1_engine):
        upper = example1_engine.execute("select ?a where { ?a @Type artifact. }")
        lower = example1_engine.execute("select ?a where { ?a @type artifact. }")
        assert upper.values("a") == lower.values("a")

    def test_tsv_output(self, example1_engine):
        result = example1_engine.execute(
            "select ?a ?b where { ?a wasDerivedFrom ?b. }"
        )
        lines = result.to_tsv().splitlines()
        assert lines[0] == "?a\t?b"
        assert lines[1] == "Analysis.doc@4\tBrainstorming.doc@2"


class TestFconstruct:
    def test_example2_members_at_t6(self, example1_engine):
        mat = example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        assert mat.members == {"P3@3", "P4@4", "P5@5", "P6@6"}
        node = example1_engine.graph.node("analysis_process")
        assert node.kind == NodeKind.FOLDER
        assert node.timed is True
        assert (node.start, node.duration) == (3, 3)
        assert node.attributes["description"] == "analysis activities"

    def test_partial_graph_has_one_member(self, example1_tpm):
        partial = TpmGraph()
        grow_to(partial, example1_tpm, 3)
        engine = Engine(partial)
        mat = engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        assert mat.members == {"P3@3"}

    def test_zero_solutions_empty_folder(self, example1_engine):
        mat = example1_engine.execute(
            "fconstruct empty as ?f where { ?f @timed true. "
            "?e @type event. ?e @id 'nothing'. }",
            now=9,
        )
        assert mat.members == set()
        node = example1_engine.graph.node("empty")
        assert (node.start, node.duration) == (9, 0)
        assert mat.warnings

    def test_name_collision(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        with pytest.raises(NameCollisionError):
            example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)

    def test_declared_window_violation(self, example1_engine):
        with pytest.raises(TimeBoundViolationError):
            example1_engine.execute(
                "fconstruct tight as ?f where { ?f @start 1. ?f @duration 1. "
                "?e @type event. }",
                now=6,
            )

    def test_nested_folders(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        example1_engine.execute(
            "fconstruct early as ?f select ?e where { "
            "?e @type event. ?e @timestamp ?ts. FILTER (Timesemantic(?ts,[?,?,?,t2])). }",
            now=6,
        )
        top = example1_engine.execute(
            "fconstruct course as ?f select (analysis_process, early) where { }",
            now=6,
        )
        assert top.members == {"analysis_process", "early"}
        assert example1_engine.graph.has_edge(
            "analysis_process", Relation.IS_PART_OF, "course"
        )


class TestPconstruct:
    def test_example5_three_paths(self, example1_engine):
        mat = example1_engine.execute(pq.PCONSTRUCT_DERIVATION, now=6)
        assert sorted(p.nodes for p in mat.paths) == [
            (
                "Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5",
                "Analysis.doc@6",
            ),
            (
                "Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5",
                "Sample_Analysis.pdf@2", "Sample_Analysis.pdf@5",
            ),
            (
                "Analysis.doc@3", "Analysis.doc@4", "Brainstorming.doc@2",
                "Brainstorming.doc@4",
            ),
        ]

    def test_example4_single_chain(self, example1_engine):
        mat = example1_engine.execute(pq.PCONSTRUCT_TIMESERIES, now=6)
        assert [p.nodes for p in mat.paths] == [
            ("Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5", "Analysis.doc@6")
        ]
        node = example1_engine.graph.node("analysisDoc_timeseries")
        assert node.kind == NodeKind.PATH
        assert (node.start, node.duration) == (3, 3)

    def test_single_node_regex(self, example1_engine):
        mat = example1_engine.execute(
            "pconstruct singles ( , , ?n) as ?p where { "
            "?p @timed true. ?n @id 'Alex'. }",
            now=6,
        )
        assert sorted(p.nodes for p in mat.paths) == [("Alex@1",), ("Alex@6",)]

    def test_anchored_endpoints(self, example1_engine):
        mat = example1_engine.execute(
            "pconstruct anchored ('Analysis.doc@3', 'Analysis.doc@5', "
            "?n (?e ?n)+) as ?p where { ?e @label happenedBefore. }",
            now=6,
        )
        assert [p.nodes for p in mat.paths] == [
            ("Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5")
        ]

    def test_unsatisfiable_regex(self, example1_engine):
        with pytest.raises(RegexUnsatisfiableError):
            example1_engine.execute(
                "pconstruct bad ( , , ?x (?x ?x)+) as ?p where { "
                "?x @isA edge. ?x @isA entityNode. }",
                now=6,
            )

    def test_members_are_path_union(self, example1_engine):
        mat = example1_engine.execute(pq.PCONSTRUCT_DERIVATION, now=6)
        assert mat.members == {n for p in mat.paths for n in p.nodes}
        for member in mat.members:
            assert example1_engine.graph.has_edge(
                member, Relation.IS_PART_OF, "analysisDoc_derivation"
            )


class TestApply:
    def test_example3_folder_at_t5(self, example1_engine):
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        result = example1_engine.execute(pq.APPLY_FOLDER_T5)
        assert sorted(r["a"] for r in result.rows) == ["P3@3", "P4@4", "P5@5"]

    def test_example6_per_path_truncation(self, example1_engine):
        example1_engine.execute(pq.PCONSTRUCT_DERIVATION, now=6)
        result = example1_engine.execute(pq.APPLY_DERIVATION_T4)
        per_path: dict[int, set] = {}
        for index, row in zip(result.path_indexes, result.rows):
            per_path.setdefault(index, set()).add(row["a"])
        truncations = sorted(tuple(sorted(v)) for v in per_path.values())
        assert truncations == [
            ("Analysis.doc@3", "Analysis.doc@4"),
            ("Analysis.doc@3", "Analysis.doc@4", "Brainstorming.doc@2", "Brainstorming.doc@4"),
            ("Analysis.doc@3", "Analysis.doc@4", "Sample_Analysis.pdf@2"),
        ]

    def test_timeseries_window_apply(self, example1_engine):
        example1_engine.execute(pq.PCONSTRUCT_TIMESERIES, now=6)
        result = example1_engine.execute(pq.APPLY_TIMESERIES_T3_T5)
        assert sorted(r["a"] for r in result.rows) == [
            "Analysis.doc@3", "Analysis.doc@4", "Analysis.doc@5",
        ]

    def test_apply_over_empty_folder(self, example1_engine):
        example1_engine.execute(
            "fconstruct nothing as ?f where { ?e @id 'absent'. }", now=6
        )
        result = example1_engine.execute(
            "(nothing) apply ( select * where { ?a @isA entityNode. } )"
        )
        assert len(result) == 0

    def test_unknown_container(self, example1_engine):
        with pytest.raises(UnknownContainerError):
            example1_engine.execute(
                "(ghost) apply ( select * where { ?a @isA entityNode. } )"
            )

    def test_tsv_has_path_column(self, example1_engine):
        example1_engine.execute(pq.PCONSTRUCT_DERIVATION, now=6)
        result = example1_engine.execute(pq.APPLY_DERIVATION_T4)
        lines = result.to_tsv().splitlines()
        assert lines[0].startswith("path\t")
        assert lines[1].startswith("path:0\t")

    def test_scoping_soundness(self, example1_engine):
        # every apply solution also solves the inner query over the full graph
        example1_engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        inner_text = (
            "select * where { ?a @isA entityNode. ?a @timestamp ?ts. "
            "FILTER (Timesemantic(?ts,[?,?,?,t5])). }"
        )
        applied = example1_engine.execute(f"(analysis_process) apply ( {inner_text} )")
        full = eval_select(example1_engine.graph, parse_query(inner_text))
        full_rows = {tuple(sorted(r.items())) for r in full.rows}
        for row in applied.rows:
            assert tuple(sorted(row.items())) in full_rows


class TestEvolutionMonotonicity:
    def test_windowed_apply_equals_reconstruction(self, example1_tpm):
        # apply with ts <= a equals re-running the construct on window(G, 0, a)
        snapshot = example1_tpm.window(0, example1_tpm.max_timestamp())
        engine = Engine(example1_tpm)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=6)
        for a in (3, 4, 5, 6):
            applied = engine.execute(
                "(analysis_process) apply ( select ?e where { "
                "?e @isA entityNode. ?e @timestamp ?ts. "
                f"FILTER (Timesemantic(?ts,[?,?,?,t{a}])). }} )"
            )
            fresh = Engine(snapshot.window(0, a))
            fresh_mat = fresh.execute(pq.FCONSTRUCT_ANALYSIS, now=a)
            assert set(applied.values("e")) == fresh_mat.members

    def test_membership_grows_with_time(self, example1_tpm):
        partial = TpmGraph()
        grow_to(partial, example1_tpm, 3)
        engine = Engine(partial)
        engine.execute(pq.FCONSTRUCT_ANALYSIS, now=3)
        previous: set = set()
        for t in (3, 4, 5, 6):
            grow_to(engine.graph, example1_tpm, t)
            engine.tick(t)
            members = set(engine.materialized["analysis_process"].members)
            assert previous <= members
            previous = members
