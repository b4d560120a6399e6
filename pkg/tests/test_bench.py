from tpmgraph.bench import fit_exponent, generate_opm, run_bench
from tpmgraph.convert import convert
from tpmgraph.opm import validate_opm


def test_generator_is_deterministic():
    a = generate_opm(150, seed=5)
    b = generate_opm(150, seed=5)
    assert a == b


def test_generator_output_validates_without_errors():
    report = validate_opm(generate_opm(150, seed=5))
    assert report.errors == []


def test_generated_graphs_convert_cleanly():
    graph, _ = convert(generate_opm(150, seed=5), strict=False)
    assert graph.validate() == []


def test_update_interactions_create_resolvable_cycles():
    report = validate_opm(generate_opm(200, seed=5))
    assert any(e.code == "CausalityCycle" for e in report.warnings)


def test_counts_table_deterministic():
    first = run_bench([100, 200], seed=9).counts_table()
    second = run_bench([100, 200], seed=9).counts_table()
    assert first == second


def test_tpm_paths_never_exceed_opm_paths():
    report = run_bench([150, 300], seed=9)
    for result in report.results:
        for query in result.queries:
            assert query.tpm_paths <= query.opm_paths


def test_cycle_removal_direction():
    report = run_bench([150], seed=9)
    result = report.results[0]
    assert result.opm_cycles_removed >= 1
    assert result.tpm_cycles_removed == 0


def test_size_zero_row():
    report = run_bench([0], seed=9)
    assert report.results[0].events == 0
    assert report.results[0].queries == []


def test_fit_exponent_on_known_data():
    linear = [(100, 1.0), (200, 2.0), (400, 4.0)]
    assert abs(fit_exponent(linear) - 1.0) < 1e-9
    quadratic = [(100, 1.0), (200, 4.0), (400, 16.0)]
    assert abs(fit_exponent(quadratic) - 2.0) < 1e-9
