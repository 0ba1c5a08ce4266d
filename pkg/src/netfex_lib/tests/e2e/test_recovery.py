import pytest
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.search import SearchConfig
from netfex_lib.models.series import TimeSeries
from netfex_lib.services.expressions import default_variable_names, to_symbolic
from netfex_lib.services.networks import generate_ba, prune_to_directed
from netfex_lib.services.postprocessing import smape
from netfex_lib.services.presets import FHN, known_expressions, truth_terms
from netfex_lib.services.processing import fit_structure, run_search
from netfex_lib.services.simulation import integrate, random_initial_state
from pathlib import Path


def _fhn_network(n: int, m: int, T: float) -> tuple[DirectedGraph, TimeSeries]:
    graph = prune_to_directed(generate_ba(n, m, seed=1), 0.5, seed=2)
    series = integrate(FHN.dynamics(n), graph, random_initial_state(n, FHN.d, seed=3), dt=FHN.dt, T=T)
    return graph, series


@pytest.mark.e2e
def test_desk_scale_search_writes_a_complete_report(tmp_path: Path):
    graph, series = _fhn_network(15, 2, 5.0)
    cfg = SearchConfig(
        iterations=3,
        batch=4,
        adam_steps=5,
        bfgs_steps=2,
        fine_tune_steps=20,
        pool_size=3,
        fine_tune_runs=2,
        fine_tune_nodes=8,
        rbm_batch=5,
        depth_f=2,
        depth_g=1,
        normalization="in_degree",
        dims=(1,),
        threads=2,
    )
    report = run_search(series, graph, cfg, run_dir=tmp_path, truth=truth_terms(FHN))
    (entry,) = report["dimensions"]
    assert entry["dim"] == 2
    assert len(entry["pool_scores"]) <= 3
    assert set(report["smape"]["per_dimension"]) == {"2"}
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "dim2_scores.csv").exists()


@pytest.mark.e2e
@pytest.mark.slow
def test_fixed_structure_recovers_fhn_self_dynamics():
    graph, series = _fhn_network(30, 3, 100.0)
    f_expr, g_expr = known_expressions(FHN, 0)
    cfg = SearchConfig(
        depth_f=f_expr.template.depth,
        depth_g=g_expr.template.depth,
        normalization="in_degree",
        fine_tune_runs=5,
        fine_tune_nodes=20,
        fine_tune_steps=20000,
        fine_tune_full_neighborhood=True,
        fine_time_stride=10,
    )
    result = fit_structure(f_expr, g_expr, series, graph, cfg, dim=0)
    (f_true, g_true), _ = truth_terms(FHN)
    inferred_f = to_symbolic(result.f_expr)
    assert set(inferred_f) == set(f_true)
    for term, value in f_true.items():
        assert inferred_f[term] == pytest.approx(value, rel=0.02)
    assert smape(inferred_f, f_true) < 0.05
    assert set(to_symbolic(result.g_expr, default_variable_names(4, pair=True))) == set(g_true)
