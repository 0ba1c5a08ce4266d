import numpy as np
import pandas as pd
import pytest
from netfex_lib.exceptions import UndefinedMetricError
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DynamicsSpec
from netfex_lib.services.postprocessing import (
    compare_terms,
    rollout_compare,
    smape,
    spec_from_expressions,
    spec_from_terms,
    system_smape,
    write_rollout,
)
from netfex_lib.services.presets import FHN, known_expressions, truth_terms
from netfex_lib.services.simulation import random_initial_state
from pathlib import Path

ROSSLER_TRUTH = {"x2": -1.0, "x3": -1.0, "(x_j-x_i)": 0.15}


@pytest.mark.parametrize(
    ("inferred", "expected"),
    [
        ({"x2": -1.0113, "x3": -0.9783, "(x_j-x_i)": 0.0973}, 0.0765),
        ({"x2": -1.0045, "x3": -0.9991, "(x_j-x_i)": 0.1431}, 0.0087),
    ],
)
def test_smape_reproduces_published_table(inferred: dict[str, float], expected: float):
    assert smape(inferred, ROSSLER_TRUTH) == pytest.approx(expected, abs=2e-4)


def test_smape_of_identical_maps_is_zero():
    assert smape(ROSSLER_TRUTH, dict(ROSSLER_TRUTH)) == 0.0


def test_missing_term_contributes_one():
    assert smape({"x": 1.0}, {"x": 1.0, "x^2": 1.0}) == pytest.approx(0.5)


def test_smape_is_symmetric_and_ignores_zero_entries():
    a = {"x1": 0.9, "x2": -1.2, "x1^3": 0.0}
    b = {"x2": -1.0, "x1": 1.0, "1": 0.3}
    assert smape(a, b) == pytest.approx(smape(b, a))
    assert smape(a, b) == pytest.approx(smape({"x1": 0.9, "x2": -1.2}, b))
    assert 0.0 <= smape(a, b) <= 1.0


def test_smape_of_empty_maps_is_undefined():
    with pytest.raises(UndefinedMetricError):
        smape({}, {"x1": 0.0})


def test_term_table_records():
    records = compare_terms({"x1": 1.0}, {"x1": 1.0, "x2": 2.0}).to_records()
    assert records == [
        {"term": "x1", "inferred": 1.0, "true": 1.0, "contribution": 0.0},
        {"term": "x2", "inferred": 0.0, "true": 2.0, "contribution": 1.0},
    ]


def test_system_smape_keeps_trees_apart():
    inferred = [({"x1": 1.0}, {}), ({"1": 0.5}, {})]
    truth = [({"x1": 1.0}, {"x1": 1.0}), ({"1": 0.5}, {})]
    scores = system_smape(inferred, truth)
    assert scores.per_dimension == (pytest.approx(0.5), 0.0)
    assert scores.pooled == pytest.approx(1.0 / 3.0)


def test_published_fhn_coefficients_score_close_to_truth():
    published = [tuple(pair) for pair in FHN.published]
    assert system_smape(published, truth_terms(FHN)).pooled < 0.01


def _tree_spec() -> DynamicsSpec:
    f_exprs, g_exprs = zip(*(known_expressions(FHN, k) for k in range(FHN.d)), strict=True)
    return spec_from_expressions(f_exprs, g_exprs, FHN.normalization)


def test_identical_rollouts_do_not_deviate():
    graph = DirectedGraph.from_arcs(3, [(0, 1), (1, 2), (2, 0)])
    f_terms, g_terms = zip(*truth_terms(FHN), strict=True)
    spec = spec_from_terms(f_terms, g_terms, FHN.normalization)
    comparison = rollout_compare(spec, spec, graph, random_initial_state(3, 2, seed=0), dt=0.01, T=1.0)
    assert comparison.max_deviation == (0.0, 0.0)
    assert comparison.blow_up is None


def test_tree_rollout_tracks_reference_dynamics():
    graph = DirectedGraph.from_arcs(3, [(0, 1), (1, 2), (2, 0)])
    inferred = _tree_spec()
    comparison = rollout_compare(inferred, FHN.dynamics(3), graph, random_initial_state(3, 2, seed=1), dt=0.01, T=5.0)
    assert max(comparison.max_deviation) < 1e-9


def test_published_fhn_rollout_stays_close():
    graph = DirectedGraph.from_arcs(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    f_terms, g_terms = zip(*FHN.published, strict=True)
    published = spec_from_terms(f_terms, g_terms, FHN.normalization)
    comparison = rollout_compare(published, FHN.dynamics(4), graph, random_initial_state(4, 2, seed=2), 0.01, 10.0)
    assert all(v < 0.05 for v in comparison.mean_deviation)


def test_write_rollout_files(tmp_path: Path):
    graph = DirectedGraph.from_arcs(2, [(0, 1)])
    inferred = _tree_spec()
    comparison = rollout_compare(inferred, FHN.dynamics(2), graph, random_initial_state(2, 2, seed=3), 0.01, 0.5)
    write_rollout(comparison, tmp_path / "rollout.csv", tmp_path / "rollout.svg", nodes=(0, 1))
    frame = pd.read_csv(tmp_path / "rollout.csv")
    assert list(frame.columns[:3]) == ["t", "true_x_0_0", "inferred_x_0_0"]
    assert len(frame) == 51
    np.testing.assert_allclose(frame["true_x_1_1"], frame["inferred_x_1_1"], atol=1e-9)
    assert (tmp_path / "rollout.svg").read_text().lstrip().startswith("<?xml")
