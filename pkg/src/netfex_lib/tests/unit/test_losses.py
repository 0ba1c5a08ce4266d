import math
import numpy as np
import pytest
import torch
from netfex_lib.exceptions import ParameterError, PreconditionError
from netfex_lib.models.expression import OperatorSet
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DerivativeEstimate, TimeSeries
from netfex_lib.services.expressions import build_template, expression_from_names
from netfex_lib.services.losses import LossContext, PairCounter, full_loss, random_partition, rbm_loss
from netfex_lib.services.presets import FHN, known_expressions


def _ctx(estimate: DerivativeEstimate, graph: DirectedGraph, dim: int = 0, **kwargs) -> LossContext:
    return LossContext.from_estimate(estimate, graph, dim, normalization=FHN.normalization, **kwargs)


def _complete_context(n: int, pairing: str) -> LossContext:
    graph = DirectedGraph.from_arcs(n, [(i, j) for i in range(n) for j in range(n) if i != j])
    rng = np.random.default_rng(0)
    return LossContext(
        graph=graph,
        states=torch.from_numpy(rng.uniform(-1, 1, size=(n, 5, 2))),
        targets=torch.from_numpy(rng.uniform(-1, 1, size=(n, 5))),
        dt=0.01,
        pairing=pairing,
    )


def test_true_expressions_fit_exact_derivatives(fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph):
    for dim in range(FHN.d):
        f_expr, g_expr = known_expressions(FHN, dim)
        assert full_loss(_ctx(fhn_exact, fhn_graph, dim), f_expr, g_expr) < 1e-20


def test_true_expressions_fit_stencil_derivatives(fhn_series: TimeSeries, fhn_graph: DirectedGraph):
    ctx = LossContext.from_series(fhn_series, fhn_graph, 0, normalization=FHN.normalization)
    f_expr, g_expr = known_expressions(FHN, 0)
    assert full_loss(ctx, f_expr, g_expr) < 1e-8


def test_graph_without_arcs_ignores_interaction(fhn_exact: DerivativeEstimate):
    empty = DirectedGraph.from_arcs(fhn_exact.states.shape[0], [])
    f_expr, g_expr = known_expressions(FHN, 0)
    _, zero_g = known_expressions(FHN, 1)
    ctx = _ctx(fhn_exact, empty)
    assert full_loss(ctx, f_expr, g_expr) == full_loss(ctx, f_expr, zero_g)


@pytest.mark.parametrize("pairing", ["arcs", "dense"])
def test_single_batch_matches_full_loss(fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph, pairing: str):
    f_expr, _ = known_expressions(FHN, 0)
    g_expr = expression_from_names(build_template(1, 4), OperatorSet(), ["sin"], [0.3, -0.2, 0.5, 0.1, 0.05])
    ctx = _ctx(fhn_exact, fhn_graph, pairing=pairing)
    rbm = rbm_loss(ctx, f_expr, g_expr, batch_size=fhn_graph.n_nodes, seed=1)
    assert rbm == pytest.approx(full_loss(ctx, f_expr, g_expr), rel=1e-10)


def test_zero_interaction_makes_batches_irrelevant(fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph):
    f_expr, g_expr = known_expressions(FHN, 1)
    ctx = _ctx(fhn_exact, fhn_graph, 1)
    assert rbm_loss(ctx, f_expr, g_expr, batch_size=4, seed=2) == full_loss(ctx, f_expr, g_expr)


@pytest.mark.parametrize("pairing", ["arcs", "dense"])
def test_batches_evaluate_fewer_pairs(pairing: str):
    ctx = _complete_context(6, pairing)
    f_expr, g_expr = known_expressions(FHN, 0)
    full_counter, rbm_counter = PairCounter(), PairCounter()
    full_loss(ctx.with_counter(full_counter), f_expr, g_expr)
    rbm_loss(ctx.with_counter(rbm_counter), f_expr, g_expr, batch_size=3, seed=0)
    assert full_counter.pairs == 30
    assert rbm_counter.pairs == 12


def test_mean_field_rescales_batch_sums():
    ctx = _complete_context(6, "arcs")
    f_expr, _ = known_expressions(FHN, 1)
    g_expr = expression_from_names(build_template(1, 4), OperatorSet(), ["1"], [1.0, 0.0, 0.0, 0.0, 0.0])
    # a constant interaction of 1 sums to N - 1 once rescaled, exactly as with every pair present
    scaled = rbm_loss(ctx, f_expr, g_expr, batch_size=3, seed=0, mean_field=True)
    assert scaled == pytest.approx(full_loss(ctx, f_expr, g_expr), rel=1e-12)


def test_random_partition_covers_every_node():
    batches = random_partition(10, 4, np.random.default_rng(0))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


@pytest.mark.parametrize("batch_size", [1, 11])
def test_random_partition_rejects_bad_sizes(batch_size: int):
    with pytest.raises(ParameterError):
        random_partition(10, batch_size, np.random.default_rng(0))


@pytest.mark.parametrize("full_neighborhood", [False, True])
def test_restriction_to_all_nodes_is_neutral(
    fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph, full_neighborhood: bool
):
    f_expr, g_expr = known_expressions(FHN, 0)
    g_expr = g_expr.with_theta([0.8, 0.1, -0.7, 0.0, 0.05])
    ctx = _ctx(fhn_exact, fhn_graph)
    restricted = ctx.restricted(range(fhn_graph.n_nodes), full_neighborhood=full_neighborhood)
    assert full_loss(restricted, f_expr, g_expr) == pytest.approx(full_loss(ctx, f_expr, g_expr), rel=1e-12)


def test_time_chunks_match_single_pass(fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph):
    f_expr, g_expr = known_expressions(FHN, 0)
    f_expr = f_expr.with_theta(np.asarray(f_expr.theta) * 0.9)
    ctx = _ctx(fhn_exact, fhn_graph)
    assert full_loss(ctx, f_expr, g_expr, time_chunk=37) == pytest.approx(full_loss(ctx, f_expr, g_expr), rel=1e-12)


def test_overflowing_expression_gives_infinite_loss(fhn_exact: DerivativeEstimate, fhn_graph: DirectedGraph):
    _, g_expr = known_expressions(FHN, 0)
    f_expr = expression_from_names(build_template(1, 2), OperatorSet(), ["1"], [1e31, 0.0, 0.0])
    assert full_loss(_ctx(fhn_exact, fhn_graph), f_expr, g_expr) == math.inf


def test_context_rejects_node_mismatch(fhn_exact: DerivativeEstimate):
    with pytest.raises(PreconditionError):
        _ctx(fhn_exact, DirectedGraph.from_arcs(3, []))
