import numpy as np
import pytest
from netfex_lib.exceptions import ParameterError, PreconditionError
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.services.networks import (
    generate_ba,
    generate_er,
    load_edge_list,
    perturb_links,
    prune_to_directed,
    save_edge_list,
)
from pathlib import Path


def test_er_complete_graph_orients_every_pair():
    g = generate_er(3, 1.0, seed=7)
    assert len(g.undirected_edges()) == 3
    assert 3 <= g.n_arcs <= 6


def test_er_without_edges():
    assert generate_er(3, 0.0, seed=1).n_arcs == 0


def test_er_mean_degree():
    means = [2 * len(generate_er(100, 0.05, seed=s).undirected_edges()) / 100 for s in range(100)]
    assert np.mean(means) == pytest.approx(4.95, abs=0.3)


@pytest.mark.parametrize(("n", "p"), [(1, 0.5), (10, -0.1), (10, 1.5)])
def test_er_rejects_bad_arguments(n: int, p: float):
    with pytest.raises(ParameterError):
        generate_er(n, p, seed=0)


def test_ba_first_arrival_links_every_seed_node():
    g = generate_ba(6, 5, seed=0)
    assert g.undirected_edges() == {(k, 5) for k in range(5)}


def test_ba_edge_count_and_reciprocity():
    g = generate_ba(100, 5, seed=11)
    assert len(g.undirected_edges()) == 475
    arcs = set(g.arcs)
    assert all((d, s) in arcs for s, d in arcs)


def test_ba_rejects_m_not_below_n():
    with pytest.raises(ParameterError):
        generate_ba(5, 5, seed=0)


def test_prune_zero_fraction_is_identity():
    g = generate_ba(20, 2, seed=1)
    assert prune_to_directed(g, 0.0, seed=2) == g


def test_prune_reciprocal_pair_loses_one_arc():
    g = DirectedGraph.from_arcs(2, [(0, 1), (1, 0)])
    pruned = prune_to_directed(g, 0.5, seed=3)
    assert pruned.n_arcs == 1
    assert pruned.is_weakly_connected()


@pytest.mark.parametrize("seed", range(20))
def test_prune_keeps_weak_connectivity(seed: int):
    g = generate_ba(100, 5, seed=seed)
    pruned = prune_to_directed(g, 0.5, seed=seed + 100)
    assert pruned.is_weakly_connected()
    assert set(pruned.arcs) <= set(g.arcs)


def test_prune_requires_weakly_connected_input():
    with pytest.raises(PreconditionError):
        prune_to_directed(DirectedGraph.from_arcs(4, [(0, 1), (2, 3)]), 0.5, seed=0)


def test_perturb_zero_fraction_is_identity():
    g = generate_ba(25, 5, seed=0)
    assert perturb_links(g, 0.0, "add", seed=1) == g


def test_perturb_add_inserts_rounded_fraction():
    g = generate_ba(25, 5, seed=0)
    assert g.n_arcs == 200
    noisy = perturb_links(g, 0.15, "add", seed=1)
    assert noisy.n_arcs == 230
    assert set(g.arcs) <= set(noisy.arcs)


def test_perturb_remove_keeps_weak_connectivity():
    g = prune_to_directed(generate_ba(60, 3, seed=1), 0.3, seed=2)
    thinned = perturb_links(g, 0.15, "remove", seed=5)
    assert thinned.n_arcs == g.n_arcs - round(0.15 * g.n_arcs)
    assert thinned.is_weakly_connected()


def test_edge_list_keeps_isolated_nodes(tmp_path: Path):
    g = DirectedGraph.from_arcs(5, [(0, 1), (2, 1)])
    path = tmp_path / "graph.edgelist"
    save_edge_list(g, path)
    assert path.read_text().splitlines()[0] == "# nodes 5"
    assert load_edge_list(path) == g


def test_in_degree_counts_incoming_arcs():
    g = DirectedGraph.from_arcs(3, [(0, 2), (1, 2), (2, 0)])
    assert g.in_degree.tolist() == [1, 0, 2]
    assert sorted(g.in_neighbors(2).tolist()) == [0, 1]
    assert g.adjacency()[2, 0] == 1.0


@pytest.mark.parametrize("arcs", [[(0, 0)], [(0, 3)], [(0, 1), (0, 1)]])
def test_graph_rejects_invalid_arcs(arcs: list[tuple[int, int]]):
    with pytest.raises(ParameterError):
        DirectedGraph.from_arcs(3, arcs)
