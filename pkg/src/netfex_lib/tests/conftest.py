import numpy as np
import pytest
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DerivativeEstimate, TimeSeries
from netfex_lib.services.networks import generate_ba, prune_to_directed
from netfex_lib.services.presets import FHN
from netfex_lib.services.simulation import integrate, random_initial_state, rhs


@pytest.fixture(scope="session")
def fhn_graph() -> DirectedGraph:
    """Small directed scale-free network."""
    return prune_to_directed(generate_ba(12, 2, seed=3), 0.3, seed=4)


@pytest.fixture(scope="session")
def fhn_series(fhn_graph: DirectedGraph) -> TimeSeries:
    spec = FHN.dynamics(fhn_graph.n_nodes)
    x0 = random_initial_state(fhn_graph.n_nodes, FHN.d, seed=5)
    return integrate(spec, fhn_graph, x0, dt=0.01, T=2.0)


@pytest.fixture(scope="session")
def fhn_exact(fhn_graph: DirectedGraph, fhn_series: TimeSeries) -> DerivativeEstimate:
    """States paired with their exact time derivatives instead of a stencil estimate."""
    spec = FHN.dynamics(fhn_graph.n_nodes)
    states = fhn_series.values
    derivatives = np.stack([rhs(spec, fhn_graph, states[:, :, k]) for k in range(states.shape[2])], axis=2)
    return DerivativeEstimate(states=states, derivatives=derivatives, times=fhn_series.times, dt=fhn_series.dt)
