import math
import numpy as np
import pytest
from netfex_lib.exceptions import BlowUpError, ParameterError
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DynamicsSpec
from netfex_lib.services.presets import FHN, HR, ROSSLER
from netfex_lib.services.simulation import integrate, load_series, rhs, save_series
from pathlib import Path


def _isolated(n: int = 1) -> DirectedGraph:
    return DirectedGraph.from_arcs(n, [])


def _decay() -> DynamicsSpec:
    return DynamicsSpec("Custom", 1, self_fn=lambda x: -x)


def test_hr_isolated_node_at_origin():
    out = rhs(HR.dynamics(1), _isolated(), np.zeros((1, 3)))
    np.testing.assert_allclose(out[0], [3.24, 1.0, 0.0256])


def test_fhn_isolated_node():
    out = rhs(FHN.dynamics(1), _isolated(), np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(out[0], [0.0, 0.78], atol=1e-15)


def test_rossler_isolated_node_unit_frequency():
    spec = DynamicsSpec("Rossler", 3, ROSSLER.params, omega=np.ones(1))
    np.testing.assert_allclose(rhs(spec, _isolated(), np.zeros((1, 3)))[0], [0.0, 0.0, 0.2])


def test_fhn_diffusive_coupling_normalized_by_in_degree():
    g = DirectedGraph.from_arcs(2, [(0, 1)])
    out = rhs(FHN.dynamics(2), g, np.array([[1.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.0, 0.78], [-1.0, 0.28]], atol=1e-15)


def test_rossler_frequencies_drawn_once_per_seed():
    a = ROSSLER.dynamics(10, seed=4).omega
    b = ROSSLER.dynamics(10, seed=4).omega
    np.testing.assert_array_equal(a, b)
    assert a.shape == (10,)


def test_rhs_rejects_wrong_state_shape():
    with pytest.raises(ParameterError):
        rhs(FHN.dynamics(2), _isolated(2), np.zeros((2, 3)))


def test_rk4_exponential_decay():
    ts = integrate(_decay(), _isolated(), np.array([1.0]), dt=0.01, T=1.0)
    assert ts.n_samples == 101
    assert abs(ts.values[0, 0, -1] - math.exp(-1.0)) < 1e-9


def test_single_step_horizon_has_two_samples():
    assert integrate(_decay(), _isolated(), np.array([1.0]), dt=0.1, T=0.1).n_samples == 2


def test_rk4_fourth_order_convergence():
    finals = [integrate(_decay(), _isolated(), np.array([1.0]), dt, 1.0).values[0, 0, -1] for dt in (0.1, 0.05)]
    errors = [abs(v - math.exp(-1.0)) for v in finals]
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_blow_up_reports_step_and_partial_series():
    spec = DynamicsSpec("Custom", 1, self_fn=lambda x: x**2)
    with pytest.raises(BlowUpError) as info:
        integrate(spec, _isolated(), np.array([1.0]), dt=0.01, T=2.0)
    assert 90 < info.value.step < 110
    assert info.value.partial.n_samples == info.value.step


@pytest.mark.parametrize(("dt", "T"), [(0.0, 1.0), (-0.1, 1.0), (0.5, 0.1)])
def test_integrate_rejects_bad_steps(dt: float, T: float):
    with pytest.raises(ParameterError):
        integrate(_decay(), _isolated(), np.array([1.0]), dt=dt, T=T)


def test_series_csv_layout(tmp_path: Path):
    ts = integrate(FHN.dynamics(3), _isolated(3), np.full((3, 2), 0.1), dt=0.01, T=0.1)
    path = tmp_path / "series.csv"
    save_series(ts, path, {"preset": "fhn"})
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "x_0_0", "x_0_1"]
    assert len(header) == 1 + 3 * 2
    loaded, meta = load_series(path)
    np.testing.assert_allclose(loaded.values, ts.values)
    assert meta["preset"] == "fhn"
    assert loaded.dt == pytest.approx(0.01)
