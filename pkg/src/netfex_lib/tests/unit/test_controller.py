import json
import numpy as np
import pytest
import torch
from netfex_lib.exceptions import ParameterError
from netfex_lib.models.expression import OperatorSet
from netfex_lib.services.controller import Controller, SampledSequence, policy_update, quantile_threshold
from netfex_lib.services.expressions import build_template

OPS = OperatorSet()


def _controller(depth: int = 2, **kwargs) -> Controller:
    return Controller(build_template(depth, 2), OPS, **kwargs)


def _favor(controller: Controller, node: int, choice: int, logit: float = 100.0) -> None:
    with torch.no_grad():
        controller.network[2].bias[controller.slices[node].start + choice] = logit


def test_output_layout_follows_preorder():
    controller = _controller(2)
    assert controller.output_dim == 3 * len(OPS.unary) + len(OPS.binary)
    assert [s.stop - s.start for s in controller.slices] == [11, 3, 11, 11]


def test_zero_init_gives_uniform_pmfs():
    pmfs = _controller(zero_init=True).forward()
    for pmf in pmfs:
        np.testing.assert_allclose(pmf, np.full(pmf.size, 1.0 / pmf.size))


def test_pmfs_sum_to_one():
    for pmf in _controller(3, seed=4).forward():
        assert pmf.sum() == pytest.approx(1.0)
        assert np.all(pmf >= 0.0)


def test_same_seed_same_weights():
    np.testing.assert_array_equal(_controller(seed=9).forward()[0], _controller(seed=9).forward()[0])


def test_greedy_draw_follows_point_mass():
    controller = _controller(1, zero_init=True)
    _favor(controller, 0, 2)
    rng = np.random.default_rng(0)
    draws = [controller.sample(0.0, rng).sequence for _ in range(50)]
    assert set(draws) == {(2,)}


def test_full_exploration_is_uniform():
    controller = _controller(1, zero_init=True)
    _favor(controller, 0, 2)
    rng = np.random.default_rng(1)
    samples = [controller.sample(1.0, rng) for _ in range(5500)]
    counts = np.bincount([s.sequence[0] for s in samples], minlength=len(OPS.unary))
    assert all(s.explored == (True,) for s in samples)
    assert counts.min() > 400
    assert counts.max() < 600


def test_sample_rejects_bad_epsilon():
    with pytest.raises(ParameterError):
        _controller().sample(1.5, np.random.default_rng(0))


def test_log_prob_is_sum_over_nodes():
    controller = _controller(2, seed=3)
    sample = controller.sample(0.0, np.random.default_rng(2))
    expected = sum(np.log(pmf[c]) for pmf, c in zip(controller.forward(), sample.sequence, strict=True))
    assert sample.log_prob == pytest.approx(expected)
    assert float(controller.sequence_log_prob(sample.sequence)) == pytest.approx(expected)


def test_quantile_threshold():
    scores = list(range(1, 11))
    assert quantile_threshold(scores, 0.5) == pytest.approx(5.5)
    assert quantile_threshold(scores, 1.0) == 1.0


@pytest.mark.parametrize("nu", [0.0, 1.5])
def test_quantile_rejects_bad_nu(nu: float):
    with pytest.raises(ParameterError):
        quantile_threshold([1.0], nu)


def test_equal_scores_leave_weights_untouched():
    controller = _controller(seed=1)
    before = [p.detach().clone() for p in controller.network.parameters()]
    rng = np.random.default_rng(0)
    batch = [(controller.sample(0.1, rng), 0.5) for _ in range(8)]
    assert not policy_update(controller, batch, nu=0.5)
    for old, new in zip(before, controller.network.parameters(), strict=True):
        assert torch.equal(old, new)


def test_explicit_threshold_reinforces_single_sample():
    controller = _controller(seed=2)
    sample = controller.sample(0.0, np.random.default_rng(5))
    before = float(controller.sequence_log_prob(sample.sequence))
    assert policy_update(controller, [(sample, 1.0)], nu=0.5, threshold=0.0)
    assert float(controller.sequence_log_prob(sample.sequence)) > before


def test_bandit_learns_rewarded_operator():
    controller = Controller(build_template(1, 1), OPS, seed=0, lr=0.01, zero_init=True)
    target = OPS.unary.index("sin")
    rng = np.random.default_rng(0)
    start = controller.forward()[0][target]
    for _ in range(100):
        batch: list[tuple[SampledSequence, float]] = []
        for _ in range(20):
            sample = controller.sample(0.1, rng)
            batch.append((sample, float(sample.sequence[0] == target)))
        policy_update(controller, batch, nu=0.5)
    assert controller.forward()[0][target] - start > 0.3


def test_state_dict_survives_json_and_keeps_training_identically():
    trained = _controller(seed=6)
    rng = np.random.default_rng(3)
    batch = [(trained.sample(0.0, rng), float(k)) for k in range(6)]
    policy_update(trained, batch, nu=0.5)

    restored = _controller(seed=99)
    restored.load_state_dict(json.loads(json.dumps(trained.state_dict())))
    for a, b in zip(trained.forward(), restored.forward(), strict=True):
        np.testing.assert_array_equal(a, b)

    policy_update(trained, batch, nu=0.5)
    policy_update(restored, batch, nu=0.5)
    for a, b in zip(trained.forward(), restored.forward(), strict=True):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_state_dict_rejects_other_layout():
    with pytest.raises(ParameterError):
        _controller(3).load_state_dict(_controller(2).state_dict())
