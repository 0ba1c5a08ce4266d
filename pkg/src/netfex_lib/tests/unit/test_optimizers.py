import numpy as np
import pytest
import torch
from netfex_lib.exceptions import NumericError
from netfex_lib.models.expression import Expression, OperatorSet
from netfex_lib.services.expressions import build_template, evaluate_tensor
from netfex_lib.services.optimizers import (
    AdamState,
    CosineSchedule,
    adam_step,
    bfgs_minimize,
    cosine_lr,
    grad_theta,
    value_and_grad,
)

SMOOTH = OperatorSet(unary=("0", "1", "id", "square", "sin", "cos", "tanh", "sigmoid"))


def _random_problem(seed: int) -> tuple[Expression, torch.Tensor, torch.Tensor]:
    rng = np.random.default_rng(seed)
    template = build_template(int(rng.integers(1, 4)), 2)
    sequence = [int(rng.integers(len(SMOOTH.for_arity(n.arity)))) for n in template.nodes]
    expr = Expression(template, SMOOTH, tuple(sequence), rng.uniform(-1, 1, template.n_params))
    x = torch.from_numpy(rng.uniform(-1, 1, size=(10, 2)))
    y = torch.from_numpy(rng.uniform(-1, 1, size=10))
    return expr, x, y


def test_gradient_of_square():
    np.testing.assert_allclose(grad_theta(lambda th: (th**2).sum(), np.array([3.0])), [6.0])


@pytest.mark.parametrize("seed", range(30))
def test_gradient_matches_central_differences(seed: int):
    expr, x, y = _random_problem(seed)

    def loss(th: torch.Tensor) -> torch.Tensor:
        return ((evaluate_tensor(expr, th, x) - y) ** 2).mean()

    theta = expr.theta.copy()
    grad = grad_theta(loss, theta)
    h = 1e-5
    fd = np.empty_like(theta)
    with torch.no_grad():
        for k in range(theta.size):
            step = np.zeros_like(theta)
            step[k] = h
            upper = float(loss(torch.from_numpy(theta + step)))
            lower = float(loss(torch.from_numpy(theta - step)))
            fd[k] = (upper - lower) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def test_constant_leaf_has_no_scale_gradient():
    expr = Expression(build_template(1, 2), OperatorSet(), (0,), np.array([0.3, -0.2, 0.5]))
    x = torch.ones(4, 2, dtype=torch.float64)
    grad = grad_theta(lambda th: (evaluate_tensor(expr, th, x) ** 2).sum(), expr.theta)
    np.testing.assert_array_equal(grad[:2], [0.0, 0.0])
    assert grad[2] != 0.0


def test_non_finite_loss_raises():
    with pytest.raises(NumericError):
        grad_theta(lambda th: th.sum() / 0.0, np.array([1.0]))


def test_adam_first_step_moves_by_learning_rate():
    state = AdamState.create(np.zeros(1), lr=1e-3)
    theta = adam_step(state, np.zeros(1), np.ones(1))
    assert abs(theta[0] + 0.001) < 1e-6


def test_adam_zero_gradient_keeps_theta():
    state = AdamState.create(np.array([0.4, -1.0]))
    theta = np.array([0.4, -1.0])
    for _ in range(5):
        theta = adam_step(state, theta, np.zeros(2))
    np.testing.assert_array_equal(theta, [0.4, -1.0])


def test_adam_is_deterministic():
    def run() -> np.ndarray:
        state = AdamState.create(np.array([1.0, 2.0]), lr=0.1)
        for _ in range(10):
            state.step(lambda th: ((th - 3.0) ** 2).sum())
        return state.theta

    np.testing.assert_array_equal(run(), run())


def test_adam_step_rejects_non_finite_loss():
    state = AdamState.create(np.array([1.0]))
    with pytest.raises(NumericError):
        state.step(lambda th: th.sum() / 0.0)


def test_bfgs_solves_quadratic_in_one_step():
    fn = value_and_grad(lambda th: 0.5 * (th**2).sum())
    state = bfgs_minimize(np.array([3.0, -4.0]), fn, max_iters=10)
    np.testing.assert_allclose(state.theta, 0.0, atol=1e-12)
    assert state.stopped == "converged"
    assert state.iterations <= 2


def test_bfgs_at_optimum_does_not_move():
    fn = value_and_grad(lambda th: 0.5 * (th**2).sum())
    state = bfgs_minimize(np.zeros(3), fn, max_iters=5)
    assert state.iterations == 0
    np.testing.assert_array_equal(state.theta, 0.0)


def test_bfgs_rosenbrock_accepted_steps_decrease():
    fn = value_and_grad(lambda th: (1 - th[0]) ** 2 + 100 * (th[1] - th[0] ** 2) ** 2)
    state = bfgs_minimize(np.array([-1.2, 1.0]), fn, max_iters=50, lr=1e-3)
    assert len(state.history) > 1
    assert np.all(np.diff(state.history) <= 0)


def test_bfgs_rolls_back_an_increasing_step():
    fn = value_and_grad(lambda th: (th**4).sum())
    state = bfgs_minimize(np.array([2.0]), fn, max_iters=5)
    assert state.stopped == "rejected"
    np.testing.assert_array_equal(state.theta, [2.0])


def test_cosine_schedule_endpoints():
    schedule = CosineSchedule(lr0=0.01, total_steps=100)
    assert cosine_lr(schedule, 0) == pytest.approx(0.01)
    assert cosine_lr(schedule, 50) == pytest.approx(0.005)
    assert cosine_lr(schedule, 100) == pytest.approx(0.0, abs=1e-15)
    assert schedule.factor(50) == pytest.approx(0.5)
