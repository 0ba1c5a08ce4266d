"""Gradients with respect to expression parameters and the optimizers that use them."""

from __future__ import annotations

import logging
import math
import numpy as np
import torch
from collections.abc import Callable
from dataclasses import dataclass, field
from netfex_lib.exceptions import NumericError, ParameterError
from typing import Literal

logger = logging.getLogger(__name__)

LossFn = Callable[[torch.Tensor], torch.Tensor]
ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

CURVATURE_EPS = 1e-12
GRADIENT_TOL = 1e-10


@dataclass(eq=False)
class GradientTape:
    """One recorded evaluation of a scalar loss and its reverse-mode adjoint."""

    theta: torch.Tensor
    loss: torch.Tensor

    @classmethod
    def record(cls, loss_fn: LossFn, theta: np.ndarray) -> GradientTape:
        leaf = torch.tensor(np.asarray(theta, dtype=np.float64), dtype=torch.float64, requires_grad=True)
        loss = loss_fn(leaf)
        if loss.dim() != 0:
            raise ParameterError(f"Loss must be a scalar, got shape {tuple(loss.shape)}")
        if not math.isfinite(float(loss.detach())):
            raise NumericError("Loss is not finite")
        return cls(leaf, loss)

    @property
    def value(self) -> float:
        return float(self.loss.detach())

    def gradient(self) -> np.ndarray:
        (grad,) = torch.autograd.grad(self.loss, self.theta, allow_unused=True)
        if grad is None:
            return np.zeros(self.theta.numel())
        out = grad.detach().numpy().copy()
        if not np.isfinite(out).all():
            raise NumericError("Gradient is not finite")
        return out


def value_and_grad(loss_fn: LossFn) -> ValueAndGrad:
    def _evaluate(theta: np.ndarray) -> tuple[float, np.ndarray]:
        tape = GradientTape.record(loss_fn, theta)
        return tape.value, tape.gradient()

    return _evaluate


def grad_theta(loss_fn: LossFn, theta: np.ndarray) -> np.ndarray:
    """Exact gradient of ``loss_fn`` at ``theta``."""
    return GradientTape.record(loss_fn, theta).gradient()


@dataclass(eq=False)
class AdamState:
    """Bias-corrected Adam over one flat parameter vector, backed by ``torch.optim.Adam``."""

    param: torch.Tensor
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    optimizer: torch.optim.Adam = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.optimizer = torch.optim.Adam([self.param], lr=self.lr, betas=self.betas, eps=self.eps)

    @classmethod
    def create(cls, theta: np.ndarray, lr: float = 1e-3) -> AdamState:
        param = torch.tensor(np.asarray(theta, dtype=np.float64), dtype=torch.float64, requires_grad=True)
        return cls(param, lr=lr)

    @property
    def theta(self) -> np.ndarray:
        return self.param.detach().numpy().copy()

    def step(self, loss_fn: LossFn) -> float:
        """One optimizer step on ``loss_fn``; returns the loss before the step."""
        self.optimizer.zero_grad()
        loss = loss_fn(self.param)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericError("Loss is not finite")
        loss.backward()
        if not bool(torch.isfinite(self.param.grad).all()):
            raise NumericError("Gradient is not finite")
        self.optimizer.step()
        return value


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Apply one Adam update to ``theta`` given an externally computed gradient."""
    with torch.no_grad():
        state.param.copy_(torch.as_tensor(np.asarray(theta, dtype=np.float64)))
    state.param.grad = torch.as_tensor(np.asarray(grad, dtype=np.float64)).clone()
    state.optimizer.step()
    return state.theta


@dataclass(eq=False)
class BfgsState:
    """Quasi-Newton iterate with inverse-Hessian approximation ``H``."""

    theta: np.ndarray
    loss: float
    grad: np.ndarray
    H: np.ndarray
    lr: float = 1.0
    iterations: int = 0
    stopped: Literal["converged", "rejected", "max_iters"] | None = None
    history: list[float] = field(default_factory=list)

    @classmethod
    def start(cls, theta: np.ndarray, fn: ValueAndGrad, lr: float = 1.0) -> BfgsState:
        theta = np.array(theta, dtype=np.float64)
        loss, grad = fn(theta)
        return cls(theta=theta, loss=loss, grad=grad, H=np.eye(theta.size), lr=lr, history=[loss])


def _update_inverse_hessian(H: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    curvature = float(y @ s)
    if curvature <= CURVATURE_EPS:
        return np.eye(H.shape[0])
    rho = 1.0 / curvature
    eye = np.eye(H.shape[0])
    H_new = (eye - rho * np.outer(s, y)) @ H @ (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
    return 0.5 * (H_new + H_new.T)


def bfgs_step(state: BfgsState, fn: ValueAndGrad) -> BfgsState:
    """One fixed-step iteration ``theta <- theta - lr * H g``.

    A step whose loss is non-finite, or finite but higher than the current one, is rolled
    back and the state is marked ``rejected``. Accepted steps therefore never increase
    the loss; with a fixed step and no line search this rollback is the only step control.
    A vanishing gradient marks the state ``converged``.
    """
    if state.stopped is not None:
        return state
    if np.abs(state.grad).max(initial=0.0) < GRADIENT_TOL:
        state.stopped = "converged"
        return state
    candidate = state.theta - state.lr * (state.H @ state.grad)
    try:
        loss, grad = fn(candidate)
    except NumericError:
        logger.debug(f"↩️ BFGS step {state.iterations} produced a non-finite loss, rolling back")
        state.stopped = "rejected"
        return state
    if not np.isfinite(candidate).all() or loss > state.loss:
        logger.debug(f"↩️ BFGS step {state.iterations} increased the loss, rolling back")
        state.stopped = "rejected"
        return state
    state.H = _update_inverse_hessian(state.H, candidate - state.theta, grad - state.grad)
    state.theta, state.loss, state.grad = candidate, loss, grad
    state.iterations += 1
    state.history.append(loss)
    return state


def bfgs_minimize(theta: np.ndarray, fn: ValueAndGrad, max_iters: int, lr: float = 1.0) -> BfgsState:
    """Run up to ``max_iters`` BFGS iterations from ``theta``."""
    if max_iters < 0:
        raise ParameterError(f"max_iters must be non-negative, got {max_iters}")
    state = BfgsState.start(theta, fn, lr=lr)
    while state.stopped is None and state.iterations < max_iters:
        state = bfgs_step(state, fn)
    if state.stopped is None:
        state.stopped = "max_iters"
    return state


@dataclass(frozen=True)
class CosineSchedule:
    lr0: float
    total_steps: int
    lr_min: float = 0.0

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ParameterError(f"total_steps must be at least 1, got {self.total_steps}")

    def factor(self, t: int) -> float:
        """Multiplier relative to ``lr0``, in the form ``torch.optim.lr_scheduler.LambdaLR`` expects."""
        return cosine_lr(self, t) / self.lr0 if self.lr0 else 0.0


def cosine_lr(schedule: CosineSchedule, t: int) -> float:
    progress = min(max(t, 0), schedule.total_steps) / schedule.total_steps
    return schedule.lr_min + 0.5 * (schedule.lr0 - schedule.lr_min) * (1.0 + math.cos(math.pi * progress))
