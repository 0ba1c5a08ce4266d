"""Policy network over operator sequences and its risk-seeking policy-gradient update."""

from __future__ import annotations

import logging
import math
import numpy as np
import torch
from collections.abc import Sequence
from dataclasses import dataclass
from netfex_lib.exceptions import ParameterError
from netfex_lib.models.expression import OperatorSet, TreeTemplate
from torch import nn
from typing import Any

logger = logging.getLogger(__name__)

INPUT_DIM = 20
HIDDEN_DIM = 64


@dataclass(frozen=True)
class SampledSequence:
    """One operator per template node with the policy log-probability of each choice."""

    sequence: tuple[int, ...]
    log_probs: tuple[float, ...]
    explored: tuple[bool, ...]

    @property
    def log_prob(self) -> float:
        return float(sum(self.log_probs))


class Controller:
    """Fully connected policy: constant ones input -> tanh hidden layer -> per-node logits.

    The output is laid out node by node in preorder, each node owning one logit per
    operator of its arity, so its size is ``n_binary * |binary| + n_unary * |unary|``.
    """

    def __init__(
        self,
        template: TreeTemplate,
        operators: OperatorSet,
        seed: int = 0,
        lr: float = 2e-3,
        hidden: int = HIDDEN_DIM,
        zero_init: bool = False,
    ) -> None:
        self.template = template
        self.operators = operators
        self.slices: list[slice] = []
        offset = 0
        for node in template.nodes:
            width = len(operators.for_arity(node.arity))
            self.slices.append(slice(offset, offset + width))
            offset += width
        self.output_dim = offset
        self.network = nn.Sequential(
            nn.Linear(INPUT_DIM, hidden),
            nn.Tanh(),
            nn.Linear(hidden, self.output_dim),
        ).to(torch.float64)
        self._initialize(seed, zero_init)
        self.optimizer = torch.optim.Adam(self.network.parameters(), lr=lr)
        self._input = torch.ones(INPUT_DIM, dtype=torch.float64)

    def _initialize(self, seed: int, zero_init: bool) -> None:
        generator = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for layer in (self.network[0], self.network[2]):
                bound = 1.0 / math.sqrt(layer.in_features)
                for param in (layer.weight, layer.bias):
                    draw = torch.rand(param.shape, generator=generator, dtype=torch.float64)
                    param.copy_((2.0 * draw - 1.0) * bound)
            if zero_init:
                for param in self.network[2].parameters():
                    param.zero_()

    def log_pmfs(self) -> list[torch.Tensor]:
        logits = self.network(self._input)
        return [torch.log_softmax(logits[s], dim=0) for s in self.slices]

    def forward(self) -> list[np.ndarray]:
        """Per-node probability mass functions over that node's operators."""
        with torch.no_grad():
            return [lp.exp().numpy().copy() for lp in self.log_pmfs()]

    def sample(self, epsilon: float, rng: np.random.Generator) -> SampledSequence:
        """Epsilon-greedy draw; exploration steps still record the policy log-probability."""
        if not 0.0 <= epsilon <= 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
        with torch.no_grad():
            log_pmfs = [lp.numpy() for lp in self.log_pmfs()]
        choices, log_probs, explored = [], [], []
        for log_pmf in log_pmfs:
            n_ops = log_pmf.size
            if rng.random() < epsilon:
                choice = int(rng.integers(n_ops))
                explored.append(True)
            else:
                pmf = np.exp(log_pmf)
                choice = int(rng.choice(n_ops, p=pmf / pmf.sum()))
                explored.append(False)
            choices.append(choice)
            log_probs.append(float(log_pmf[choice]))
        return SampledSequence(tuple(choices), tuple(log_probs), tuple(explored))

    def sequence_log_prob(self, sequence: Sequence[int]) -> torch.Tensor:
        log_pmfs = self.log_pmfs()
        return torch.stack([lp[int(choice)] for lp, choice in zip(log_pmfs, sequence, strict=True)]).sum()

    def state_dict(self) -> dict[str, Any]:
        """JSON-ready weights and Adam moments."""
        optim = self.optimizer.state_dict()
        return {
            "output_dim": self.output_dim,
            "network": {k: v.tolist() for k, v in self.network.state_dict().items()},
            "optimizer": {
                "state": {
                    str(idx): {
                        "step": float(s["step"]),
                        "exp_avg": s["exp_avg"].tolist(),
                        "exp_avg_sq": s["exp_avg_sq"].tolist(),
                    }
                    for idx, s in optim["state"].items()
                },
                "param_groups": optim["param_groups"],
            },
        }

    def load_state_dict(self, payload: dict[str, Any]) -> None:
        if int(payload["output_dim"]) != self.output_dim:
            raise ParameterError(
                f"Checkpoint controller has {payload['output_dim']} outputs, template needs {self.output_dim}"
            )
        self.network.load_state_dict(
            {k: torch.tensor(v, dtype=torch.float64) for k, v in payload["network"].items()}
        )
        optim = payload["optimizer"]
        self.optimizer.load_state_dict(
            {
                "state": {
                    int(idx): {
                        "step": torch.tensor(s["step"]),
                        "exp_avg": torch.tensor(s["exp_avg"], dtype=torch.float64),
                        "exp_avg_sq": torch.tensor(s["exp_avg_sq"], dtype=torch.float64),
                    }
                    for idx, s in optim["state"].items()
                },
                "param_groups": optim["param_groups"],
            }
        )


def quantile_threshold(scores: Sequence[float], nu: float) -> float:
    """The ``(1 - nu)``-quantile of ``scores`` with linear interpolation."""
    if len(scores) == 0:
        raise ParameterError("Cannot take a quantile of an empty score list")
    if not 0.0 < nu <= 1.0:
        raise ParameterError(f"nu must lie in (0, 1], got {nu}")
    return float(np.quantile(np.asarray(scores, dtype=np.float64), 1.0 - nu, method="linear"))


def policy_update(
    controller: Controller,
    batch: Sequence[tuple[SampledSequence, float]],
    nu: float,
    threshold: float | None = None,
) -> bool:
    """One Adam ascent step on the risk-seeking objective.

    Only samples scoring at or above the threshold contribute, weighted by their score
    excess. ``threshold`` defaults to the batch ``(1 - nu)``-quantile. Returns whether a
    step was taken; a batch whose advantages are all zero leaves the weights untouched.
    """
    if not batch:
        raise ParameterError("policy_update needs at least one sample")
    scores = np.array([score for _, score in batch], dtype=np.float64)
    cutoff = quantile_threshold(scores, nu) if threshold is None else float(threshold)
    advantages = np.where(scores >= cutoff, scores - cutoff, 0.0)
    if not np.any(advantages != 0.0):
        logger.debug("🟰 No positive advantage in batch, skipping controller update")
        return False

    log_pmfs = controller.log_pmfs()
    objective = torch.zeros((), dtype=torch.float64)
    for (sample, _), advantage in zip(batch, advantages, strict=True):
        if advantage == 0.0:
            continue
        log_prob = torch.stack([lp[c] for lp, c in zip(log_pmfs, sample.sequence, strict=True)]).sum()
        objective = objective + float(advantage) * log_prob
    objective = objective / len(batch)

    controller.optimizer.zero_grad()
    (-objective).backward()
    controller.optimizer.step()
    return True
