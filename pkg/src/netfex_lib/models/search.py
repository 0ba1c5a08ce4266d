"""Search configuration, scored candidates and the candidate pool."""

from __future__ import annotations

import numpy as np
from collections.abc import Iterator
from dataclasses import dataclass, field
from netfex_lib.exceptions import ParameterError
from netfex_lib.models.expression import BINARY_OPERATORS, UNARY_OPERATORS, Expression
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Any, Literal


class SearchConfig(BaseModel):
    """Budgets, rates and switches of one structure search."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    iterations: int = Field(300, ge=1, description="Controller iterations T")
    batch: int = Field(10, ge=1, description="Operator sequences sampled per iteration M")
    adam_steps: int = Field(100, ge=0, description="Coarse-tune Adam steps T1")
    bfgs_steps: int = Field(20, ge=0, description="Coarse-tune BFGS iterations T2")
    fine_tune_steps: int = Field(20000, ge=0, description="Fine-tune Adam steps T3")
    pool_size: int = Field(15, ge=1, description="Candidate pool capacity K")
    fine_tune_runs: int = Field(5, ge=1, description="Node subsamples per fine-tune L")
    fine_tune_nodes: int = Field(20, ge=1, description="Nodes per subsample S")
    tau: float = Field(0.01, ge=0.0, description="Coefficient filtering threshold")
    epsilon: float = Field(0.1, ge=0.0, le=1.0, description="Exploration probability")
    nu: float = Field(0.5, gt=0.0, le=1.0, description="Risk-seeking quantile")
    rbm_batch: int = Field(32, ge=2, description="Random batch size p")
    lr_adam: float = Field(1e-3, gt=0.0)
    lr_bfgs: float = Field(1.0, gt=0.0)
    lr_controller: float = Field(2e-3, gt=0.0)
    lr_fine_tune: float = Field(1e-3, gt=0.0)
    seed: int = 0

    depth_f: int = Field(3, ge=1, le=6)
    depth_g: int = Field(3, ge=1, le=6)
    unary: tuple[str, ...] = UNARY_OPERATORS
    binary: tuple[str, ...] = BINARY_OPERATORS
    dims: tuple[int, ...] | None = None
    normalization: Literal["none", "in_degree"] = "none"
    pairing: Literal["arcs", "dense"] = "arcs"
    rbm_mean_field: bool = False
    rbm_fixed_partition: bool = False
    fine_tune_full_neighborhood: bool = False
    coarse_time_stride: int = Field(1, ge=1)
    fine_time_stride: int = Field(1, ge=1)
    loss_time_chunk: int = Field(2000, ge=1)
    validation_seed: int = 12345
    checkpoint_every: int = Field(10, ge=1)
    threads: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_operators(self) -> SearchConfig:
        unknown = [op for op in self.unary if op not in UNARY_OPERATORS]
        unknown += [op for op in self.binary if op not in BINARY_OPERATORS]
        if unknown:
            raise ValueError(f"Unknown operators: {', '.join(unknown)}")
        if not self.unary or not self.binary:
            raise ValueError("Operator lists must not be empty")
        return self


@dataclass(frozen=True, eq=False)
class Candidate:
    """Operator sequences for both trees, their coarse-tuned parameters and score."""

    f_sequence: tuple[int, ...]
    g_sequence: tuple[int, ...]
    theta_f: np.ndarray = field(repr=False)
    theta_g: np.ndarray = field(repr=False)
    score: float
    output_dim: int = 0
    loss: float = float("inf")

    @property
    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.f_sequence, self.g_sequence

    def to_dict(self) -> dict[str, Any]:
        return {
            "f_sequence": list(self.f_sequence),
            "g_sequence": list(self.g_sequence),
            "theta_f": [float(v) for v in self.theta_f],
            "theta_g": [float(v) for v in self.theta_g],
            "score": float(self.score),
            "output_dim": self.output_dim,
            "loss": float(self.loss),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> Candidate:
        return cls(
            f_sequence=tuple(payload["f_sequence"]),
            g_sequence=tuple(payload["g_sequence"]),
            theta_f=np.asarray(payload["theta_f"], dtype=np.float64),
            theta_g=np.asarray(payload["theta_g"], dtype=np.float64),
            score=float(payload["score"]),
            output_dim=int(payload.get("output_dim", 0)),
            loss=float(payload.get("loss", float("inf"))),
        )


class Pool:
    """Top-``capacity`` candidates by score, one entry per ``(f_sequence, g_sequence)``.

    Insertion keeps the list sorted by score, highest first; equal scores keep arrival
    order.
    """

    def __init__(self, capacity: int, candidates: list[Candidate] | None = None) -> None:
        if capacity < 1:
            raise ParameterError(f"Pool capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Candidate] = []
        for cand in candidates or []:
            self.insert(cand)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self._items)

    def __getitem__(self, index: int) -> Candidate:
        return self._items[index]

    @property
    def candidates(self) -> list[Candidate]:
        return list(self._items)

    @property
    def scores(self) -> list[float]:
        return [c.score for c in self._items]

    def insert(self, cand: Candidate) -> bool:
        """Add ``cand``; returns whether the pool changed."""
        for k, existing in enumerate(self._items):
            if existing.key == cand.key:
                if cand.score <= existing.score:
                    return False
                del self._items[k]
                break
        position = next((k for k, c in enumerate(self._items) if c.score < cand.score), len(self._items))
        if position >= self.capacity:
            return False
        self._items.insert(position, cand)
        del self._items[self.capacity :]
        return True

    def to_dict(self) -> dict[str, Any]:
        return {"capacity": self.capacity, "candidates": [c.to_dict() for c in self._items]}

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> Pool:
        pool = cls(int(payload["capacity"]))
        pool._items = [Candidate.from_dict(c) for c in payload["candidates"]]
        return pool


@dataclass(frozen=True, eq=False)
class FineTuneResult:
    """Averaged, filtered expressions for one candidate and their full-graph loss."""

    candidate: Candidate
    f_expr: Expression
    g_expr: Expression
    loss: float
    run_losses: tuple[float, ...] = ()

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.f_expr.theta) + np.count_nonzero(self.g_expr.theta))
