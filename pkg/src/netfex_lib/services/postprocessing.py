"""Comparison of inferred and true dynamics: term-level sMAPE and trajectory rollouts."""

from __future__ import annotations

import logging
import numpy as np
import pandas as pd
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from matplotlib.figure import Figure
from netfex_lib.exceptions import BlowUpError, ParameterError, UndefinedMetricError
from netfex_lib.models.expression import Expression
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DynamicsSpec, Normalization, TimeSeries
from netfex_lib.services.expressions import default_variable_names, evaluate_batch, evaluate_terms
from netfex_lib.services.simulation import integrate
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

TermMap = Mapping[str, float]


@dataclass(frozen=True)
class TermComparison:
    """Union of inferred and true terms; a term missing on one side has coefficient 0 there."""

    terms: tuple[str, ...]
    inferred: tuple[float, ...]
    truth: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def contributions(self) -> tuple[float, ...]:
        return tuple(abs(d - r) / (abs(d) + abs(r)) for d, r in zip(self.inferred, self.truth, strict=True))

    @property
    def smape(self) -> float:
        return float(np.mean(self.contributions))

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {"term": t, "inferred": d, "true": r, "contribution": c}
            for t, d, r, c in zip(self.terms, self.inferred, self.truth, self.contributions, strict=True)
        ]


def compare_terms(inferred: TermMap, truth: TermMap) -> TermComparison:
    inferred = {k: float(v) for k, v in inferred.items() if v != 0.0}
    truth = {k: float(v) for k, v in truth.items() if v != 0.0}
    terms = tuple(sorted(set(inferred) | set(truth)))
    if not terms:
        raise UndefinedMetricError("sMAPE is undefined when both term maps are empty")
    return TermComparison(
        terms=terms,
        inferred=tuple(inferred.get(t, 0.0) for t in terms),
        truth=tuple(truth.get(t, 0.0) for t in terms),
    )


def smape(inferred: TermMap, truth: TermMap) -> float:
    """Mean of ``|D - R| / (|D| + |R|)`` over the union of nonzero terms."""
    return compare_terms(inferred, truth).smape


@dataclass(frozen=True)
class SystemSmape:
    pooled: float
    per_dimension: tuple[float | None, ...]
    tables: tuple[TermComparison | None, ...]


def system_smape(
    inferred: Sequence[tuple[TermMap, TermMap]], truth: Sequence[tuple[TermMap, TermMap]]
) -> SystemSmape:
    """Pooled sMAPE over every dimension's self and interaction terms, with a per-dimension breakdown.

    Pooled keys are prefixed ``F<k>:`` and ``G<k>:`` so equal term strings in different
    trees stay distinct.
    """
    if len(inferred) != len(truth):
        raise ParameterError(f"Got {len(inferred)} inferred dimensions and {len(truth)} true ones")
    pooled_inf: dict[str, float] = {}
    pooled_true: dict[str, float] = {}
    per_dim: list[float | None] = []
    tables: list[TermComparison | None] = []
    for k, ((f_inf, g_inf), (f_true, g_true)) in enumerate(zip(inferred, truth, strict=True)):
        dim_inf = {f"F{k + 1}:{t}": v for t, v in f_inf.items()} | {f"G{k + 1}:{t}": v for t, v in g_inf.items()}
        dim_true = {f"F{k + 1}:{t}": v for t, v in f_true.items()} | {f"G{k + 1}:{t}": v for t, v in g_true.items()}
        pooled_inf |= dim_inf
        pooled_true |= dim_true
        try:
            table = compare_terms(dim_inf, dim_true)
        except UndefinedMetricError:
            table = None
        tables.append(table)
        per_dim.append(None if table is None else table.smape)
    return SystemSmape(pooled=smape(pooled_inf, pooled_true), per_dimension=tuple(per_dim), tables=tuple(tables))


def spec_from_expressions(
    f_exprs: Sequence[Expression], g_exprs: Sequence[Expression], normalization: Normalization = "none"
) -> DynamicsSpec:
    """Custom dynamics whose dimension ``k`` follows ``f_exprs[k]`` and ``g_exprs[k]``."""
    d = len(f_exprs)
    if len(g_exprs) != d:
        raise ParameterError("Need one interaction tree per self tree")

    def _self(x: np.ndarray) -> np.ndarray:
        return np.stack([evaluate_batch(f, x) for f in f_exprs], axis=1)

    def _pair(xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
        pair = np.concatenate([xi, xj], axis=1)
        return np.stack([evaluate_batch(g, pair) for g in g_exprs], axis=1)

    return DynamicsSpec("Custom", d, normalization=normalization, self_fn=_self, pair_fn=_pair)


def spec_from_terms(
    f_terms: Sequence[TermMap], g_terms: Sequence[TermMap], normalization: Normalization = "none"
) -> DynamicsSpec:
    """Custom dynamics from per-dimension term maps such as published coefficient sets."""
    d = len(f_terms)
    self_names = default_variable_names(d)
    pair_names = default_variable_names(2 * d, pair=True)

    def _self(x: np.ndarray) -> np.ndarray:
        return np.stack([evaluate_terms(t, x, self_names) for t in f_terms], axis=1)

    def _pair(xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
        pair = np.concatenate([xi, xj], axis=1)
        return np.stack([evaluate_terms(t, pair, pair_names) for t in g_terms], axis=1)

    return DynamicsSpec("Custom", d, normalization=normalization, self_fn=_self, pair_fn=_pair)


@dataclass(frozen=True, eq=False)
class RolloutComparison:
    """Deviation statistics per feature dimension between two rollouts from one initial state."""

    max_deviation: tuple[float, ...]
    mean_deviation: tuple[float, ...]
    true_series: TimeSeries
    inferred_series: TimeSeries
    blow_up: dict[str, int] | None = field(default=None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_deviation": list(self.max_deviation),
            "mean_deviation": list(self.mean_deviation),
            "n_samples": self.true_series.n_samples,
            "blow_up": self.blow_up,
        }


def rollout_compare(
    inferred: DynamicsSpec, truth: DynamicsSpec, graph: DirectedGraph, x0: np.ndarray, dt: float, T: float
) -> RolloutComparison:
    """Integrate both systems with identical RK4 settings and compare them sample by sample.

    A blow-up in either rollout is reported with its step; the statistics then cover the
    samples both rollouts produced.
    """
    blow_up: dict[str, int] = {}
    series = {}
    for label, spec in (("true", truth), ("inferred", inferred)):
        try:
            series[label] = integrate(spec, graph, x0, dt, T)
        except BlowUpError as err:
            logger.warning(f"💥 The {label} rollout blew up at step {err.step}")
            blow_up[label] = err.step
            series[label] = err.partial
    n = min(series["true"].n_samples, series["inferred"].n_samples)
    a = series["true"].values[:, :, :n]
    b = series["inferred"].values[:, :, :n]
    deviation = np.abs(a - b)
    return RolloutComparison(
        max_deviation=tuple(float(v) for v in deviation.max(axis=(0, 2))),
        mean_deviation=tuple(float(v) for v in deviation.mean(axis=(0, 2))),
        true_series=series["true"],
        inferred_series=series["inferred"],
        blow_up=blow_up or None,
    )


def write_rollout(
    comparison: RolloutComparison, csv_path: Path, svg_path: Path | None = None, nodes: Sequence[int] = (0,)
) -> None:
    """Paired trajectories of ``nodes`` as CSV and, optionally, an SVG figure."""
    n = min(comparison.true_series.n_samples, comparison.inferred_series.n_samples)
    times = comparison.true_series.times[:n]
    columns: dict[str, np.ndarray] = {"t": times}
    d = comparison.true_series.d
    for node in nodes:
        for dim in range(d):
            columns[f"true_x_{node}_{dim}"] = comparison.true_series.values[node, dim, :n]
            columns[f"inferred_x_{node}_{dim}"] = comparison.inferred_series.values[node, dim, :n]
    pd.DataFrame(columns).to_csv(csv_path, index=False)
    if svg_path is None:
        return

    fig = Figure(figsize=(9, 2.5 * d))
    axes = fig.subplots(d, 1, sharex=True, squeeze=False)
    for dim in range(d):
        ax = axes[dim, 0]
        for node in nodes:
            ax.plot(times, columns[f"true_x_{node}_{dim}"], color="black", linewidth=1.0)
            ax.plot(times, columns[f"inferred_x_{node}_{dim}"], color="tab:red", linestyle="--", linewidth=1.0)
        ax.set_ylabel(f"$x_{{{dim + 1}}}$")
    axes[-1, 0].set_xlabel("t")
    axes[0, 0].legend(["true", "inferred"], loc="upper right")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
