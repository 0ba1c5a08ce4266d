"""Simulation of the benchmark coupled systems on a graph."""

from __future__ import annotations

import json
import logging
import numpy as np
import pandas as pd
from netfex_lib.exceptions import BlowUpError, NumericError, ParameterError
from netfex_lib.models.graph import DirectedGraph
from netfex_lib.models.series import DynamicsSpec, TimeSeries
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

OVERFLOW_GUARD = 1e8


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _self_dynamics(spec: DynamicsSpec, x: np.ndarray) -> np.ndarray:
    p = spec.params
    if spec.kind == "HR":
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        return np.stack(
            [
                x2 - p["a"] * x1**3 + p["b"] * x1**2 - x3 + p["I_ext"],
                p["c"] - p["u"] * x1**2 - x2,
                p["r"] * (p["s"] * (x1 - p["x0"]) - x3),
            ],
            axis=1,
        )
    if spec.kind == "FHN":
        x1, x2 = x[:, 0], x[:, 1]
        return np.stack([x1 - x1**3 - x2, p["a"] + p["b"] * x1 + p["c"] * x2], axis=1)
    if spec.kind == "Rossler":
        omega = spec.omega
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        return np.stack([-omega * x2 - x3, omega * x1 + p["a"] * x2, p["b"] + x3 * (x1 + p["c"])], axis=1)
    return np.asarray(spec.self_fn(x), dtype=np.float64)


def _pair_dynamics(spec: DynamicsSpec, xi: np.ndarray, xj: np.ndarray) -> np.ndarray | None:
    """Coupling ``G(x_i, x_j)`` for every arc ``j -> i``; ``None`` when the system is uncoupled."""
    p = spec.params
    out = np.zeros_like(xi)
    if spec.kind == "HR":
        out[:, 0] = p["epsilon"] * (p["V_syn"] - xi[:, 0]) * _sigmoid(xj[:, 0])
    elif spec.kind == "FHN":
        out[:, 0] = -p["epsilon"] * (xj[:, 0] - xi[:, 0])
    elif spec.kind == "Rossler":
        out[:, 0] = p["epsilon"] * (xj[:, 0] - xi[:, 0])
    elif spec.pair_fn is not None:
        out = np.asarray(spec.pair_fn(xi, xj), dtype=np.float64)
    else:
        return None
    return out


def rhs(spec: DynamicsSpec, g: DirectedGraph, state: np.ndarray) -> np.ndarray:
    """Time derivative of every node, ``[N, d] -> [N, d]``."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (g.n_nodes, spec.d):
        raise ParameterError(f"State shape {state.shape} does not match ({g.n_nodes}, {spec.d})")
    if spec.omega is not None and len(spec.omega) != g.n_nodes:
        raise ParameterError("Natural frequencies and graph disagree on the node count")
    if not np.isfinite(state).all():
        raise NumericError("Non-finite state passed to rhs")

    drift = _self_dynamics(spec, state)
    if g.n_arcs == 0:
        return drift
    pair = _pair_dynamics(spec, state[g.dst], state[g.src])
    if pair is None:
        return drift
    interaction = np.stack(
        [np.bincount(g.dst, weights=pair[:, k], minlength=g.n_nodes) for k in range(spec.d)], axis=1
    )
    if spec.normalization == "in_degree":
        k_in = g.in_degree.astype(np.float64)
        interaction = np.divide(interaction, k_in[:, None], out=np.zeros_like(interaction), where=k_in[:, None] > 0)
    return drift + interaction


def integrate(spec: DynamicsSpec, g: DirectedGraph, x0: np.ndarray, dt: float, T: float) -> TimeSeries:
    """Fixed-step classic Runge-Kutta rollout with ``floor(T/dt) + 1`` samples."""
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if dt > T:
        raise ParameterError(f"Horizon T={T} is shorter than one step dt={dt}")
    n_steps = int(np.floor(T / dt + 1e-9))
    x = np.array(x0, dtype=np.float64).reshape(g.n_nodes, spec.d)
    out = np.empty((n_steps + 1, g.n_nodes, spec.d))
    out[0] = x
    logger.debug(f"🔄 Integrating {spec.kind} on {g.n_nodes} nodes for {n_steps} steps")
    for step in range(1, n_steps + 1):
        try:
            k1 = rhs(spec, g, x)
            k2 = rhs(spec, g, x + 0.5 * dt * k1)
            k3 = rhs(spec, g, x + 0.5 * dt * k2)
            k4 = rhs(spec, g, x + dt * k3)
        except NumericError as err:
            raise BlowUpError(step, TimeSeries.from_array(out[:step].transpose(1, 2, 0), dt)) from err
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all() or np.abs(x).max() > OVERFLOW_GUARD:
            partial = TimeSeries.from_array(out[:step].transpose(1, 2, 0), dt)
            raise BlowUpError(step, partial)
        out[step] = x
    return TimeSeries.from_array(out.transpose(1, 2, 0), dt)


def random_initial_state(n_nodes: int, d: int, seed: int) -> np.ndarray:
    """I.i.d. uniform initial state on [-1, 1]."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n_nodes, d))


def save_series(ts: TimeSeries, path: Path, metadata: dict[str, Any] | None = None) -> Path:
    """Write the series as CSV (``t, x_<node>_<dim>...``) plus a JSON metadata companion."""
    n, d, t = ts.values.shape
    columns = {"t": ts.times}
    for node in range(n):
        for dim in range(d):
            columns[f"x_{node}_{dim}"] = ts.values[node, dim]
    pd.DataFrame(columns).to_csv(path, index=False)
    meta = {"dt": ts.dt, "d": d, "n_nodes": n, "n_samples": t, **(metadata or {})}
    meta_path = path.with_suffix(".json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta_path


def load_series(path: Path) -> tuple[TimeSeries, dict[str, Any]]:
    """Read a series written by :func:`save_series`."""
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    df = pd.read_csv(path)
    n, d = int(meta["n_nodes"]), int(meta["d"])
    values = np.stack([np.stack([df[f"x_{node}_{dim}"].to_numpy() for dim in range(d)]) for node in range(n)])
    return TimeSeries.from_array(values, float(meta["dt"]), t0=float(df["t"].iloc[0])), meta
