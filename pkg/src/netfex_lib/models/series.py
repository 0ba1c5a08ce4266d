"""Node-activity time series and the dynamics that generate them."""

from __future__ import annotations

import numpy as np
import xarray as xr
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from netfex_lib.exceptions import NumericError, ParameterError
from typing import Literal

DynamicsKind = Literal["HR", "FHN", "Rossler", "Custom"]
Normalization = Literal["none", "in_degree"]
SelfFn = Callable[[np.ndarray], np.ndarray]
PairFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

REQUIRED_PARAMS: dict[str, tuple[str, ...]] = {
    "HR": ("a", "b", "c", "u", "s", "r", "x0", "epsilon", "V_syn", "I_ext"),
    "FHN": ("a", "b", "c", "epsilon"),
    "Rossler": ("a", "b", "c", "epsilon"),
    "Custom": (),
}
FEATURE_DIM = {"HR": 3, "FHN": 2, "Rossler": 3}


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Activity of every node over regularly spaced samples.

    ``data`` has dims ``(node, dim, time)`` and carries ``dt`` in its attributes.
    """

    data: xr.DataArray

    def __post_init__(self) -> None:
        if self.data.dims != ("node", "dim", "time"):
            raise ParameterError(f"TimeSeries dims must be (node, dim, time), got {self.data.dims}")
        if float(self.data.attrs.get("dt", 0.0)) <= 0.0:
            raise ParameterError("TimeSeries needs a positive dt attribute")
        if not np.isfinite(self.data.values).all():
            raise NumericError("TimeSeries contains non-finite values")

    @classmethod
    def from_array(cls, values: np.ndarray, dt: float, t0: float = 0.0) -> TimeSeries:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ParameterError(f"Expected an array [node, dim, time], got shape {values.shape}")
        n, d, t = values.shape
        data = xr.DataArray(
            values,
            dims=("node", "dim", "time"),
            coords={"node": np.arange(n), "dim": np.arange(d), "time": t0 + dt * np.arange(t)},
            attrs={"dt": float(dt)},
        )
        return cls(data)

    @property
    def values(self) -> np.ndarray:
        return self.data.values

    @property
    def dt(self) -> float:
        return float(self.data.attrs["dt"])

    @property
    def n_nodes(self) -> int:
        return self.data.sizes["node"]

    @property
    def d(self) -> int:
        return self.data.sizes["dim"]

    @property
    def n_samples(self) -> int:
        return self.data.sizes["time"]

    @property
    def times(self) -> np.ndarray:
        return self.data.coords["time"].values


@dataclass(frozen=True, eq=False)
class DerivativeEstimate:
    """Five-point derivatives with the state samples they are centred on."""

    states: np.ndarray
    derivatives: np.ndarray
    times: np.ndarray
    dt: float


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """Coupled system ``dx_i/dt = F(x_i) + norm_i * sum_j A_ij G(x_i, x_j)``.

    ``Custom`` systems supply ``self_fn`` (``[N, d] -> [N, d]``) and optionally ``pair_fn``
    (``([E, d], [E, d]) -> [E, d]`` evaluated on (receiver, sender) pairs).
    """

    kind: DynamicsKind
    d: int
    params: Mapping[str, float] = field(default_factory=dict)
    normalization: Normalization = "none"
    omega: np.ndarray | None = None
    self_fn: SelfFn | None = None
    pair_fn: PairFn | None = None

    def __post_init__(self) -> None:
        if self.kind not in REQUIRED_PARAMS:
            raise ParameterError(f"Unknown dynamics kind {self.kind!r}")
        missing = [p for p in REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise ParameterError(f"{self.kind} dynamics missing parameters: {', '.join(missing)}")
        if self.kind != "Custom" and self.d != FEATURE_DIM[self.kind]:
            raise ParameterError(f"{self.kind} dynamics has d={FEATURE_DIM[self.kind]}, got {self.d}")
        if self.kind == "Rossler" and self.omega is None:
            raise ParameterError("Rossler dynamics needs per-node natural frequencies")
        if self.kind == "Custom" and self.self_fn is None:
            raise ParameterError("Custom dynamics needs a self_fn")
        if self.normalization not in ("none", "in_degree"):
            raise ParameterError(f"Unknown normalization {self.normalization!r}")
