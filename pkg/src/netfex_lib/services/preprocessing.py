"""Data corruption and derivative estimation applied before regression."""

from __future__ import annotations

import logging
import math
import numpy as np
from netfex_lib.exceptions import ParameterError, TooShortError
from netfex_lib.models.series import DerivativeEstimate, TimeSeries

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5


def add_noise(ts: TimeSeries, snr_db: float, seed: int) -> TimeSeries:
    """Observational Gaussian noise ``x + a * N(0, 1)`` at the requested SNR.

    The amplitude is set per feature dimension from that dimension's standard deviation,
    pooled over nodes and time: ``a = sigma_dim * 10**(-snr_db / 20)``.
    """
    if math.isnan(snr_db):
        raise ParameterError("snr_db must not be NaN")
    if math.isinf(snr_db) and snr_db > 0:
        return ts
    values = ts.values
    sigma = values.std(axis=(0, 2))
    amplitude = sigma * 10.0 ** (-snr_db / 20.0)
    noise = np.random.default_rng(seed).standard_normal(values.shape)
    logger.debug(f"🔊 Adding noise at {snr_db} dB, amplitudes {amplitude.round(6).tolist()}")
    return TimeSeries.from_array(values + amplitude[None, :, None] * noise, ts.dt, t0=float(ts.times[0]))


def downsample(ts: TimeSeries, keep_fraction: float) -> TimeSeries:
    """Keep every ``round(1 / keep_fraction)``-th sample and scale ``dt`` accordingly."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ParameterError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    stride = round(1.0 / keep_fraction)
    if stride == 1:
        return ts
    values = ts.values[:, :, ::stride]
    if values.shape[2] < MIN_SAMPLES:
        raise TooShortError(f"Downsampling leaves {values.shape[2]} samples, need {MIN_SAMPLES}")
    return TimeSeries.from_array(values, ts.dt * stride, t0=float(ts.times[0]))


def five_point_derivative(ts: TimeSeries) -> DerivativeEstimate:
    """Central five-point stencil on interior samples ``2..T_s-3``.

    The two boundary samples on each side are dropped from both the derivative and the
    returned state slice so that they stay aligned.
    """
    x = ts.values
    if x.shape[2] < MIN_SAMPLES:
        raise TooShortError(f"Five-point derivative needs {MIN_SAMPLES} samples, got {x.shape[2]}")
    dt = ts.dt
    derivative = (x[:, :, :-4] - 8.0 * x[:, :, 1:-3] + 8.0 * x[:, :, 3:-1] - x[:, :, 4:]) / (12.0 * dt)
    return DerivativeEstimate(states=x[:, :, 2:-2], derivatives=derivative, times=ts.times[2:-2], dt=dt)
