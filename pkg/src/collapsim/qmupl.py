"""Localized wave-packet collapse dynamics in one dimension.

The reduced model follows the packet's centre coordinates ``(x, p)`` under
discrete Euler updates driven by Brownian increments ``dB ~ N(0, dt)``:

    x_{i+1} = x_i + (p_i / m) dt + dB_i / sqrt(m)
    p_{i+1} = p_i + (g / 2) dB_i

Each step also exposes a collapse centre

    z_i = x_i + dB_i / (g dt),

the record an external observer keeps of the packet's position.  These
explicit recursions ARE the model here: trajectories are constructed by
them, so consecutive points satisfy them exactly in floating point.

Reverse-time reconstruction starts from the time-reversed final point
``(x_n, -p_n)`` and back-solves the same dynamical law against the recorded
centres:

    dB'_{i-1} = g dt (z_{i-1} - x'_i)
    x'_{i-1}  = x'_i + (p'_i / m) dt + dB'_{i-1} / sqrt(m)
    p'_{i-1}  = p'_i + (g / 2) dB'_{i-1}

If the implied increments ``dB'`` pass a normality test at scale
``sqrt(dt)``, the record is statistically indistinguishable from one
generated in reverse time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .stats import PrngStream, TestReport, ks_test, standard_normal_cdf

MAX_STEPS = 100_000


@dataclass(frozen=True)
class WavePacketState:
    """Packet centre position and momentum."""

    x: float
    p: float


@dataclass(frozen=True)
class QmuplConfig:
    """Coupling ``g``, mass ``m``, step ``dt``, step count ``n``, and start point."""

    g: float
    m: float
    dt: float
    n: int
    x0: float = 0.0
    p0: float = 0.0

    def __post_init__(self):
        if not self.g > 0.0:
            raise ConfigError(f"g must be positive, got {self.g}")
        if not self.m > 0.0:
            raise ConfigError(f"m must be positive, got {self.m}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 1 <= self.n <= MAX_STEPS:
            raise ConfigError(f"n must lie in 1..{MAX_STEPS}, got {self.n}")


@dataclass(frozen=True)
class WavePacketTrajectory:
    """Forward run: ``x`` and ``p`` have length n + 1, ``z`` and ``dB`` length n."""

    x: np.ndarray
    p: np.ndarray
    z: np.ndarray
    dB: np.ndarray


@dataclass(frozen=True)
class ReversedTrajectory:
    """Back-solved run: ``x`` and ``p`` have length n + 1, ``dB`` length n."""

    x: np.ndarray
    p: np.ndarray
    dB: np.ndarray


def step_forward(state: WavePacketState, dB: float, config: QmuplConfig) -> WavePacketState:
    """One Euler update of the packet centre."""
    return WavePacketState(
        x=state.x + (state.p / config.m) * config.dt + dB / math.sqrt(config.m),
        p=state.p + 0.5 * config.g * dB,
    )


def collapse_centre(x: float, dB: float, g: float, dt: float) -> float:
    """Observer's position record for one step: ``x + dB / (g dt)``."""
    return x + dB / (g * dt)


def time_reverse_state(state: WavePacketState) -> WavePacketState:
    """Flip the momentum sign; applying it twice is the identity."""
    return WavePacketState(x=state.x, p=-state.p)


def simulate_forward(
    config: QmuplConfig,
    rng: PrngStream,
    increments: Sequence[float] | None = None,
) -> WavePacketTrajectory:
    """Generate a forward trajectory of ``config.n`` steps.

    ``increments`` substitutes a fixed noise sequence for the sampled one
    (useful for noise-free and replay tests); otherwise each ``dB_i`` is an
    independent N(0, dt) draw from ``rng``.
    """
    n = config.n
    if increments is None:
        scale = math.sqrt(config.dt)
        dB = np.fromiter((rng.gaussian() * scale for _ in range(n)), dtype=float, count=n)
    else:
        dB = np.asarray(increments, dtype=float)
        if dB.shape != (n,):
            raise DimensionError(f"increments must have shape ({n},), got {dB.shape}")
    x = np.empty(n + 1)
    p = np.empty(n + 1)
    z = np.empty(n)
    x[0] = config.x0
    p[0] = config.p0
    sqrt_m = math.sqrt(config.m)
    g_dt = config.g * config.dt
    for i in range(n):
        z[i] = x[i] + dB[i] / g_dt
        x[i + 1] = x[i] + (p[i] / config.m) * config.dt + dB[i] / sqrt_m
        p[i + 1] = p[i] + 0.5 * config.g * dB[i]
    return WavePacketTrajectory(x=x, p=p, z=z, dB=dB)


def reverse_trajectory(
    z: Sequence[float], x_n: float, p_n: float, config: QmuplConfig
) -> ReversedTrajectory:
    """Back-solve a trajectory from the recorded centres and the forward end point.

    ``(x_n, p_n)`` is the forward run's final state.  The reversal anchors at
    the position unchanged and flips the momentum sign itself, then runs the
    recursion ``i = n .. 1``, filling the primed arrays down to index 0.
    """
    centres = np.asarray(z, dtype=float)
    n = config.n
    if centres.shape != (n,):
        raise DimensionError(f"centres must have shape ({n},), got {centres.shape}")
    x = np.empty(n + 1)
    p = np.empty(n + 1)
    dB = np.empty(n)
    x[n] = x_n
    p[n] = -p_n
    sqrt_m = math.sqrt(config.m)
    g_dt = config.g * config.dt
    for i in range(n, 0, -1):
        dB[i - 1] = g_dt * (centres[i - 1] - x[i])
        x[i - 1] = x[i] + (p[i] / config.m) * config.dt + dB[i - 1] / sqrt_m
        p[i - 1] = p[i] + 0.5 * config.g * dB[i - 1]
    return ReversedTrajectory(x=x, p=p, dB=dB)


def normality_test(increments: Sequence[float], dt: float) -> TestReport:
    """KS test of ``increments / sqrt(dt)`` against the standard normal."""
    if not dt > 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    scale = 1.0 / math.sqrt(dt)
    standardized = [v * scale for v in np.asarray(increments, dtype=float)]
    return ks_test(standardized, standard_normal_cdf)


@dataclass(frozen=True)
class EnergyCurve:
    """Ensemble mean of p^2 per time, with its standard error."""

    times: np.ndarray
    mean_p_squared: np.ndarray
    standard_error: np.ndarray
    runs: int


def ensemble_energy_curve(config: QmuplConfig, runs: int, rng: PrngStream) -> EnergyCurve:
    """Mean squared momentum across an ensemble of independent forward runs.

    The noise pumps momentum diffusively, so the ensemble mean of p^2 grows
    linearly: (g^2 / 4) t  (plus p0^2).  Each run draws from its own child
    stream ``rng.split(run_index)``.
    """
    if runs < 2:
        raise ConfigError(f"need at least 2 runs for a standard error, got {runs}")
    sum_p2 = np.zeros(config.n + 1)
    sum_p4 = np.zeros(config.n + 1)
    for index in range(runs):
        trajectory = simulate_forward(config, rng.split(index))
        p2 = trajectory.p**2
        sum_p2 += p2
        sum_p4 += p2 * p2
    mean = sum_p2 / runs
    variance = np.maximum(sum_p4 / runs - mean**2, 0.0) * runs / (runs - 1)
    return EnergyCurve(
        times=np.arange(config.n + 1) * config.dt,
        mean_p_squared=mean,
        standard_error=np.sqrt(variance / runs),
        runs=runs,
    )
