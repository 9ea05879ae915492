"""Ensemble-level analysis of lattice runs.

Three concerns live here:

* coarse graining of the binary link field over space-time regions, with the
  Gaussian noise statistics of a vacuum region and the block size needed to
  resolve an occupied region against that noise;

* a collapse-timescale experiment for a macroscopic two-branch
  superposition, tracking how the field record suppresses one branch;

* the reverse-time calibration test: binned chi-squared comparison of
  realized field values against the link probabilities recorded by a
  backward run, plus a uniformity check over many runs' p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateTestError, DimensionError, InsufficientDataError
from .lattice import StochasticField
from .stats import PrngStream, TestReport, chi_squared_sf, ks_test

# Bins with fewer expected successes or failures than this are dropped
# before the chi-squared sum (normal-approximation screen).
NORMAL_SCREEN_MINIMUM = 5.0

# Default safety factor for detectability: mean shift >= 5 noise sigmas.
DETECTABILITY_CONSTANT = 25.0

# ======================================================================
# Vacuum noise and coarse graining
# ======================================================================


@dataclass(frozen=True)
class NoiseStats:
    """Mean and variance of the block-averaged field over a vacuum region."""

    mu: float
    sigma_squared: float


def vacuum_noise_stats(x: float, block_size: int) -> NoiseStats:
    """Noise statistics of the mean field over ``block_size`` vacuum links.

    Each vacuum link is an independent Bernoulli draw with success weight
    X^2 / (1 + X^2), so the block mean has that mean and variance
    X^2 / (block_size (1 + X^2)^2).
    """
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"collapse_x must lie in [0, 1], got {x}")
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    weight = x * x / (1.0 + x * x)
    return NoiseStats(mu=weight, sigma_squared=x * x / (block_size * (1.0 + x * x) ** 2))


def detectability_threshold(epsilon: float, constant: float = DETECTABILITY_CONSTANT) -> int:
    """Minimum block size at which an occupied region stands out of the noise.

    With ``X = 1 - epsilon`` the occupied-vs-vacuum mean gap shrinks like
    epsilon while the block-mean sigma shrinks like 1/sqrt(M), so resolving
    the gap at ``sqrt(constant)`` sigmas needs M >= constant / epsilon^2.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    if constant <= 0.0:
        raise ConfigError(f"constant must be positive, got {constant}")
    return math.ceil(constant / (epsilon * epsilon))


@dataclass(frozen=True)
class Region:
    """Rectangular set of links: steps [t_start, t_stop), columns [column_start, column_stop).

    Time steps are 0-based; columns are 1-based, matching the rest of the
    lattice API.
    """

    t_start: int
    t_stop: int
    column_start: int
    column_stop: int

    def __post_init__(self):
        if not (0 <= self.t_start < self.t_stop):
            raise DimensionError(f"need 0 <= t_start < t_stop, got [{self.t_start}, {self.t_stop})")
        if not (1 <= self.column_start < self.column_stop):
            raise DimensionError(
                f"need 1 <= column_start < column_stop, got [{self.column_start}, {self.column_stop})"
            )

    @property
    def link_count(self) -> int:
        return (self.t_stop - self.t_start) * (self.column_stop - self.column_start)


@dataclass(frozen=True)
class CoarseGrainResult:
    mean_alpha: float
    z_score: float
    link_count: int


def coarse_grain_field(field: StochasticField, region: Region, x: float) -> CoarseGrainResult:
    """Block-average the field over ``region`` and score it against vacuum noise.

    The z-score compares the region mean with the vacuum expectation using
    the region's own block size.
    """
    if region.t_stop > field.steps or region.column_stop > field.n_columns + 1:
        raise DimensionError(
            f"region {region} exceeds field shape {field.alpha.shape}"
        )
    block = field.alpha[
        region.t_start : region.t_stop, region.column_start - 1 : region.column_stop - 1
    ]
    noise = vacuum_noise_stats(x, region.link_count)
    if noise.sigma_squared == 0.0:
        raise DegenerateTestError("vacuum noise variance vanishes at X = 0; z-score undefined")
    mean_alpha = float(block.mean())
    z = (mean_alpha - noise.mu) / math.sqrt(noise.sigma_squared)
    return CoarseGrainResult(mean_alpha=mean_alpha, z_score=z, link_count=region.link_count)


# ======================================================================
# Two-branch superposition lifetime
# ======================================================================


@dataclass(frozen=True)
class SuperpositionDecaySeries:
    """Per-step record of a two-branch discrimination experiment.

    ``links[s]`` is the cumulative number of discriminating links crossed
    after step ``s``; ``imbalance[s]`` the absolute difference between the
    counts of field values matching each branch; ``log_ratio[s]`` the
    absolute log of the branch amplitude ratio, ``imbalance * |ln(1 - epsilon)|``.
    """

    links: np.ndarray
    imbalance: np.ndarray
    log_ratio: np.ndarray


def superposition_lifetime_experiment(
    block_size: int, epsilon: float, max_steps: int, rng: PrngStream
) -> SuperpositionDecaySeries:
    """Simulate field-driven suppression of one branch of a superposition.

    Two macroscopically distinct occupancy branches A and B differ on
    ``2 * block_size`` columns per step (half occupied only in A, half only
    in B).  Stationary vertices keep the branches frozen, so each
    discriminating link draws a field value whose Born weight mixes the two
    branches; every draw then multiplies the mismatched branch's amplitude
    by ``X = 1 - epsilon``.  Branch weights never need explicit amplitudes:
    only the integer imbalance between match counts enters.
    """
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    if max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    x = 1.0 - epsilon
    x2 = x * x
    born_denom = 1.0 + x2
    log_x = math.log(x)
    # d = (matches for B) - (matches for A); branch A weight = logistic(2 d log X).
    d = 0
    links = np.empty(max_steps, dtype=np.int64)
    imbalance = np.empty(max_steps, dtype=np.int64)
    log_ratio = np.empty(max_steps)
    for step in range(max_steps):
        for _ in range(block_size):
            for a_occupied in (True, False):
                log_r = 2.0 * d * log_x
                if log_r >= 0.0:
                    w_a = 1.0 / (1.0 + math.exp(-log_r))
                else:
                    grow = math.exp(log_r)
                    w_a = grow / (1.0 + grow)
                if a_occupied:
                    p_one = (w_a + (1.0 - w_a) * x2) / born_denom
                    alpha_matches_a = rng.uniform() < p_one
                else:
                    p_one = (w_a * x2 + (1.0 - w_a)) / born_denom
                    alpha_matches_a = not (rng.uniform() < p_one)
                d += -1 if alpha_matches_a else 1
        links[step] = 2 * block_size * (step + 1)
        imbalance[step] = abs(d)
        log_ratio[step] = abs(d) * -log_x
    return SuperpositionDecaySeries(links=links, imbalance=imbalance, log_ratio=log_ratio)


# ======================================================================
# Reverse-time calibration test
# ======================================================================


@dataclass(frozen=True)
class BinSpec:
    """Probability bins on [0, 1]: interior boundaries, strictly increasing."""

    boundaries: tuple[float, ...]

    def __post_init__(self):
        previous = 0.0
        for edge in self.boundaries:
            if not previous < edge < 1.0:
                raise ConfigError(
                    f"bin boundaries must be strictly increasing within (0, 1), got {self.boundaries}"
                )
            previous = edge

    @classmethod
    def equal_width(cls, count: int) -> "BinSpec":
        if count < 1:
            raise ConfigError(f"bin count must be >= 1, got {count}")
        return cls(tuple(i / count for i in range(1, count)))

    @property
    def count(self) -> int:
        return len(self.boundaries) + 1

    def edges(self) -> tuple[float, ...]:
        return (0.0,) + self.boundaries + (1.0,)


DEFAULT_BINS = BinSpec.equal_width(10)


@dataclass(frozen=True)
class BinDiagnostics:
    lower: float
    upper: float
    events: int
    ones: int
    mean_probability: float
    expected_ones: float
    variance: float
    retained: bool


@dataclass(frozen=True)
class ChiSquaredReport:
    statistic: float
    dof: int
    p_value: float
    bins: tuple[BinDiagnostics, ...]
    events_total: int
    events_retained: int


def reversal_chi_squared(
    field: StochasticField,
    reverse_probabilities: np.ndarray,
    bins: BinSpec = DEFAULT_BINS,
) -> ChiSquaredReport:
    """Score realized field values against reverse-run link probabilities.

    Links are pooled over the whole run and grouped by their reverse-time
    probability of ``alpha = 1``.  Within bin j, with m_j events whose mean
    probability is pbar_j, the observed count of ones n_j is compared to a
    normal with mean m_j pbar_j and variance m_j pbar_j (1 - pbar_j); bins
    failing the normal screen (expected ones or zeros below
    ``NORMAL_SCREEN_MINIMUM``) are dropped.  The statistic sums the squared
    standardized residuals of the retained bins and is referred to a
    chi-squared distribution with one degree of freedom per retained bin.
    """
    probs = np.asarray(reverse_probabilities, dtype=float)
    if probs.shape != field.alpha.shape:
        raise DimensionError(
            f"probabilities shape {probs.shape} does not match field shape {field.alpha.shape}"
        )
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ConfigError("probabilities must lie in [0, 1]")
    flat_p = probs.ravel()
    flat_alpha = field.alpha.ravel().astype(np.int64)
    edges = np.asarray(bins.boundaries)
    assignment = np.searchsorted(edges, flat_p, side="right")

    events = np.bincount(assignment, minlength=bins.count)
    ones = np.bincount(assignment, weights=flat_alpha, minlength=bins.count)
    prob_sums = np.bincount(assignment, weights=flat_p, minlength=bins.count)

    all_edges = bins.edges()
    diagnostics = []
    statistic = 0.0
    dof = 0
    retained_events = 0
    for j in range(bins.count):
        m = int(events[j])
        n = int(ones[j])
        pbar = prob_sums[j] / m if m else 0.0
        mu = prob_sums[j]  # = m * pbar without re-rounding
        variance = m * pbar * (1.0 - pbar)
        keep = mu >= NORMAL_SCREEN_MINIMUM and (m - mu) >= NORMAL_SCREEN_MINIMUM
        if keep:
            statistic += (n - mu) ** 2 / variance
            dof += 1
            retained_events += m
        diagnostics.append(
            BinDiagnostics(
                lower=all_edges[j],
                upper=all_edges[j + 1],
                events=m,
                ones=n,
                mean_probability=pbar,
                expected_ones=mu,
                variance=variance,
                retained=keep,
            )
        )
    if dof == 0:
        raise DegenerateTestError(
            "no probability bin passed the normal-approximation screen; "
            f"total events = {flat_p.size}"
        )
    return ChiSquaredReport(
        statistic=statistic,
        dof=dof,
        p_value=chi_squared_sf(statistic, dof),
        bins=tuple(diagnostics),
        events_total=int(flat_p.size),
        events_retained=retained_events,
    )


@dataclass(frozen=True)
class UniformityReport:
    """Two-pronged check that a p-value sample is Uniform[0, 1]."""

    chi_squared: TestReport
    ks: TestReport
    bin_counts: np.ndarray
    bin_count: int


def pvalue_uniformity(p_values: Sequence[float], bin_count: int = 20) -> UniformityReport:
    """Chi-squared and KS uniformity tests on a sample of p-values."""
    values = np.asarray(p_values, dtype=float)
    if bin_count < 2:
        raise ConfigError(f"bin_count must be >= 2, got {bin_count}")
    if values.ndim != 1 or values.size < 10:
        raise InsufficientDataError(f"need at least 10 p-values, got shape {values.shape}")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ConfigError("p-values must lie in [0, 1]")
    expected = values.size / bin_count
    if expected < NORMAL_SCREEN_MINIMUM:
        raise InsufficientDataError(
            f"{values.size} p-values over {bin_count} bins leaves {expected:.2f} expected per bin"
        )
    slots = np.minimum((values * bin_count).astype(np.int64), bin_count - 1)
    counts = np.bincount(slots, minlength=bin_count)
    chi = float(((counts - expected) ** 2 / expected).sum())
    chi_report = TestReport(
        statistic=chi,
        p_value=chi_squared_sf(chi, bin_count - 1),
        sample_size=int(values.size),
        method=f"chi-squared-uniformity-{bin_count}-bins",
    )
    ks_report = ks_test(values, lambda v: min(1.0, max(0.0, v)))
    return UniformityReport(
        chi_squared=chi_report, ks=ks_report, bin_counts=counts, bin_count=bin_count
    )
