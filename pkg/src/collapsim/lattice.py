"""Discrete-lattice collapse dynamics on a ring of qubit columns.

Geometry
--------
The system is a periodic row of ``n_columns`` qubit columns (``n_columns`` is
even, at most 16).  A basis state assigns each column an occupancy bit; basis
index ``b`` encodes column ``i`` in bit ``i - 1``, so patterns read
left-to-right as columns ``1 .. n_columns``.  The full state is a dense
vector of ``2 ** n_columns`` complex amplitudes.

One time step interleaves two kinds of events, swept left to right:

* **vertex unitaries** on adjacent column pairs.  The pairing alternates in a
  brickwork pattern: on even steps (0-based) vertex ``k`` couples columns
  ``(2k - 1, 2k)``; on odd steps it couples ``(2k, 2k + 1)`` with the last
  pair wrapping around the ring.  The two-qubit matrix, in occupancy basis
  order ``(00, 01, 10, 11)``, fixes 00 and 11 and mixes the single-particle
  block with ``[[i sin(theta), cos(theta)], [cos(theta), i sin(theta)]]``.
  At ``theta = 0`` an excitation hops one column per vertex (light-speed
  motion); at ``theta = pi/2`` it stands still.

* **collapse jumps** on the two outgoing links of each vertex (its two
  columns, left link first).  A link carries a binary field value ``alpha``
  drawn with the Born weight of the jump pair

      J(0) = (|0><0| + X |1><1|) / sqrt(1 + X^2)
      J(1) = (X |0><0| + |1><1|) / sqrt(1 + X^2)

  whose squares sum to the identity.  ``X = 1`` makes both jumps trivial and
  ``X = 0`` makes them projective.  The state is renormalized after every
  jump; sampling uses only norm ratios, so this is purely a numerical-
  hygiene choice.

Reverse-time runs replay a recorded field anti-chronologically on the
complex-conjugated final state, reusing the same vertex and jump matrices
(the jumps are real; conjugation is absorbed once at the hand-off), visiting
each step's vertices and links in exactly reversed order and recording the
link probabilities conditioned on everything later in coordinate time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InvalidStateError
from .stats import PrngStream

MAX_COLUMNS = 16

# ======================================================================
# Types
# ======================================================================


@dataclass(frozen=True)
class LatticeConfig:
    """Model parameters for one lattice realization.

    ``n_columns`` is the ring width (even, 2..16), ``collapse_x`` the jump
    parameter X in [0, 1], ``theta`` the vertex mixing angle, and ``steps``
    the number of time steps.
    """

    n_columns: int
    collapse_x: float
    theta: float
    steps: int

    def __post_init__(self):
        if self.n_columns < 2 or self.n_columns > MAX_COLUMNS or self.n_columns % 2:
            raise ConfigError(
                f"n_columns must be even and within 2..{MAX_COLUMNS}, got {self.n_columns}"
            )
        if not 0.0 <= self.collapse_x <= 1.0:
            raise ConfigError(f"collapse_x must lie in [0, 1], got {self.collapse_x}")
        if not math.isfinite(self.theta):
            raise ConfigError(f"theta must be finite, got {self.theta}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")

    @property
    def n_vertices(self) -> int:
        return self.n_columns // 2


@dataclass(frozen=True)
class QuantumState:
    """Dense state vector over column-occupancy basis states.

    ``norm_squared`` is recomputed on construction, so it always equals the
    sum of squared amplitude moduli.
    """

    amplitudes: np.ndarray
    norm_squared: float = dataclass_field(init=False)

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        dim = amps.shape[0] if amps.ndim == 1 else 0
        n_columns = dim.bit_length() - 1
        if dim < 4 or dim != 1 << n_columns or n_columns % 2 or n_columns > MAX_COLUMNS:
            raise DimensionError(
                f"amplitude vector must have length 2**n for even n in 4..{MAX_COLUMNS}, got shape {self.amplitudes.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "norm_squared", float(np.vdot(amps, amps).real))

    @property
    def n_columns(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1


@dataclass(frozen=True)
class StochasticField:
    """Realized binary field: one value per (time step, column) link crossing."""

    alpha: np.ndarray  # shape (steps, n_columns), entries 0 or 1

    def __post_init__(self):
        arr = np.asarray(self.alpha)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2 or arr.shape[1] % 2:
            raise DimensionError(f"field must have shape (steps, n_columns), got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise DimensionError("field values must be 0 or 1")
        object.__setattr__(self, "alpha", np.ascontiguousarray(arr, dtype=np.uint8))

    @property
    def steps(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_columns(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class LatticeRunRecord:
    """Per-link diagnostics of one run.

    ``probabilities[t, i-1]`` is the Born weight of ``alpha = 1`` on column
    ``i``'s link at step ``t``, evaluated on the state current when that link
    was crossed (for reverse runs this conditions on everything later in
    coordinate time).  ``occupancy`` holds the column occupancy expectation
    sampled immediately after the jump at that link.  ``direction`` is
    ``"forward"`` or ``"backward"``.
    """

    field: StochasticField
    probabilities: np.ndarray
    occupancy: np.ndarray
    direction: str


# ======================================================================
# Basis helpers
# ======================================================================


def pattern_to_index(pattern: Sequence[int]) -> int:
    """Map an occupancy pattern (column 1 first) to its basis index."""
    index = 0
    for position, bit in enumerate(pattern):
        if bit not in (0, 1):
            raise DimensionError(f"occupancy bits must be 0 or 1, got {bit!r}")
        index |= int(bit) << position
    return index


def index_to_pattern(index: int, n_columns: int) -> tuple[int, ...]:
    """Inverse of :func:`pattern_to_index`."""
    return tuple((index >> p) & 1 for p in range(n_columns))


def build_basis_state(pattern: Sequence[int]) -> QuantumState:
    """Normalized basis state for the given occupancy pattern."""
    n_columns = len(pattern)
    amps = np.zeros(1 << n_columns, dtype=np.complex128)
    amps[pattern_to_index(pattern)] = 1.0
    return QuantumState(amps)


def single_particle_state(n_columns: int, column: int) -> QuantumState:
    """Basis state with exactly one occupied column."""
    if not 1 <= column <= n_columns:
        raise DimensionError(f"column must lie in 1..{n_columns}, got {column}")
    pattern = [0] * n_columns
    pattern[column - 1] = 1
    return build_basis_state(pattern)


def conjugate(state: QuantumState) -> QuantumState:
    """Complex-conjugate a state (the reverse-run hand-off operation)."""
    return QuantumState(np.conj(state.amplitudes))


# ======================================================================
# In-place kernels (shared by the public operations and the run loops)
# ======================================================================


def _column_half(amps: np.ndarray, n_columns: int, column: int, occupied: int) -> np.ndarray:
    """View of the amplitudes whose column bit equals ``occupied``."""
    p = column - 1
    view = amps.reshape(1 << (n_columns - 1 - p), 2, 1 << p)
    return view[:, occupied, :]

def _vertex_inplace(amps: np.ndarray, n_columns: int, left_column: int, theta: float) -> None:
    a = left_column
    b = a % n_columns + 1
    pa, pb = a - 1, b - 1
    hi, lo = (pa, pb) if pa > pb else (pb, pa)
    view = amps.reshape(1 << (n_columns - 1 - hi), 2, 1 << (hi - lo - 1), 2, 1 << lo)

    def block(bit_a: int, bit_b: int) -> np.ndarray:
        bit_hi = bit_a if hi == pa else bit_b
        bit_lo = bit_a if lo == pa else bit_b
        return view[:, bit_hi, :, bit_lo, :]

    s01 = block(0, 1)
    s10 = block(1, 0)
    diag = 1j * math.sin(theta)
    off = math.cos(theta)
    kept = s01.copy()
    s01[...] = diag * kept + off * s10
    s10[...] = off * kept + diag * s10

def _jump_inplace(amps: np.ndarray, n_columns: int, column: int, alpha: int, x: float) -> None:
    scale = 1.0 / math.sqrt(1.0 + x * x)
    suppressed = _column_half(amps, n_columns, column, 1 - alpha)
    suppressed *= x * scale  # the branch disfavoured by alpha is de-amplified by X
    favoured = _column_half(amps, n_columns, column, alpha)
    favoured *= scale

def _occupancy(amps: np.ndarray, n_columns: int, column: int, norm_squared: float) -> float:
    sub = _column_half(amps, n_columns, column, 1)
    re, im = sub.real, sub.imag
    weight = np.einsum("ij,ij->", re, re) + np.einsum("ij,ij->", im, im)
    return float(weight) / norm_squared

def _renormalize(amps: np.ndarray) -> float:
    norm_squared = float(np.vdot(amps, amps).real)
    if not norm_squared > 0.0:
        raise InvalidStateError("state collapsed to zero norm")
    amps /= math.sqrt(norm_squared)
    return norm_squared


def _link_probability(occ: float, x: float) -> float:
    # Born weight of alpha = 1 given the column occupancy expectation:
    # <J(1)^2> = (X^2 (1 - occ) + occ) / (1 + X^2).
    x2 = x * x
    return (x2 + (1.0 - x2) * occ) / (1.0 + x2)


# ======================================================================
# Public operations
# ======================================================================


def apply_vertex(state: QuantumState, i: int, theta: float) -> QuantumState:
    """Apply the two-column vertex unitary to columns ``(i, i + 1)`` (cyclic)."""
    n = state.n_columns
    if not 1 <= i <= n:
        raise DimensionError(f"vertex column must lie in 1..{n}, got {i}")
    amps = state.amplitudes.copy()
    _vertex_inplace(amps, n, i, theta)
    return QuantumState(amps)


def apply_jump(state: QuantumState, i: int, alpha: int, x: float) -> QuantumState:
    """Apply jump ``J(alpha)`` on column ``i``; the result is NOT renormalized."""
    n = state.n_columns
    if not 1 <= i <= n:
        raise DimensionError(f"jump column must lie in 1..{n}, got {i}")
    if alpha not in (0, 1):
        raise DimensionError(f"field value must be 0 or 1, got {alpha!r}")
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"collapse_x must lie in [0, 1], got {x}")
    amps = state.amplitudes.copy()
    _jump_inplace(amps, n, i, int(alpha), x)
    return QuantumState(amps)


def normalize(state: QuantumState) -> QuantumState:
    """Rescale a state to unit norm."""
    if not state.norm_squared > 0.0:
        raise InvalidStateError("cannot normalize a zero state")
    return QuantumState(state.amplitudes / math.sqrt(state.norm_squared))


def occupancy_expectation(state: QuantumState, i: int) -> float:
    """Expected occupancy of column ``i`` in [0, 1]."""
    n = state.n_columns
    if not 1 <= i <= n:
        raise DimensionError(f"column must lie in 1..{n}, got {i}")
    if not state.norm_squared > 0.0:
        raise InvalidStateError("occupancy undefined for a zero state")
    return _occupancy(state.amplitudes, n, i, state.norm_squared)


def link_collapse_probability(state: QuantumState, i: int, x: float) -> float:
    """Born weight of ``alpha = 1`` on column ``i``'s outgoing link."""
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"collapse_x must lie in [0, 1], got {x}")
    return _link_probability(occupancy_expectation(state, i), x)


def vertex_columns(t: int, k: int, n_vertices: int) -> tuple[int, int]:
    """Columns (left, right) coupled by vertex ``k`` at 0-based step ``t``.

    Even steps pair ``(2k - 1, 2k)``; odd steps shift by one so vertex
    ``n_vertices`` wraps around the ring to ``(2 n_vertices, 1)``.
    """
    if t < 0:
        raise DimensionError(f"time step must be >= 0, got {t}")
    if not 1 <= k <= n_vertices:
        raise DimensionError(f"vertex index must lie in 1..{n_vertices}, got {k}")
    if t % 2 == 0:
        return 2 * k - 1, 2 * k
    return 2 * k, 2 * k + 1 if k < n_vertices else 1


def _check_run_inputs(config: LatticeConfig, state: QuantumState, role: str) -> None:
    if state.n_columns != config.n_columns:
        raise DimensionError(
            f"{role} state has {state.n_columns} columns, config expects {config.n_columns}"
        )
    if abs(state.norm_squared - 1.0) > 1e-8:
        raise InvalidStateError(f"{role} state must be normalized, |psi|^2 = {state.norm_squared}")


def run_forward(
    config: LatticeConfig, initial: QuantumState, rng: PrngStream
) -> tuple[LatticeRunRecord, QuantumState]:
    """Evolve ``initial`` forward, sampling the field link by link.

    Each step sweeps vertices left to right; after a vertex, its two links
    are crossed (left column first): the Born weight of ``alpha = 1`` is
    evaluated, one uniform draw decides ``alpha``, the jump is applied and
    the state renormalized.  Returns the per-link record and the final state.
    """
    _check_run_inputs(config, initial, "initial")
    n = config.n_columns
    x = config.collapse_x
    amps = initial.amplitudes.copy()
    probabilities = np.empty((config.steps, n))
    occupancy = np.empty((config.steps, n))
    alpha_values = np.empty((config.steps, n), dtype=np.uint8)
    for t in range(config.steps):
        for k in range(1, config.n_vertices + 1):
            left, right = vertex_columns(t, k, config.n_vertices)
            _vertex_inplace(amps, n, left, config.theta)
            for column in (left, right):
                p_one = _link_probability(_occupancy(amps, n, column, 1.0), x)
                alpha = 1 if rng.uniform() < p_one else 0
                _jump_inplace(amps, n, column, alpha, x)
                _renormalize(amps)
                slot = column - 1
                probabilities[t, slot] = p_one
                alpha_values[t, slot] = alpha
                occupancy[t, slot] = _occupancy(amps, n, column, 1.0)
    record = LatticeRunRecord(
        field=StochasticField(alpha_values),
        probabilities=probabilities,
        occupancy=occupancy,
        direction="forward",
    )
    return record, QuantumState(amps)


def run_backward(
    config: LatticeConfig, field: StochasticField, final_state: QuantumState
) -> tuple[LatticeRunRecord, QuantumState]:
    """Replay a recorded field anti-chronologically from the conjugated end state.

    ``final_state`` must be the complex conjugate of the forward run's final
    state (see :func:`conjugate`); with that hand-off the forward vertex and
    jump matrices are reused verbatim.  Within every step the vertices and
    links are visited in exactly the reverse of the forward order.  The
    recorded probability at each link is the Born weight of ``alpha = 1``
    conditioned on all field values later in coordinate time; the jump then
    consumes the FIXED recorded ``alpha``, never a fresh draw.
    """
    _check_run_inputs(config, final_state, "final")
    if field.steps != config.steps or field.n_columns != config.n_columns:
        raise DimensionError(
            f"field shape {field.alpha.shape} does not match config "
            f"({config.steps}, {config.n_columns})"
        )
    n = config.n_columns
    x = config.collapse_x
    amps = final_state.amplitudes.copy()
    probabilities = np.empty((config.steps, n))
    occupancy = np.empty((config.steps, n))
    for t in reversed(range(config.steps)):
        for k in reversed(range(1, config.n_vertices + 1)):
            left, right = vertex_columns(t, k, config.n_vertices)
            for column in (right, left):
                slot = column - 1
                p_one = _link_probability(_occupancy(amps, n, column, 1.0), x)
                alpha = int(field.alpha[t, slot])
                _jump_inplace(amps, n, column, alpha, x)
                _renormalize(amps)
                probabilities[t, slot] = p_one
                occupancy[t, slot] = _occupancy(amps, n, column, 1.0)
            _vertex_inplace(amps, n, left, config.theta)
    record = LatticeRunRecord(
        field=field,
        probabilities=probabilities,
        occupancy=occupancy,
        direction="backward",
    )
    return record, QuantumState(amps)
