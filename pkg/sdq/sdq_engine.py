"""
sdq_engine.py
Direction engine of the stochastic damped limited-memory BFGS method.

This module computes the quasi-Newton search direction H_k g_k including:
- Powell-style damping of curvature pairs (theta, gamma, damped y)
- A bounded FIFO memory of curvature pairs
- The two-loop recursion and an equivalent compact-form product
- Direction normalization with an explicit converged outcome
- A dense inverse-Hessian reconstruction used as a test reference

Two initialization modes are supported. IDENTITY resets H_{k,0} to I at every
step and normalizes the final direction. GAMMA scales H_{k,0} by the inverse
of max(y'y / s'y, delta) and returns the direction unnormalized.

Version: 1.0.0
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .sdq_cfg import (
    DEFAULT_DAMPING_NUMERATOR,
    DEFAULT_DAMPING_THRESHOLD,
    DEFAULT_DELTA_SDLBFGS0,
    DEFAULT_NORMALIZE_FLOOR,
    PAIR_SKIP_FLOOR,
)
from .sdq_errors import (
    DegenerateStepError,
    InvalidConfigError,
    InvalidInputError,
    NumericalFailureError,
)

if TYPE_CHECKING:
    from .sdq_optim import OptimizerState


class InitMode(Enum):
    """Choice of the initial inverse-Hessian approximation H_{k,0}."""
    IDENTITY = 'identity'
    GAMMA = 'gamma'


class Recursion(Enum):
    """Algorithm used to apply the limited-memory inverse Hessian."""
    TWO_LOOP = 'two-loop'
    COMPACT = 'compact'


@dataclass(frozen=True)
class DampingConfig:
    """
    Settings of the damped direction engine.

    Attributes:
        mode: IDENTITY (reset H_{k,0} = I, normalize) or GAMMA (scaled H_{k,0}, raw)
        delta: Lower bound of gamma, only used in GAMMA mode
        damping_threshold: Damping applies when s'y < threshold * s'H0^{-1}s
        damping_numerator: Numerator constant of theta
        normalize_floor: Directions shorter than this are reported as converged
        recursion: TWO_LOOP or COMPACT product
    """
    mode: InitMode = InitMode.IDENTITY
    delta: float = DEFAULT_DELTA_SDLBFGS0
    damping_threshold: float = DEFAULT_DAMPING_THRESHOLD
    damping_numerator: float = DEFAULT_DAMPING_NUMERATOR
    normalize_floor: float = DEFAULT_NORMALIZE_FLOOR
    recursion: Recursion = Recursion.TWO_LOOP

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidConfigError(f"delta must be positive, got {self.delta}")
        if not 0 < self.damping_threshold < 1:
            raise InvalidConfigError(f"damping_threshold must lie in (0, 1), got {self.damping_threshold}")
        if not 0 < self.damping_numerator < 1:
            raise InvalidConfigError(f"damping_numerator must lie in (0, 1), got {self.damping_numerator}")
        if self.damping_numerator <= self.damping_threshold:
            raise InvalidConfigError(
                f"damping_numerator ({self.damping_numerator}) must exceed "
                f"damping_threshold ({self.damping_threshold})"
            )
        if not (np.isfinite(self.normalize_floor) and self.normalize_floor > 0):
            raise InvalidConfigError(f"normalize_floor must be positive, got {self.normalize_floor}")


@dataclass(frozen=True)
class CurvaturePair:
    """One memory entry: displacement s, damped gradient change y_bar, rho = 1 / s'y_bar."""
    s: np.ndarray
    y_bar: np.ndarray
    rho: float

    def __post_init__(self):
        if self.s.ndim != 1 or self.s.shape != self.y_bar.shape or self.s.size < 1:
            raise InvalidInputError(
                f"s and y_bar must be vectors of equal dimension, got {self.s.shape} and {self.y_bar.shape}"
            )
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise InvalidInputError(f"rho must be positive and finite, got {self.rho}")

    @property
    def dim(self) -> int:
        return self.s.shape[0]


class CurvatureMemory:
    """
    Fixed-capacity ring buffer of the most recent curvature pairs.

    Pairs are stored row-wise in preallocated arrays; pushing into a full
    memory overwrites the oldest slot. `h0_scale` is the H_{k,0} scale that
    belongs to the current window.
    """

    def __init__(self, capacity: int, dim: Optional[int] = None):
        if int(capacity) < 1:
            raise InvalidConfigError(f"memory capacity must be at least 1, got {capacity}")
        self.capacity = int(capacity)
        self.dim: Optional[int] = None
        self.h0_scale = 1.0
        self._s: Optional[np.ndarray] = None
        self._y: Optional[np.ndarray] = None
        self._rho = np.zeros(self.capacity)
        self._start = 0
        self._count = 0
        if dim is not None:
            self._allocate(int(dim))

    def _allocate(self, dim: int) -> None:
        if dim < 1:
            raise InvalidInputError(f"dimension must be at least 1, got {dim}")
        self.dim = dim
        self._s = np.zeros((self.capacity, dim))
        self._y = np.zeros((self.capacity, dim))

    def __len__(self) -> int:
        return self._count

    def push(self, pair: CurvaturePair) -> None:
        """Append a pair, evicting the oldest one when full."""
        if self.dim is None:
            self._allocate(pair.dim)
        elif pair.dim != self.dim:
            raise InvalidInputError(f"pair dimension {pair.dim} does not match memory dimension {self.dim}")

        if self._count < self.capacity:
            slot = (self._start + self._count) % self.capacity
            self._count += 1
        else:
            slot = self._start
            self._start = (self._start + 1) % self.capacity

        self._s[slot] = pair.s
        self._y[slot] = pair.y_bar
        self._rho[slot] = pair.rho

    def slots(self) -> List[int]:
        """Storage slots ordered oldest first."""
        return [(self._start + i) % self.capacity for i in range(self._count)]

    def pairs(self) -> List[CurvaturePair]:
        """Copies of the stored pairs, oldest first."""
        return [
            CurvaturePair(self._s[j].copy(), self._y[j].copy(), float(self._rho[j]))
            for j in self.slots()
        ]

    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-stacked (S, Y_bar, rho) ordered oldest first."""
        if self._count == 0:
            dim = self.dim or 0
            return np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0)
        order = (self._start + np.arange(self._count)) % self.capacity
        return self._s[order], self._y[order], self._rho[order]


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidInputError(f"{name} must be a non-empty vector, got shape {arr.shape}")
    return arr


def compute_theta(s_dot_y: float, s_dot_hinv_s: float, cfg: DampingConfig) -> float:
    """
    Damping weight theta in (0, 1].

    Returns numerator * s'H0^{-1}s / (s'H0^{-1}s - s'y) when
    s'y < threshold * s'H0^{-1}s, and 1 otherwise (the boundary is not damped).
    """
    if not (np.isfinite(s_dot_y) and np.isfinite(s_dot_hinv_s)):
        raise InvalidInputError(f"theta inputs must be finite, got s'y={s_dot_y}, s'H0^-1 s={s_dot_hinv_s}")
    if s_dot_hinv_s <= 0:
        raise InvalidInputError(f"s'H0^-1 s must be positive, got {s_dot_hinv_s}")

    if s_dot_y < cfg.damping_threshold * s_dot_hinv_s:
        return float(cfg.damping_numerator * s_dot_hinv_s / (s_dot_hinv_s - s_dot_y))
    return 1.0


def compute_gamma(s, y, cfg: DampingConfig) -> float:
    """
    Scaling gamma = max(y'y / s'y, delta) of the initial matrix H_{k,0} = gamma^{-1} I.

    A zero curvature product s'y falls back to delta. A ratio beyond the
    float range returns +inf (H_{k,0} -> 0).
    """
    s = _as_vector(s, 's')
    y = _as_vector(y, 'y')
    if s.shape != y.shape:
        raise InvalidInputError(f"s and y dimensions differ: {s.shape} vs {y.shape}")
    if not np.all(np.isfinite(s)) or not np.any(s):
        raise DegenerateStepError("gamma is undefined for a zero or non-finite displacement")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("gradient displacement y is not finite")
    if not np.any(y):
        return float(cfg.delta)

    with np.errstate(over='ignore', invalid='ignore'):
        s_dot_y = float(s @ y)
        ratio = float(y @ y) / s_dot_y if s_dot_y != 0.0 else float('nan')
        if not np.isfinite(ratio):
            # y'y / s'y is invariant to scaling y, so evaluate it on y / max|y|
            scale = float(np.max(np.abs(y)))
            y_unit = y / scale
            s_dot_unit = float(s @ y_unit)
            if s_dot_unit == 0.0:
                return float(cfg.delta)
            ratio = scale * (float(y_unit @ y_unit) / s_dot_unit)
    if np.isnan(ratio):
        return float(cfg.delta)
    return max(ratio, float(cfg.delta))


def damp_pair(s, y, hinv_scale: float, cfg: DampingConfig) -> Optional[CurvaturePair]:
    """
    Build the damped curvature pair (s, y_bar, rho).

    y_bar = theta * y + (1 - theta) * hinv_scale * s, where hinv_scale * I is
    H_{k,0}^{-1}. The result always satisfies s'y_bar >= threshold *
    hinv_scale * s's. Returns None (skip the pair) when s'y_bar falls below
    the positivity floor relative to |s| |y_bar|, or when an intermediate
    product leaves the float range.

    Raises:
        DegenerateStepError: s is zero or non-finite
        InvalidInputError: shape mismatch, non-finite y or invalid hinv_scale
    """
    s = _as_vector(s, 's')
    y = _as_vector(y, 'y')
    if s.shape != y.shape:
        raise InvalidInputError(f"s and y dimensions differ: {s.shape} vs {y.shape}")
    if not np.all(np.isfinite(s)) or not np.any(s):
        raise DegenerateStepError("cannot form a curvature pair from a zero or non-finite displacement")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("gradient displacement y is not finite")
    if not (np.isfinite(hinv_scale) and hinv_scale > 0):
        raise InvalidInputError(f"hinv_scale must be positive and finite, got {hinv_scale}")

    with np.errstate(over='ignore', invalid='ignore'):
        s_dot_hinv_s = hinv_scale * float(s @ s)
        s_dot_y = float(s @ y)
    if not (np.isfinite(s_dot_hinv_s) and np.isfinite(s_dot_y)):
        logging.debug(f"Curvature pair skipped: s'y={s_dot_y:.3e}, s'H0^-1 s={s_dot_hinv_s:.3e} overflow")
        return None

    theta = compute_theta(s_dot_y, s_dot_hinv_s, cfg)
    with np.errstate(over='ignore', invalid='ignore'):
        if theta == 1.0:
            y_bar = y.copy()
        else:
            y_bar = theta * y + (1.0 - theta) * hinv_scale * s
        s_dot_y_bar = float(s @ y_bar)
        rho = 1.0 / s_dot_y_bar if s_dot_y_bar != 0.0 else float('inf')
        norms = np.linalg.norm(s) * np.linalg.norm(y_bar)

    if not (np.all(np.isfinite(y_bar)) and np.isfinite(s_dot_y_bar) and np.isfinite(rho)):
        logging.debug("Curvature pair skipped: damped pair leaves the float range")
        return None
    if not s_dot_y_bar >= PAIR_SKIP_FLOOR * norms:
        logging.debug(f"Curvature pair skipped: s'y_bar={s_dot_y_bar:.3e} below positivity floor")
        return None

    return CurvaturePair(s.copy(), y_bar, rho)


def raw_pair(s, y) -> Optional[CurvaturePair]:
    """Undamped pair (s, y, 1 / s'y); None when s'y <= 0 or s is zero."""
    s = _as_vector(s, 's')
    y = _as_vector(y, 'y')
    if s.shape != y.shape:
        raise InvalidInputError(f"s and y dimensions differ: {s.shape} vs {y.shape}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))) or not np.any(s):
        return None
    with np.errstate(over='ignore', invalid='ignore'):
        s_dot_y = float(s @ y)
    if not (s_dot_y > 0 and np.isfinite(s_dot_y)):
        return None
    return CurvaturePair(s.copy(), y.copy(), 1.0 / s_dot_y)


def _check_dimension(memory: CurvatureMemory, g) -> np.ndarray:
    g = _as_vector(g, 'g')
    if memory.dim is not None and g.shape[0] != memory.dim:
        raise InvalidInputError(f"gradient dimension {g.shape[0]} does not match memory dimension {memory.dim}")
    return g


def two_loop(memory: CurvatureMemory, g, h0_scale: float) -> np.ndarray:
    """
    Apply the limited-memory inverse Hessian to g with the two-loop recursion.

    The first loop walks the pairs newest to oldest, the initial matrix
    h0_scale * I is applied in between, and the second loop walks the pairs
    oldest to newest reusing the first-loop coefficients in reverse order.
    The result is not normalized.
    """
    g = _check_dimension(memory, g)
    slots = memory.slots()
    c = len(slots)
    S, Y, rho = memory._s, memory._y, memory._rho

    u = g.copy()
    mu = [0.0] * c
    for i in range(c):
        j = slots[c - 1 - i]
        mu[i] = rho[j] * float(u @ S[j])
        u -= mu[i] * Y[j]

    v = h0_scale * u
    for i in range(c):
        j = slots[i]
        nu = rho[j] * float(v @ Y[j])
        v += (mu[c - 1 - i] - nu) * S[j]
    return v


def compact_product(memory: CurvatureMemory, g, h0_scale: float) -> np.ndarray:
    """
    Apply the limited-memory inverse Hessian to g through its compact form.

    With S, Y the stored pairs as rows (oldest first), R the upper triangle of
    S Y' and D its diagonal:
        H g = h0 g + S' R^{-T} ((D + h0 Y Y') R^{-1} S g - h0 Y g) - h0 Y' R^{-1} S g
    which equals the two-loop result up to rounding.
    """
    g = _check_dimension(memory, g)
    if len(memory) == 0:
        return h0_scale * g

    S, Y, _ = memory.stacked()
    SY = S @ Y.T
    R = np.triu(SY)
    D = np.diag(SY)

    p = solve_triangular(R, S @ g, lower=False)
    Yt_p = Y.T @ p
    t = D * p + h0_scale * (Y @ Yt_p) - h0_scale * (Y @ g)
    q = solve_triangular(R, t, trans='T', lower=False)
    return h0_scale * g + S.T @ q - h0_scale * Yt_p


def dense_hessian_reconstruct(memory: CurvatureMemory, h0_scale: float,
                              dim: Optional[int] = None) -> np.ndarray:
    """
    Dense inverse-Hessian approximation obtained by folding the BFGS update
    H <- (I - rho s y') H (I - rho y s') + rho s s' over the stored pairs,
    oldest first, starting from h0_scale * I. Meant for small dimensions.
    """
    d = memory.dim if memory.dim is not None else dim
    if d is None:
        raise InvalidInputError("dimension is unknown for an empty memory; pass dim")
    if dim is not None and dim != d:
        raise InvalidInputError(f"dim={dim} does not match memory dimension {d}")

    identity = np.eye(d)
    H = h0_scale * identity
    for pair in memory.pairs():
        V = identity - pair.rho * np.outer(pair.y_bar, pair.s)
        H = V.T @ H @ V + pair.rho * np.outer(pair.s, pair.s)
    return H


def normalize_direction(v, floor: float = DEFAULT_NORMALIZE_FLOOR) -> Optional[np.ndarray]:
    """
    Scale v to unit Euclidean norm.

    Returns None (converged) when |v| < floor.

    Raises:
        NumericalFailureError: v contains non-finite values
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericalFailureError("direction contains non-finite values")
    norm = float(np.linalg.norm(v))
    if norm < floor:
        return None
    return v / norm


def select_product(cfg: DampingConfig) -> Callable[[CurvatureMemory, np.ndarray, float], np.ndarray]:
    return compact_product if cfg.recursion is Recursion.COMPACT else two_loop


def _update_memory(memory: CurvatureMemory, s: np.ndarray, y: np.ndarray, cfg: DampingConfig) -> None:
    if not np.any(s):
        logging.debug("Zero displacement: no curvature pair formed")
        return

    try:
        if cfg.mode is InitMode.GAMMA:
            # gamma uses the undamped y and is fixed before damping
            gamma = compute_gamma(s, y, cfg)
            if not np.isfinite(gamma):
                logging.debug("Curvature pair skipped: gamma overflows")
                return
            pair = damp_pair(s, y, gamma, cfg)
        else:
            gamma = None
            pair = damp_pair(s, y, 1.0, cfg)
    except DegenerateStepError as e:
        logging.debug(f"Curvature pair skipped: {e}")
        return

    if pair is None:
        return

    memory.push(pair)
    if gamma is not None:
        memory.h0_scale = 1.0 / gamma


def compute_direction(state: 'OptimizerState', g_k, cfg: DampingConfig,
                      y_override: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """
    Search direction H_k g_k for the current iterate.

    When the state holds a previous iterate and gradient, the new pair
    s = x_k - x_{k-1}, y = g_k - g_{k-1} (or `y_override`) is damped and
    pushed into `state.memory` first; zero or degenerate displacements are
    skipped and the existing memory is used. IDENTITY mode returns a unit
    vector, GAMMA mode the raw product. None means the direction vanished
    (norm below cfg.normalize_floor).

    Raises:
        InvalidInputError: missing memory or dimension mismatch
        NumericalFailureError: the direction is non-finite
    """
    memory = state.memory
    if memory is None:
        raise InvalidInputError("state carries no curvature memory")

    g_k = _as_vector(g_k, 'g_k')
    if g_k.shape != np.shape(state.x):
        raise InvalidInputError(f"gradient shape {g_k.shape} does not match iterate shape {np.shape(state.x)}")

    if state.x_prev is not None and state.g_prev is not None:
        s = np.asarray(state.x, dtype=float) - state.x_prev
        y = y_override if y_override is not None else g_k - state.g_prev
        _update_memory(memory, s, np.asarray(y, dtype=float), cfg)

    h0_scale = 1.0 if cfg.mode is InitMode.IDENTITY else memory.h0_scale
    v = select_product(cfg)(memory, g_k, h0_scale)

    if cfg.mode is InitMode.IDENTITY:
        return normalize_direction(v, cfg.normalize_floor)

    if not np.all(np.isfinite(v)):
        raise NumericalFailureError("direction contains non-finite values")
    if float(np.linalg.norm(v)) < cfg.normalize_floor:
        return None
    return v
