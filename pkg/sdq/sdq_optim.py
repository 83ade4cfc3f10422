"""
sdq_optim.py
Iterate-update loops of the SDQ optimization toolkit.

This module provides:
- Step-size schedules (1/sqrt(k), constant, k^-beta)
- SdLBFGS steps (identity H_{k,0}, normalized direction)
- SdLBFGS0 steps (gamma-scaled H_{k,0}, raw direction)
- Baselines: SGD, Adagrad and an undamped fixed-step L-BFGS
- The per-iteration trajectory record

Every step evaluates the oracle once at the current iterate (twice when
same-batch curvature pairs are requested), returns a new OptimizerState and
one TrajectoryRecord describing the evaluated iterate. The curvature memory
object is carried over from state to state and updated in place.

Version: 1.0.0
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .sdq_cfg import DEFAULT_DELTA_LBFGS, DEFAULT_DELTA_SDLBFGS0, DEFAULT_MEMORY_SIZE
from .sdq_engine import (
    CurvatureMemory,
    DampingConfig,
    InitMode,
    Recursion,
    compute_direction,
    compute_gamma,
    raw_pair,
    select_product,
)
from .sdq_errors import InvalidConfigError, InvalidInputError, NumericalFailureError
from .sdq_objectives import GradientOracle

DEFAULT_ADAGRAD_EPS = 1e-10


class OptimizerKind(Enum):
    SDLBFGS = 'sdlbfgs'
    SDLBFGS0 = 'sdlbfgs0'
    SGD = 'sgd'
    ADAGRAD = 'adagrad'
    LBFGS = 'lbfgs'

    @property
    def quasi_newton(self) -> bool:
        return self in (OptimizerKind.SDLBFGS, OptimizerKind.SDLBFGS0)


class ScheduleKind(Enum):
    INVERSE_SQRT = 'inv-sqrt'
    CONSTANT = 'constant'
    INVERSE_POWER = 'inv-power'


class RunFlag(Enum):
    OK = 'ok'
    CONVERGED = 'converged'
    NONFINITE = 'nonfinite'


@dataclass(frozen=True)
class StepSchedule:
    """
    Step size alpha_k.

    INVERSE_SQRT: base / sqrt(k); CONSTANT: base; INVERSE_POWER: base * k^-beta.
    A zero base is accepted for CONSTANT only (a frozen control run).
    """
    kind: ScheduleKind = ScheduleKind.INVERSE_SQRT
    base: float = 1.0
    beta: float = 0.75

    def __post_init__(self):
        if not np.isfinite(self.base) or self.base < 0:
            raise InvalidConfigError(f"step size base must be non-negative, got {self.base}")
        if self.base == 0 and self.kind is not ScheduleKind.CONSTANT:
            raise InvalidConfigError(f"step size base must be positive for {self.kind.value}")
        if self.kind is ScheduleKind.INVERSE_POWER and not 0.5 < self.beta < 1:
            raise InvalidConfigError(f"beta must lie in (0.5, 1), got {self.beta}")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One logged row of a run; `objective` and `grad_norm` refer to the evaluated iterate."""
    iter: int
    objective: float
    grad_norm: float
    alpha: float
    test_accuracy: Optional[float] = None
    flag: RunFlag = RunFlag.OK


@dataclass
class OptimizerState:
    """
    Iterate and history of one run.

    x_prev and g_prev are None exactly at k == 1. `memory` is used by the
    quasi-Newton modes and the L-BFGS baseline, `accumulator` by Adagrad.
    `seed_prev` is the batch seed of the previous step.
    """
    x: np.ndarray
    x_prev: Optional[np.ndarray] = None
    g_prev: Optional[np.ndarray] = None
    k: int = 1
    memory: Optional[CurvatureMemory] = None
    accumulator: Optional[np.ndarray] = None
    cfg: Optional[DampingConfig] = None
    seed_prev: Optional[int] = None


def schedule_alpha(sched: StepSchedule, k: int) -> float:
    """Step size at iteration k (k >= 1)."""
    if k < 1:
        raise InvalidInputError(f"iteration counter must be at least 1, got {k}")
    if sched.kind is ScheduleKind.INVERSE_SQRT:
        return float(sched.base / np.sqrt(k))
    if sched.kind is ScheduleKind.INVERSE_POWER:
        return float(sched.base * float(k) ** (-sched.beta))
    return float(sched.base)


def default_config(kind: OptimizerKind, delta: Optional[float] = None,
                   recursion: Recursion = Recursion.TWO_LOOP) -> Optional[DampingConfig]:
    """Damping configuration matching an optimizer; None for first-order methods."""
    if kind is OptimizerKind.SDLBFGS:
        return DampingConfig(mode=InitMode.IDENTITY, recursion=recursion)
    if kind is OptimizerKind.SDLBFGS0:
        return DampingConfig(mode=InitMode.GAMMA, recursion=recursion,
                             delta=DEFAULT_DELTA_SDLBFGS0 if delta is None else delta)
    if kind is OptimizerKind.LBFGS:
        return DampingConfig(mode=InitMode.GAMMA, recursion=recursion,
                             delta=DEFAULT_DELTA_LBFGS if delta is None else delta)
    return None


def init_state(x0, kind: OptimizerKind, memory_size: int = DEFAULT_MEMORY_SIZE,
               cfg: Optional[DampingConfig] = None) -> OptimizerState:
    """Fresh state at k = 1 for the given optimizer."""
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 1 or x0.size < 1:
        raise InvalidInputError(f"initial point must be a non-empty vector, got shape {x0.shape}")

    if cfg is None:
        cfg = default_config(kind)
    memory = None
    accumulator = None
    if kind in (OptimizerKind.SDLBFGS, OptimizerKind.SDLBFGS0, OptimizerKind.LBFGS):
        memory = CurvatureMemory(memory_size, dim=x0.shape[0])
    elif kind is OptimizerKind.ADAGRAD:
        accumulator = np.zeros_like(x0)
    return OptimizerState(x=x0, memory=memory, accumulator=accumulator, cfg=cfg)


def _evaluate(oracle: GradientOracle, x: np.ndarray, batch_seed: int) -> Tuple[float, np.ndarray, float, bool]:
    f, g = oracle.eval(x, batch_seed)
    g = np.array(g, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        grad_norm = float(np.linalg.norm(g))
    finite = bool(np.isfinite(f) and np.all(np.isfinite(g)))
    return float(f), g, grad_norm, finite


def _advance(state: OptimizerState, x_new: np.ndarray, g: np.ndarray, batch_seed: int,
             **changes) -> OptimizerState:
    return replace(state, x=x_new, x_prev=state.x, g_prev=g, k=state.k + 1,
                   seed_prev=batch_seed, **changes)


def _halt(state: OptimizerState, f: float, grad_norm: float, alpha: float) -> Tuple[OptimizerState, TrajectoryRecord]:
    logging.warning(f"Non-finite values at iteration {state.k}: objective={f}, grad_norm={grad_norm}")
    record = TrajectoryRecord(state.k, f, grad_norm, alpha, flag=RunFlag.NONFINITE)
    return replace(state, k=state.k + 1), record


def _require_mode(state: OptimizerState, mode: InitMode) -> DampingConfig:
    if state.cfg is None or state.cfg.mode is not mode:
        raise InvalidConfigError(f"state is not configured for {mode.value} initialization")
    return state.cfg


def _same_batch_y(state: OptimizerState, oracle: GradientOracle, same_batch_pairs: bool) -> Optional[np.ndarray]:
    """y = g(x_k; previous batch) - g_{k-1} when same-batch pairs are requested."""
    if not same_batch_pairs or state.g_prev is None or state.seed_prev is None:
        return None
    _, g_again = oracle.eval(state.x, state.seed_prev)
    return np.asarray(g_again, dtype=float) - state.g_prev


def sdlbfgs_step(state: OptimizerState, oracle: GradientOracle, sched: StepSchedule,
                 batch_seed: int, same_batch_pairs: bool = False) -> Tuple[OptimizerState, TrajectoryRecord]:
    """
    One SdLBFGS iteration: x_{k+1} = x_k - alpha_k d_k with a unit direction d_k.

    A vanished direction leaves x unchanged and flags the record converged.

    Raises:
        NumericalFailureError: the oracle returned non-finite values
    """
    cfg = _require_mode(state, InitMode.IDENTITY)
    alpha = schedule_alpha(sched, state.k)
    f, g, grad_norm, finite = _evaluate(oracle, state.x, batch_seed)
    if not finite:
        raise NumericalFailureError(
            f"non-finite objective or gradient at iteration {state.k}",
            iteration=state.k, objective=f, grad_norm=grad_norm
        )

    direction = compute_direction(state, g, cfg, _same_batch_y(state, oracle, same_batch_pairs))
    if direction is None:
        record = TrajectoryRecord(state.k, f, grad_norm, alpha, flag=RunFlag.CONVERGED)
        return _advance(state, state.x.copy(), g, batch_seed), record

    x_new = state.x - alpha * direction
    return _advance(state, x_new, g, batch_seed), TrajectoryRecord(state.k, f, grad_norm, alpha)


def sdlbfgs0_step(state: OptimizerState, oracle: GradientOracle, sched: StepSchedule,
                  batch_seed: int, same_batch_pairs: bool = False) -> Tuple[OptimizerState, TrajectoryRecord]:
    """
    One SdLBFGS0 iteration: gamma-scaled H_{k,0} and an unnormalized direction.

    Divergence is expected for this mode: non-finite values produce a
    terminal record flagged nonfinite instead of an exception.
    """
    cfg = _require_mode(state, InitMode.GAMMA)
    alpha = schedule_alpha(sched, state.k)
    f, g, grad_norm, finite = _evaluate(oracle, state.x, batch_seed)
    if not finite:
        return _halt(state, f, grad_norm, alpha)

    try:
        direction = compute_direction(state, g, cfg, _same_batch_y(state, oracle, same_batch_pairs))
    except NumericalFailureError:
        return _halt(state, f, grad_norm, alpha)

    if direction is None:
        record = TrajectoryRecord(state.k, f, grad_norm, alpha, flag=RunFlag.CONVERGED)
        return _advance(state, state.x.copy(), g, batch_seed), record

    with np.errstate(over='ignore', invalid='ignore'):
        x_new = state.x - alpha * direction
    return _advance(state, x_new, g, batch_seed), TrajectoryRecord(state.k, f, grad_norm, alpha)


def sgd_step(state: OptimizerState, oracle: GradientOracle, lr: float,
             batch_seed: int) -> Tuple[OptimizerState, TrajectoryRecord]:
    """x_{k+1} = x_k - lr * g_k."""
    f, g, grad_norm, finite = _evaluate(oracle, state.x, batch_seed)
    if not finite:
        return _halt(state, f, grad_norm, lr)

    with np.errstate(over='ignore', invalid='ignore'):
        x_new = state.x - lr * g
    return _advance(state, x_new, g, batch_seed), TrajectoryRecord(state.k, f, grad_norm, lr)


def adagrad_step(state: OptimizerState, oracle: GradientOracle, lr: float, eps: float,
                 batch_seed: int) -> Tuple[OptimizerState, TrajectoryRecord]:
    """a <- a + g*g; x <- x - lr * g / (sqrt(a) + eps), with 0/0 read as 0."""
    if state.accumulator is None:
        raise InvalidConfigError("state carries no Adagrad accumulator")
    f, g, grad_norm, finite = _evaluate(oracle, state.x, batch_seed)
    if not finite:
        return _halt(state, f, grad_norm, lr)

    with np.errstate(over='ignore', invalid='ignore'):
        accumulator = state.accumulator + g * g
        denom = np.sqrt(accumulator) + eps
        scaled = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
        x_new = state.x - lr * scaled
    return (_advance(state, x_new, g, batch_seed, accumulator=accumulator),
            TrajectoryRecord(state.k, f, grad_norm, lr))


def lbfgs_plain_step(state: OptimizerState, oracle: GradientOracle, lr: float,
                     batch_seed: int) -> Tuple[OptimizerState, TrajectoryRecord]:
    """
    Undamped fixed-step L-BFGS baseline.

    Raw pairs (s, y) are stored only when s'y > 0; H_{k,0} = gamma^{-1} I
    follows the last accepted pair, and gamma = delta before any pair
    (H_{k,0} = I for the default delta of 1). No damping, no normalization,
    no line search.
    """
    cfg = _require_mode(state, InitMode.GAMMA)
    memory = state.memory
    f, g, grad_norm, finite = _evaluate(oracle, state.x, batch_seed)
    if not finite:
        return _halt(state, f, grad_norm, lr)

    if state.x_prev is not None and state.g_prev is not None:
        s = state.x - state.x_prev
        y = g - state.g_prev
        pair = raw_pair(s, y)
        if pair is None:
            logging.debug(f"L-BFGS pair skipped at iteration {state.k}: non-positive curvature")
        else:
            memory.push(pair)
            memory.h0_scale = 1.0 / compute_gamma(s, y, cfg)

    h0_scale = memory.h0_scale if len(memory) else 1.0 / cfg.delta
    with np.errstate(over='ignore', invalid='ignore'):
        direction = select_product(cfg)(memory, g, h0_scale)
        x_new = state.x - lr * direction
    if not np.all(np.isfinite(direction)):
        return _halt(state, f, grad_norm, lr)
    return _advance(state, x_new, g, batch_seed), TrajectoryRecord(state.k, f, grad_norm, lr)


def step(kind: OptimizerKind, state: OptimizerState, oracle: GradientOracle, sched: StepSchedule,
         batch_seed: int, eps: float = DEFAULT_ADAGRAD_EPS,
         same_batch_pairs: bool = False) -> Tuple[OptimizerState, TrajectoryRecord]:
    """Dispatch one iteration of the selected optimizer; baselines use alpha_k as their learning rate."""
    if kind is OptimizerKind.SDLBFGS:
        return sdlbfgs_step(state, oracle, sched, batch_seed, same_batch_pairs)
    if kind is OptimizerKind.SDLBFGS0:
        return sdlbfgs0_step(state, oracle, sched, batch_seed, same_batch_pairs)

    lr = schedule_alpha(sched, state.k)
    if kind is OptimizerKind.SGD:
        return sgd_step(state, oracle, lr, batch_seed)
    if kind is OptimizerKind.ADAGRAD:
        return adagrad_step(state, oracle, lr, eps, batch_seed)
    return lbfgs_plain_step(state, oracle, lr, batch_seed)
