"""
sdq_objectives.py
Objective functions behind a uniform gradient oracle interface.

This module provides:
- The 2D Rosenbrock-type test function and the quadratic 0.5*|x|^2
- Multinomial logistic regression and a sigmoid MLP with manual backpropagation
- Seeded minibatch sampling (epoch-level shuffle, consecutive batches)
- Central finite-difference gradient checking

A batch seed packs (run_seed, k) into one integer, so any minibatch of any
run can be reconstructed in isolation. Oracles are immutable after
construction and carry no state between calls.

Version: 1.0.0
"""

from functools import lru_cache
from typing import List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
from scipy.special import expit, logsumexp

from .sdq_data import Dataset
from .sdq_errors import InvalidConfigError, InvalidInputError, NumericalFailureError

BATCH_SEED_SHIFT = 32
BATCH_SEED_MASK = (1 << BATCH_SEED_SHIFT) - 1

ROSENBROCK_START = (-1.2, 1.0)
QUADRATIC_START = (3.0, 4.0)


def make_batch_seed(run_seed: int, k: int) -> int:
    """Pack a run seed and an iteration counter into one batch seed."""
    if run_seed < 0 or not 0 <= k <= BATCH_SEED_MASK:
        raise InvalidInputError(f"cannot pack run_seed={run_seed}, k={k} into a batch seed")
    return (int(run_seed) << BATCH_SEED_SHIFT) | int(k)


def split_batch_seed(batch_seed: int) -> Tuple[int, int]:
    """Inverse of make_batch_seed: (run_seed, k)."""
    return int(batch_seed) >> BATCH_SEED_SHIFT, int(batch_seed) & BATCH_SEED_MASK


@runtime_checkable
class GradientOracle(Protocol):
    """(objective, gradient) provider used by every optimizer."""

    dim: int

    def eval(self, x: np.ndarray, batch_seed: int) -> Tuple[float, np.ndarray]:
        ...

    def full_eval(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        ...

    def initial_point(self) -> np.ndarray:
        ...


def _as_point(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise InvalidInputError(f"expected a point of shape ({dim},), got {x.shape}")
    return x


def rosenbrock_eval(x) -> Tuple[float, np.ndarray]:
    """
    f(x1, x2) = 100 (x1^2 - x2)^2 + (x1 - 1)^2 and its gradient.

    Overflow is not an error: extreme points give non-finite values.
    """
    x = _as_point(x, 2)
    with np.errstate(over='ignore', invalid='ignore'):
        a = x[0] * x[0] - x[1]
        b = x[0] - 1.0
        f = 100.0 * a * a + b * b
        g = np.array([400.0 * x[0] * a + 2.0 * b, -200.0 * a])
    return float(f), g


class RosenbrockOracle:
    """Deterministic 2D test function; batch seeds are ignored."""

    dim = 2

    def eval(self, x, batch_seed: int = 0) -> Tuple[float, np.ndarray]:
        return rosenbrock_eval(x)

    def full_eval(self, x) -> Tuple[float, np.ndarray]:
        return rosenbrock_eval(x)

    def initial_point(self) -> np.ndarray:
        return np.array(ROSENBROCK_START)


class QuadraticOracle:
    """f(x) = 0.5 |x|^2 with gradient x."""

    def __init__(self, dim: int = 2, start: Optional[Sequence[float]] = None):
        if dim < 1:
            raise InvalidConfigError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        if start is None:
            start = QUADRATIC_START if dim == 2 else np.ones(dim)
        self._start = _as_point(start, self.dim).copy()

    def eval(self, x, batch_seed: int = 0) -> Tuple[float, np.ndarray]:
        return self.full_eval(x)

    def full_eval(self, x) -> Tuple[float, np.ndarray]:
        x = _as_point(x, self.dim)
        with np.errstate(over='ignore', invalid='ignore'):
            f = 0.5 * float(x @ x)
        return f, x.copy()

    def initial_point(self) -> np.ndarray:
        return self._start.copy()


@lru_cache(maxsize=8)
def _epoch_permutation(n: int, run_seed: int, epoch: int) -> np.ndarray:
    perm = np.random.default_rng([run_seed, epoch]).permutation(n)
    perm.flags.writeable = False
    return perm


def _softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    m = logits.shape[0]
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    rows = np.arange(m)
    loss = -float(np.mean(log_probs[rows, labels]))
    delta = np.exp(log_probs)
    delta[rows, labels] -= 1.0
    return loss, delta / m


class _MinibatchOracle:
    """Shared minibatch bookkeeping of the learning objectives."""

    def __init__(self, dataset: Dataset, batch_size: int):
        if dataset.n < 1:
            raise InvalidConfigError("dataset is empty")
        if batch_size < 1 or batch_size > dataset.n:
            raise InvalidConfigError(f"batch_size must lie in [1, {dataset.n}], got {batch_size}")
        self.dataset = dataset
        self.batch_size = int(batch_size)
        self.batches_per_epoch = dataset.n // self.batch_size

    def batch_indices(self, batch_seed: int) -> np.ndarray:
        """
        Rows of the minibatch used at iteration k of run run_seed.

        An epoch holds n // batch_size full batches; when batch_size does not
        divide n the last n % batch_size rows of the epoch's permutation are
        not visited in that epoch.
        """
        run_seed, k = split_batch_seed(batch_seed)
        epoch, position = divmod(max(k - 1, 0), self.batches_per_epoch)
        perm = _epoch_permutation(self.dataset.n, run_seed, epoch)
        start = position * self.batch_size
        return perm[start:start + self.batch_size]

    def _loss_grad(self, x: np.ndarray, features: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    def _logits(self, x: np.ndarray, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, x, batch_seed: int) -> Tuple[float, np.ndarray]:
        x = _as_point(x, self.dim)
        idx = self.batch_indices(batch_seed)
        return self._loss_grad(x, self.dataset.features[idx], self.dataset.labels[idx])

    def full_eval(self, x) -> Tuple[float, np.ndarray]:
        x = _as_point(x, self.dim)
        return self._loss_grad(x, self.dataset.features, self.dataset.labels)

    def accuracy(self, x, dataset: Dataset) -> float:
        """Fraction of examples whose arg-max prediction matches the label."""
        if dataset.n == 0:
            return float('nan')
        x = _as_point(x, self.dim)
        with np.errstate(over='ignore', invalid='ignore'):
            predictions = np.argmax(self._logits(x, dataset.features), axis=1)
        return float(np.mean(predictions == dataset.labels))


class LogisticRegressionOracle(_MinibatchOracle):
    """
    Multinomial logistic regression.

    Parameters are W (d x C, row-major) followed by the bias b (C). The
    objective is the mean cross-entropy plus (l2 / 2) |W|^2.
    """

    def __init__(self, dataset: Dataset, l2: float, batch_size: int):
        super().__init__(dataset, batch_size)
        if not (np.isfinite(l2) and l2 >= 0):
            raise InvalidConfigError(f"l2 must be non-negative, got {l2}")
        self.l2 = float(l2)
        self.num_classes = dataset.num_classes
        self._w_size = dataset.d * dataset.num_classes
        self.dim = self._w_size + dataset.num_classes

    def _unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return x[:self._w_size].reshape(self.dataset.d, self.num_classes), x[self._w_size:]

    def _logits(self, x: np.ndarray, features: np.ndarray) -> np.ndarray:
        W, b = self._unpack(x)
        return features @ W + b

    def _loss_grad(self, x, features, labels):
        W, _ = self._unpack(x)
        loss, delta = _softmax_cross_entropy(self._logits(x, features), labels)
        loss += 0.5 * self.l2 * float(np.sum(W * W))
        grad_W = features.T @ delta + self.l2 * W
        grad_b = delta.sum(axis=0)
        return loss, np.concatenate([grad_W.ravel(), grad_b])

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)


class MLPOracle(_MinibatchOracle):
    """
    Fully-connected network: sigmoid hidden layers, softmax output.

    The flat parameter vector holds, layer by layer, W_l (n_in x n_out,
    row-major) followed by b_l.
    """

    def __init__(self, dataset: Dataset, layers: Sequence[int], batch_size: int, seed: int):
        super().__init__(dataset, batch_size)
        layers = [int(width) for width in layers]
        if len(layers) < 2 or min(layers) < 1:
            raise InvalidConfigError(f"layers must list at least two positive widths, got {layers}")
        if layers[0] != dataset.d:
            raise InvalidConfigError(f"input width {layers[0]} does not match {dataset.d} dataset features")
        if layers[-1] != dataset.num_classes:
            raise InvalidConfigError(
                f"output width {layers[-1]} does not match {dataset.num_classes} classes"
            )
        self.layers = tuple(layers)
        self.seed = int(seed)

        self._shapes: List[Tuple[int, int]] = list(zip(layers[:-1], layers[1:]))
        self._offsets: List[Tuple[int, int, int]] = []
        offset = 0
        for n_in, n_out in self._shapes:
            self._offsets.append((offset, offset + n_in * n_out, offset + n_in * n_out + n_out))
            offset += n_in * n_out + n_out
        self.dim = offset

    def _unpack(self, x: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        params = []
        for (n_in, n_out), (w0, b0, end) in zip(self._shapes, self._offsets):
            params.append((x[w0:b0].reshape(n_in, n_out), x[b0:end]))
        return params

    def _forward(self, x: np.ndarray, features: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        params = self._unpack(x)
        activations = [features]
        for W, b in params[:-1]:
            activations.append(expit(activations[-1] @ W + b))
        W, b = params[-1]
        return activations, activations[-1] @ W + b

    def _logits(self, x: np.ndarray, features: np.ndarray) -> np.ndarray:
        return self._forward(x, features)[1]

    def _loss_grad(self, x, features, labels):
        params = self._unpack(x)
        activations, logits = self._forward(x, features)
        loss, delta = _softmax_cross_entropy(logits, labels)

        grad = np.empty(self.dim)
        for layer in range(len(params) - 1, -1, -1):
            w0, b0, end = self._offsets[layer]
            W, _ = params[layer]
            a_in = activations[layer]
            grad[w0:b0] = (a_in.T @ delta).ravel()
            grad[b0:end] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ W.T) * a_in * (1.0 - a_in)
        return loss, grad

    def initial_point(self) -> np.ndarray:
        """Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the seed."""
        rng = np.random.default_rng(self.seed)
        pieces = []
        for n_in, n_out in self._shapes:
            bound = 1.0 / np.sqrt(n_in)
            pieces.append(rng.uniform(-bound, bound, size=n_in * n_out))
            pieces.append(rng.uniform(-bound, bound, size=n_out))
        return np.concatenate(pieces)


def rosenbrock_oracle() -> RosenbrockOracle:
    return RosenbrockOracle()


def quadratic_oracle(dim: int = 2, start: Optional[Sequence[float]] = None) -> QuadraticOracle:
    return QuadraticOracle(dim, start)


def logistic_regression_oracle(dataset: Dataset, l2: float, batch_size: int) -> LogisticRegressionOracle:
    return LogisticRegressionOracle(dataset, l2, batch_size)


def mlp_oracle(dataset: Dataset, layers: Sequence[int], batch_size: int, seed: int) -> MLPOracle:
    return MLPOracle(dataset, layers, batch_size, seed)


def finite_difference_check(oracle: GradientOracle, x, h: float, batch_seed: int = 0) -> float:
    """
    Largest relative deviation between the analytic gradient and central
    differences, max_i |g_i - g_hat_i| / (1 + |g_i|), at a fixed batch seed.

    Raises:
        InvalidInputError: h is not positive
        NumericalFailureError: an evaluation is non-finite
    """
    if not (np.isfinite(h) and h > 0):
        raise InvalidInputError(f"finite-difference step must be positive, got {h}")

    x = np.asarray(x, dtype=float)
    f, g = oracle.eval(x, batch_seed)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalFailureError(f"non-finite evaluation at the check point (f={f})")

    worst = 0.0
    probe = x.copy()
    for i in range(x.shape[0]):
        probe[i] = x[i] + h
        f_plus, _ = oracle.eval(probe, batch_seed)
        probe[i] = x[i] - h
        f_minus, _ = oracle.eval(probe, batch_seed)
        probe[i] = x[i]
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalFailureError(f"non-finite evaluation while probing coordinate {i}")
        estimate = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(g[i] - estimate) / (1.0 + abs(g[i])))
    return worst
