"""Performance functions: where is the network unreliable?

Q(x) is either the magnitude of the normalized PDE residual or the Euclidean
norm of its spatial gradient. The normalization constant is the integral norm
of the residual at the first resampling and stays fixed for the whole run.
"""

import logging
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .autodiff import Network, evaluate_batch
from .errors import ContractError, NumericalError
from .problems import Box, ProblemSpec

log = logging.getLogger(__name__)

NORM_SAMPLES = 10_000
FD_REL_STEP = 1e-4


class PerformanceKind(str, Enum):
    RESIDUAL = "residual"
    RESIDUAL_GRADIENT = "residual_gradient"


def network_residual(net: Network, problem: ProblemSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Interior PDE residual of ``net`` as a vectorized function of points.

    The network is read at call time, so the returned function follows
    in-place parameter updates.
    """
    op = problem.interior

    def residual(X):
        X = np.atleast_2d(X)
        return op(X, evaluate_batch(net, X, order=op.order))

    return residual


def _finite_or_raise(values, X, what):
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"non-finite {what}", index=i, point=X[i])


class PerformanceFn:
    def __init__(self, kind, residual: Callable, domain: Box, norm_state: Optional[float] = None):
        self.kind = PerformanceKind(kind)
        self.residual = residual
        self.domain = domain
        self._norm = None
        if norm_state is not None:
            self.set_norm(norm_state)

    @classmethod
    def for_network(cls, kind, net: Network, problem: ProblemSpec) -> "PerformanceFn":
        return cls(kind, network_residual(net, problem), problem.domain)

    @property
    def norm_state(self) -> Optional[float]:
        return self._norm

    def set_norm(self, value: float) -> None:
        if self._norm is not None:
            raise ContractError("normalization is already fixed for this run")
        if not (np.isfinite(value) and value > 0):
            raise ContractError(f"normalization must be positive and finite, got {value}")
        self._norm = float(value)

    def _scaled_residual(self, X):
        r = np.asarray(self.residual(X), dtype=np.float64)
        _finite_or_raise(r, X, "residual")
        return r / (self._norm or 1.0)

    def _residual_gradient(self, X):
        # central differences, one-sided where a step would leave the box
        lo, hi = self.domain.lower, self.domain.upper
        h = FD_REL_STEP * self.domain.width
        N, d = X.shape
        plus = np.repeat(X[None], d, axis=0)
        minus = plus.copy()
        for i in range(d):
            plus[i, :, i] = np.minimum(X[:, i] + h[i], hi[i])
            minus[i, :, i] = np.maximum(X[:, i] - h[i], lo[i])
        r = self._scaled_residual(np.concatenate([plus, minus]).reshape(2 * d * N, d))
        r_plus, r_minus = r[:d * N].reshape(d, N), r[d * N:].reshape(d, N)
        steps = plus[np.arange(d), :, np.arange(d)] - minus[np.arange(d), :, np.arange(d)]
        return ((r_plus - r_minus) / steps).T

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Q at each row of ``X``; always non-negative."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind is PerformanceKind.RESIDUAL:
            return np.abs(self._scaled_residual(X))
        return np.linalg.norm(self._residual_gradient(X), axis=1)

    def evaluate_q(self, x: np.ndarray) -> float:
        return float(self(np.asarray(x, dtype=np.float64)[None, :])[0])


def estimate_norm(residual: Callable, domain: Box, n_samples: int = NORM_SAMPLES,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Monte Carlo estimate of the integral norm ``sqrt(int r^2 dx)`` over the box.

    Falls back to 1.0 (with a warning) when the residual vanishes on all samples.
    """
    if n_samples < 100:
        raise ContractError(f"n_samples must be at least 100, got {n_samples}")
    rng = np.random.default_rng() if rng is None else rng
    X = domain.sample(n_samples, rng)
    r = np.asarray(residual(X), dtype=np.float64)
    _finite_or_raise(r, X, "residual")
    value = float(np.sqrt(domain.volume * np.mean(r * r)))
    if value == 0.0:
        log.warning("residual norm estimate is zero; using 1.0 for normalization")
        return 1.0
    return value
