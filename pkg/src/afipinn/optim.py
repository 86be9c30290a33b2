"""Adam and fixed-step L-BFGS over a flat parameter vector."""

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericalError

CURVATURE_EPS = 1e-10


@dataclass
class AdamState:
    n_params: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = None
    second_moment: np.ndarray = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.first_moment is None:
            self.first_moment = np.zeros(self.n_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.n_params)

    def reset(self):
        """Forget the moment estimates and restart bias correction."""
        self.step_count = 0
        self.first_moment[:] = 0.0
        self.second_moment[:] = 0.0


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.first_moment.shape:
        raise ConfigError(f"gradient shape {grad.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient", index=int(np.flatnonzero(~np.isfinite(grad))[0]))
    state.step_count += 1
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat_scale = 1.0 / (1.0 - state.beta1 ** state.step_count)
    v_hat_scale = 1.0 / (1.0 - state.beta2 ** state.step_count)
    return params - state.lr * (m * m_hat_scale) / (np.sqrt(v * v_hat_scale) + state.eps_hat)


LossAndGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class LbfgsState:
    history_size: int = 50
    step_size: float = 0.3
    history: deque = field(default=None)
    loss: Optional[float] = None
    grad: Optional[np.ndarray] = None  # gradient at the current iterate

    def __post_init__(self):
        if self.history_size < 1:
            raise ConfigError("L-BFGS history size must be at least 1")
        if self.step_size <= 0:
            raise ConfigError("L-BFGS step size must be positive")
        if self.history is None:
            self.history = deque(maxlen=self.history_size)

    def reset(self) -> None:
        """Forget curvature pairs and the cached gradient (e.g. after the
        objective itself changed)."""
        self.history.clear()
        self.loss = None
        self.grad = None


def _two_loop(grad: np.ndarray, history) -> np.ndarray:
    """Apply the inverse-Hessian approximation to ``grad``."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        alpha = rho * (s @ q)
        q -= alpha * y
        alphas.append(alpha)
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), alpha in zip(history, reversed(alphas)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return q


def _check_finite(loss, grad):
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient at L-BFGS iterate")


def lbfgs_step(params: np.ndarray, loss_and_grad: LossAndGrad, state: LbfgsState) -> np.ndarray:
    """One fixed-step L-BFGS iteration (no line search).

    With an empty history the step is steepest descent scaled by
    ``min(1, 1 / |g|_1)``, as in common framework implementations.

    The oracle is called at the trial point; its gradient is cached for the
    next step. Pairs with ``s.y <= 1e-10`` are not stored.
    """
    if state.grad is None:
        state.loss, state.grad = loss_and_grad(params)
        _check_finite(state.loss, state.grad)
    g = state.grad
    if not np.any(g):
        return params.copy()
    step = state.step_size
    if not state.history:
        # no curvature information yet: cap the first move at step_size in l1 norm
        step *= min(1.0, 1.0 / float(np.abs(g).sum()))
    new_params = params - step * _two_loop(g, state.history)
    loss, new_grad = loss_and_grad(new_params)
    try:
        _check_finite(loss, new_grad)
    except NumericalError:
        state.reset()
        raise
    s = new_params - params
    y = new_grad - g
    sy = float(s @ y)
    if sy > CURVATURE_EPS:
        state.history.append((s, y, 1.0 / sy))
    state.loss, state.grad = loss, new_grad
    return new_params
