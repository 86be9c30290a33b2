"""Restart detection, cosine-annealed resampling proportion and dataset
recomposition."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .problems import Box


@dataclass(frozen=True)
class AnnealParams:
    a: float = 0.5
    b: float = 1.0
    t_max: int = 20_000

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigError("anneal a and b must be positive")
        # tolerance only absorbs rounding in a*(1+b)
        if self.upper > 1.0 + 1e-12 or self.lower < -1e-12:
            raise ConfigError(
                f"proportion bounds [{self.lower}, {self.upper}] must lie within [0, 1]")
        if self.t_max < 1:
            raise ConfigError("t_max must be positive")

    @property
    def upper(self) -> float:
        return self.a * (1.0 + self.b)

    @property
    def lower(self) -> float:
        return self.a * (1.0 - self.b)


@dataclass(frozen=True)
class RestartPolicy:
    """Plateau rule: restart once the best loss of the last ``window`` epochs
    fails to improve on the best of the ``window`` epochs before them by a
    relative ``rel_improvement``, and at least ``min_gap`` epochs have passed
    since the previous restart."""

    window: int = 500
    rel_improvement: float = 1e-3
    min_gap: int = 1000

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("restart window must be at least 1")
        if self.rel_improvement <= 0:
            raise ConfigError("restart rel_improvement must be positive")
        if self.min_gap < self.window:
            raise ConfigError("restart min_gap must be at least the window")


@dataclass
class AnnealState:
    t_s: int = 0
    restart_count: int = 0
    history: list = field(default_factory=list)  # (t_restart, eta, p_hat)

    def record(self, t_restart: int, eta: float, p_hat: float) -> None:
        if t_restart < self.t_s:
            raise ContractError("restart epochs must be non-decreasing")
        self.history.append((t_restart, eta, p_hat))
        self.restart_count += 1
        self.t_s = t_restart


def proportion(t_restart: int, t_s: int, params: AnnealParams) -> float:
    """Resample proportion ``a (1 + b cos(pi (t_restart - t_s) / (t_max - t_s)))``."""
    if t_restart >= params.t_max:
        raise ContractError(f"restart epoch {t_restart} must precede t_max={params.t_max}")
    if not 0 <= t_s <= t_restart:
        raise ContractError(f"need 0 <= t_s <= t_restart, got t_s={t_s}, t_restart={t_restart}")
    phase = math.pi * (t_restart - t_s) / (params.t_max - t_s)
    eta = params.a * (1.0 + params.b * math.cos(phase))
    return min(max(eta, 0.0), 1.0)


def should_restart(loss_history, current_epoch: int, t_s: int, policy: RestartPolicy) -> bool:
    """``loss_history[e]`` is the training loss at epoch ``e``."""
    if current_epoch - t_s < policy.min_gap:
        return False
    w = policy.window
    start = current_epoch - 2 * w + 1
    if start < 0:
        return False
    recent = min(loss_history[current_epoch - w + 1:current_epoch + 1])
    before = min(loss_history[start:current_epoch - w + 1])
    return recent > (1.0 - policy.rel_improvement) * before


@dataclass
class Recomposition:
    points: np.ndarray
    kept_index: np.ndarray       # rows of the old interior that were kept
    adaptive_index: np.ndarray   # rows of the failure samples that were used
    n_prior: int

    @property
    def n_kept(self) -> int:
        return len(self.kept_index)

    @property
    def n_adaptive(self) -> int:
        return len(self.adaptive_index)


def recompose(interior: np.ndarray, failure_samples: np.ndarray, eta: float,
              prior: Box, rng: np.random.Generator) -> Recomposition:
    """New interior set of the same size: kept + adaptive + fresh prior points.

    ``floor(eta * N_c)`` slots are refilled, first from the failure samples
    (subsampled uniformly when there are more than needed), then from the
    prior. The remaining slots keep a uniform subsample of the old set.
    """
    if not 0.0 <= eta <= 1.0:
        raise ContractError(f"eta must lie in [0, 1], got {eta}")
    n_c = len(interior)
    n_new = int(math.floor(eta * n_c))
    n_keep = n_c - n_new
    kept = np.sort(rng.choice(n_c, size=n_keep, replace=False))
    n_f = len(failure_samples)
    if n_f < n_new:
        adaptive = np.arange(n_f)
        n_prior = n_new - n_f
    else:
        adaptive = np.sort(rng.choice(n_f, size=n_new, replace=False))
        n_prior = 0
    parts = [interior[kept]]
    if len(adaptive):
        parts.append(np.asarray(failure_samples)[adaptive])
    if n_prior:
        parts.append(prior.sample(n_prior, rng))
    points = np.concatenate(parts) if len(parts) > 1 else parts[0].copy()
    return Recomposition(points, kept, adaptive, n_prior)
