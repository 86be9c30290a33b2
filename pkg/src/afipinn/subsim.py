"""Subset simulation and plain Monte Carlo failure-probability estimators.

Failure means ``Q(x) > eps_r`` for a point drawn from the uniform prior on a
box. Subset simulation writes the (possibly tiny) failure probability as a
product of conditional probabilities ``p`` over nested intermediate regions
``{Q > eps^(k)}`` and samples each conditional level with modified
Metropolis-Hastings chains seeded from the previous level.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractError, NumericalError
from .problems import Box

QFunction = Callable[[np.ndarray], np.ndarray]


def _as_int(value, what):
    k = round(value)
    if k < 1 or abs(value - k) > 1e-9 * max(1.0, abs(value)):
        raise ConfigError(f"{what} must be a positive integer, got {value}")
    return int(k)


@dataclass(frozen=True)
class SubsetSimConfig:
    n_s: int
    p: float = 0.1
    eps_r: float = 0.1
    proposal_width_frac: float = 0.01
    max_levels: int = 20

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"level probability p must lie in (0, 1), got {self.p}")
        _as_int(1.0 / self.p, "1/p")
        _as_int(self.n_s * self.p, "n_s * p")
        if self.proposal_width_frac <= 0:
            raise ConfigError("proposal_width_frac must be positive")
        if self.max_levels < 1:
            raise ConfigError("max_levels must be at least 1")

    @property
    def n_p(self) -> int:
        """Number of seeds (chains) per level."""
        return _as_int(self.n_s * self.p, "n_s * p")

    @property
    def chain_length(self) -> int:
        """New states emitted per chain."""
        return _as_int(1.0 / self.p, "1/p") - 1


@dataclass
class SubsetSimResult:
    p_hat: float
    levels: int
    thresholds: list
    failure_samples: np.ndarray
    q: float
    capped: bool
    n_evaluations: int = 0
    level_counts: list = field(default_factory=list)  # N_F_k per level

    @property
    def n_failures(self) -> int:
        return len(self.failure_samples)


def _evaluate(q_fn, X):
    q = np.asarray(q_fn(X), dtype=np.float64)
    bad = ~np.isfinite(q)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError("non-finite performance value", index=i, point=X[i])
    return q


def _mma_chains(seeds, q_seeds, n_steps, q_fn, threshold, box, width_frac, rng):
    """Advance one chain per seed in lockstep.

    Returns states ``(n_chains, n_steps, d)`` and their Q values.
    """
    n, d = seeds.shape
    half_width = width_frac * box.width
    states = np.empty((n, n_steps, d))
    q_states = np.empty((n, n_steps))
    x, qx = seeds.copy(), q_seeds.copy()
    for step in range(n_steps):
        cand = x + rng.uniform(-1.0, 1.0, size=(n, d)) * half_width
        # uniform prior: coordinates leaving the box are rejected individually
        outside = (cand < box.lower) | (cand > box.upper)
        cand[outside] = x[outside]
        q_cand = _evaluate(q_fn, cand)
        accept = q_cand > threshold
        x[accept] = cand[accept]
        qx[accept] = q_cand[accept]
        states[:, step] = x
        q_states[:, step] = qx
    return states, q_states


def mma_chain(seed_point, n_accept: int, q_fn: QFunction, threshold: float, box: Box,
              width_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Componentwise modified Metropolis-Hastings chain for the conditional
    uniform law on ``{Q > threshold}``.

    Every step emits the current state (repeated when the candidate is
    rejected), so exactly ``n_accept`` states are returned.
    """
    seed = np.asarray(seed_point, dtype=np.float64).reshape(1, -1)
    q_seed = _evaluate(q_fn, seed)
    if not q_seed[0] > threshold:
        raise ContractError(f"seed has Q = {q_seed[0]} which does not exceed {threshold}")
    if n_accept == 0:
        return np.empty((0, seed.shape[1]))
    states, _ = _mma_chains(seed, q_seed, n_accept, q_fn, threshold, box, width_frac, rng)
    return states[0]


def mma_chains(seeds, n_steps: int, q_fn: QFunction, threshold: float, box: Box,
               width_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Run one chain per row of ``seeds`` in lockstep.

    Returns the emitted states with shape ``(n_chains, n_steps, d)``.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    q_seeds = _evaluate(q_fn, seeds)
    bad = ~(q_seeds > threshold)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ContractError(f"seed {i} has Q = {q_seeds[i]} which does not exceed {threshold}")
    if n_steps == 0:
        return np.empty((len(seeds), 0, seeds.shape[1]))
    states, _ = _mma_chains(seeds, q_seeds, n_steps, q_fn, threshold, box, width_frac, rng)
    return states


def _sort_desc(X, q):
    order = np.argsort(-q, kind="stable")
    return X[order], q[order]


def subset_simulation(q_fn: QFunction, prior: Box, cfg: SubsetSimConfig,
                      rng: np.random.Generator) -> SubsetSimResult:
    n_s, n_p = cfg.n_s, cfg.n_p
    X = prior.sample(n_s, rng)
    X, q = _sort_desc(X, _evaluate(q_fn, X))
    n_evals = n_s
    n_fail = int(np.count_nonzero(q > cfg.eps_r))
    counts = [n_fail]
    thresholds = []
    level = 0
    while n_fail <= n_p and level < cfg.max_levels:
        threshold = float(q[n_p])  # Q of the (N_p + 1)-th largest sample
        thresholds.append(threshold)
        seeds, q_seeds = X[:n_p], q[:n_p]
        states, q_states = _mma_chains(seeds, q_seeds, cfg.chain_length, q_fn, threshold,
                                       prior, cfg.proposal_width_frac, rng)
        n_evals += states.shape[0] * states.shape[1]
        X = np.concatenate([seeds, states.reshape(-1, prior.dim)])
        q = np.concatenate([q_seeds, q_states.ravel()])
        X, q = _sort_desc(X, q)
        n_fail = int(np.count_nonzero(q > cfg.eps_r))
        counts.append(n_fail)
        level += 1

    capped = n_fail <= n_p and level >= cfg.max_levels
    q_final = n_fail / n_s
    return SubsetSimResult(
        p_hat=cfg.p ** level * q_final,
        levels=level,
        thresholds=thresholds,
        failure_samples=X[:n_fail].copy(),
        q=q_final,
        capped=capped,
        n_evaluations=n_evals,
        level_counts=counts,
    )


def mc_failure_probability(q_fn: QFunction, prior: Box, n: int, eps_r: float,
                           rng: np.random.Generator):
    """Plain Monte Carlo estimate; returns ``(p_hat, failure_samples)``."""
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    X = prior.sample(n, rng)
    q = _evaluate(q_fn, X)
    fail = q > eps_r
    return float(np.count_nonzero(fail)) / n, X[fail]
