"""Training loop for vanilla PINNs and the failure-informed variants.

Methods
-------
vanilla    plain full-batch training on a fixed uniform collocation set
mc_fipinn  restarts with plain Monte Carlo failure sampling, never stops early
r_fipinn   restarts with subset simulation on the residual, early stop on P_F
g_fipinn   as r_fipinn with the residual-gradient performance function
"""

import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Optional

import numpy as np

from .anneal import AnnealParams, AnnealState, RestartPolicy, proportion, recompose, should_restart
from .autodiff import Network, Workspace, backward, bundle_to_cotangent, forward, init_network
from .errors import ConfigError, ContractError, NumericalError
from .optim import AdamState, LbfgsState, adam_step, lbfgs_step
from .performance import PerformanceFn, PerformanceKind, estimate_norm
from .problems import ProblemSpec, make_problem, sample_constraints, sample_interior
from .subsim import SubsetSimConfig, mc_failure_probability, subset_simulation

log = logging.getLogger(__name__)


class Method(str, Enum):
    VANILLA = "vanilla"
    MC_FIPINN = "mc_fipinn"
    R_FIPINN = "r_fipinn"
    G_FIPINN = "g_fipinn"


class StopReason(str, Enum):
    MAX_EPOCHS = "max_epochs"
    EARLY_STOP = "early_stop_failure_prob"
    NUMERICAL_ERROR = "numerical_error"


def parse_method(value) -> Method:
    """Accepts ``r_fipinn``, ``RFiPinn``, ``r-fipinn`` and similar spellings."""
    if isinstance(value, Method):
        return value
    key = str(value).replace("_", "").replace("-", "").lower()
    for m in Method:
        if m.value.replace("_", "") == key:
            return m
    raise ConfigError(f"unknown method {value!r}; choose from {[m.value for m in Method]}")


def child_rng(seed: int, *labels) -> np.random.Generator:
    """Generator derived deterministically from a master seed and labels."""
    key = [int(seed)] + [zlib.crc32(str(label).encode()) for label in labels]
    return np.random.default_rng(np.random.SeedSequence(key))


@dataclass
class TrainConfig:
    """Flat run configuration; attribute ``anneal_a`` is config key ``anneal.a``."""

    method: Method = Method.R_FIPINN
    problem: str = "multipeak2"
    n_c: int = 1000
    n_b: int = 800
    lambda_b: float = 1.0
    eps_r: float = 0.1
    eps_p: float = 0.01
    t_max: int = 20_000
    optimizer: str = "adam"
    lr: float = 1e-3
    history: int = 50
    reset_optimizer: bool = False
    hidden_layers: int = 5
    hidden_width: int = 64
    anneal_a: float = 0.5
    anneal_b: float = 1.0
    restart_window: int = 500
    restart_delta: float = 1e-3
    restart_min_gap: int = 1000
    ss_p: float = 0.1
    ss_width_frac: float = 0.01
    ss_max_levels: int = 20
    norm_samples: int = 10_000
    seed: int = 0
    snapshot_period: int = 10

    def __post_init__(self):
        self.method = parse_method(self.method)
        if self.eps_r <= 0 or self.eps_p <= 0:
            raise ConfigError("eps_r and eps_p must be positive")
        if self.n_c < 1 or self.n_b < 1:
            raise ConfigError("n_c and n_b must be at least 1")
        if self.lambda_b < 0:
            raise ConfigError("lambda_b must be non-negative")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ConfigError(f"optimizer must be 'adam' or 'lbfgs', got {self.optimizer!r}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigError("network needs at least one hidden layer of positive width")
        if self.snapshot_period < 1:
            raise ConfigError("snapshot_period must be at least 1")
        # constructing these validates them
        self.anneal_params
        self.restart_policy
        SubsetSimConfig(n_s=self.ss_block, p=self.ss_p, eps_r=self.eps_r,
                        proposal_width_frac=self.ss_width_frac, max_levels=self.ss_max_levels)

    @property
    def anneal_params(self) -> AnnealParams:
        return AnnealParams(self.anneal_a, self.anneal_b, self.t_max)

    @property
    def restart_policy(self) -> RestartPolicy:
        return RestartPolicy(self.restart_window, self.restart_delta, self.restart_min_gap)

    @property
    def ss_block(self) -> int:
        """Smallest admissible subset-simulation sample count (``1/p``)."""
        return max(1, round(1.0 / self.ss_p))

    def ss_samples(self, eta: float) -> int:
        """``ceil(eta * n_c)`` rounded up to a multiple of ``1/p`` (at least ``1/p``)."""
        block = self.ss_block
        n = max(math.ceil(eta * self.n_c - 1e-9), 1)
        return block * math.ceil(n / block)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else v
        return out


@dataclass
class CollocationSets:
    interior: np.ndarray
    constraints: list  # one point array per constraint group

    @property
    def n_b(self) -> int:
        return sum(len(c) for c in self.constraints)


@dataclass
class TrainReport:
    loss_total: list = field(default_factory=list)
    loss_pde: list = field(default_factory=list)
    loss_bnd: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (epoch, rel_l2)
    events: list = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    error_message: str = ""
    final_interior: Optional[np.ndarray] = None
    norm_state: Optional[float] = None
    wall_time: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.loss_total)

    @property
    def final_rel_l2(self) -> float:
        return self.snapshots[-1][1] if self.snapshots else float("nan")

    @property
    def restart_events(self) -> list:
        return [e for e in self.events if e["kind"] == "restart"]

    @property
    def failure_probabilities(self) -> list:
        return [e["p_hat"] for e in self.events]


class LossEvaluator:
    """Discrete PINN loss and its parameter gradient on fixed point sets.

    Operator coefficients are evaluated once per point set; call
    :meth:`set_interior` after the interior set changes.
    """

    def __init__(self, problem: ProblemSpec, sets: CollocationSets, lambda_b: float):
        if len(sets.interior) == 0 or sets.n_b == 0:
            raise ContractError("collocation sets must be non-empty")
        self.problem = problem
        self.lambda_b = lambda_b
        self.sets = sets
        self._groups = []
        for group, X in zip(problem.constraints, sets.constraints):
            if len(X):
                self._groups.append((X, group.operator.order,
                                     group.operator.coefficients(X), Workspace()))
        self._interior_ws = Workspace()
        self.set_interior(sets.interior)

    def set_interior(self, X: np.ndarray) -> None:
        self.sets.interior = X
        self._interior_coef = self.problem.interior.coefficients(X)

    def _term(self, net, X, order, coef, ws, weight, with_grad, what):
        tape = forward(net, X, order, ws)
        r = coef.residual(tape.bundle())
        sq = r * r
        value = float(np.sum(sq))
        if not math.isfinite(value):
            i = int(np.flatnonzero(~np.isfinite(sq))[0])
            raise NumericalError(f"non-finite {what} term", index=i, point=X[i])
        grad = None
        if with_grad:
            cot = coef.pullback(2.0 * weight * r)
            grad = backward(net, tape, bundle_to_cotangent(cot, len(X), X.shape[1], order))
        return value, grad

    def __call__(self, net: Network, with_grad: bool = True):
        """Returns ``(total, j_c, j_b, grad)``; ``grad`` is None without ``with_grad``."""
        X = self.sets.interior
        n_c, n_b = len(X), self.sets.n_b
        s_c, grad = self._term(net, X, self.problem.interior.order, self._interior_coef,
                               self._interior_ws, 1.0 / n_c, with_grad, "interior")
        j_c = s_c / n_c
        s_b = 0.0
        for Xb, order, coef, ws in self._groups:
            v, g = self._term(net, Xb, order, coef, ws, self.lambda_b / n_b, with_grad,
                              "constraint")
            s_b += v
            if with_grad:
                grad += g
        j_b = s_b / n_b
        return j_c + self.lambda_b * j_b, j_c, j_b, grad


def compute_loss(net: Network, problem: ProblemSpec, sets: CollocationSets, lambda_b: float):
    """``(total, j_c, j_b)`` with ``total = j_c + lambda_b * j_b``."""
    total, j_c, j_b, _ = LossEvaluator(problem, sets, lambda_b)(net, with_grad=False)
    return total, j_c, j_b


def relative_l2(net: Network, problem: ProblemSpec, test_points: np.ndarray,
                exact: Optional[np.ndarray] = None, workspace: Optional[Workspace] = None) -> float:
    if len(test_points) == 0:
        raise ContractError("empty test set")
    u = problem.exact(test_points) if exact is None else exact
    denom = float(np.sqrt(np.sum(u * u)))
    if denom == 0.0:
        raise ContractError("exact solution vanishes on the test set")
    u_hat = forward(net, test_points, 0, workspace).out[0]
    return float(np.sqrt(np.sum((u - u_hat) ** 2))) / denom


def network_widths(problem: ProblemSpec, config: TrainConfig) -> list:
    return [problem.dim] + [config.hidden_width] * config.hidden_layers + [1]


class Trainer:
    def __init__(self, problem: ProblemSpec, config: TrainConfig):
        self.problem = problem
        self.config = config
        seed = config.seed
        self.net = init_network(network_widths(problem, config), seed=int(
            child_rng(seed, "init").integers(2**63)))
        interior = sample_interior(problem, config.n_c, child_rng(seed, "interior"))
        constraints = sample_constraints(problem, config.n_b, child_rng(seed, "constraints"))
        self.sets = CollocationSets(interior, constraints)
        self.loss = LossEvaluator(problem, self.sets, config.lambda_b)
        self.test_points = problem.test_points()
        self.test_exact = problem.exact(self.test_points)
        self._test_ws = Workspace()
        self.anneal = AnnealState()
        kind = (PerformanceKind.RESIDUAL_GRADIENT if config.method is Method.G_FIPINN
                else PerformanceKind.RESIDUAL)
        self.performance = PerformanceFn.for_network(kind, self.net, problem)
        if config.optimizer == "adam":
            self.opt_state = AdamState(self.net.n_params, lr=config.lr)
        else:
            self.opt_state = LbfgsState(history_size=config.history, step_size=config.lr)
        self._last_terms = None

    def rel_l2(self) -> float:
        return relative_l2(self.net, self.problem, self.test_points, self.test_exact,
                           self._test_ws)

    def _oracle(self, params):
        self.net.set_params(params)
        total, j_c, j_b, grad = self.loss(self.net)
        self._last_terms = (total, j_c, j_b)
        return total, grad

    def _step(self):
        """Optimizer step; returns the loss terms at the pre-step parameters."""
        net = self.net
        if self.config.optimizer == "adam":
            total, j_c, j_b, grad = self.loss(net)
            net.set_params(adam_step(net.params, grad, self.opt_state))
            return total, j_c, j_b
        state = self.opt_state
        start = net.params.copy()
        if state.grad is None:
            self._oracle(start)
        terms = self._last_terms
        new = lbfgs_step(start, self._oracle, state)
        net.set_params(new)
        return terms

    def _restart(self, epoch: int, report: TrainReport) -> bool:
        """Handle a restart at ``epoch``; returns True when training should stop."""
        cfg = self.config
        k = self.anneal.restart_count
        rng = child_rng(cfg.seed, "restart", k)
        eta = proportion(epoch, self.anneal.t_s, cfg.anneal_params)
        if self.performance.norm_state is None:
            norm = estimate_norm(self.performance.residual, self.problem.domain,
                                 cfg.norm_samples, child_rng(cfg.seed, "norm"))
            self.performance.set_norm(norm)
            report.norm_state = norm
        n_s = cfg.ss_samples(eta)
        event = {"kind": "restart", "epoch": epoch, "restart": k + 1, "eta": eta, "n_s": n_s}
        if cfg.method is Method.MC_FIPINN:
            p_hat, failures = mc_failure_probability(self.performance, self.problem.domain, n_s,
                                                     cfg.eps_r, rng)
            event.update(levels=0, n_evaluations=n_s, capped=False)
        else:
            ss_cfg = SubsetSimConfig(n_s=n_s, p=cfg.ss_p, eps_r=cfg.eps_r,
                                     proposal_width_frac=cfg.ss_width_frac,
                                     max_levels=cfg.ss_max_levels)
            res = subset_simulation(self.performance, self.problem.domain, ss_cfg, rng)
            p_hat, failures = res.p_hat, res.failure_samples
            event.update(levels=res.levels, n_evaluations=res.n_evaluations, capped=res.capped)
        event.update(p_hat=p_hat, n_failures=len(failures))
        stop = cfg.method in (Method.R_FIPINN, Method.G_FIPINN) and p_hat < cfg.eps_p
        if stop:
            event.update(kind="early_stop", n_kept=len(self.sets.interior), n_adaptive=0,
                         n_prior=0)
        else:
            rec = recompose(self.sets.interior, failures, eta, self.problem.domain, rng)
            self.loss.set_interior(rec.points)
            if isinstance(self.opt_state, LbfgsState) or cfg.reset_optimizer:
                self.opt_state.reset()
            event.update(n_kept=rec.n_kept, n_adaptive=rec.n_adaptive, n_prior=rec.n_prior)
        self.anneal.record(epoch, eta, p_hat)
        report.events.append(event)
        log.info("epoch %d: %s eta=%.3f p_hat=%.3g N_F=%d", epoch, event["kind"], eta, p_hat,
                 len(failures))
        return stop

    def run(self, progress_every: int = 0) -> TrainReport:
        cfg = self.config
        report = TrainReport()
        t0 = time.perf_counter()
        adaptive = cfg.method is not Method.VANILLA
        policy = cfg.restart_policy
        try:
            for epoch in range(cfg.t_max):
                if epoch % cfg.snapshot_period == 0:
                    report.snapshots.append((epoch, self.rel_l2()))
                total, j_c, j_b = self._step()
                report.loss_total.append(total)
                report.loss_pde.append(j_c)
                report.loss_bnd.append(j_b)
                if progress_every and epoch % progress_every == 0:
                    log.info("epoch %d loss %.4e rel_l2 %.4e", epoch, total,
                             report.snapshots[-1][1])
                if adaptive and should_restart(report.loss_total, epoch, self.anneal.t_s, policy):
                    if self._restart(epoch, report):
                        report.stop_reason = StopReason.EARLY_STOP
                        break
            else:
                report.stop_reason = StopReason.MAX_EPOCHS
            # final row: state after the last optimizer step
            total, j_c, j_b, _ = self.loss(self.net, with_grad=False)
            report.loss_total.append(total)
            report.loss_pde.append(j_c)
            report.loss_bnd.append(j_b)
            report.snapshots.append((report.epochs - 1, self.rel_l2()))
        except NumericalError as exc:
            report.stop_reason = StopReason.NUMERICAL_ERROR
            report.error_message = str(exc)
            log.error("numerical failure: %s", exc)
        report.final_interior = self.sets.interior.copy()
        report.wall_time = time.perf_counter() - t0
        return report


def train(problem: ProblemSpec, config: TrainConfig, progress_every: int = 0):
    """Run one training job; returns ``(network, report)``."""
    trainer = Trainer(problem, config)
    report = trainer.run(progress_every)
    return trainer.net, report


def train_from_config(config: TrainConfig, progress_every: int = 0):
    return train(make_problem(config.problem), config, progress_every)
