import dataclasses

import numpy as np
import pytest

from afipinn.autodiff import Network, init_network
from afipinn.errors import ConfigError, ContractError
from afipinn.problems import Box, Coefficients, ConstraintGroup, LinearOperator, ProblemSpec, make_problem
from afipinn.trainer import (
    CollocationSets,
    LossEvaluator,
    Method,
    StopReason,
    TrainConfig,
    child_rng,
    compute_loss,
    parse_method,
    relative_l2,
    train,
)

UNIT = Box(np.array([0.0]), np.array([1.0]))


def constant_problem(r_value, b_value, exact=None):
    """1-D problem whose residuals are u + r_value and u + b_value."""
    def coef(value):
        return LinearOperator(0, lambda X: Coefficients(np.ones(len(X)), None, None,
                                                        np.full(len(X), -value)))

    group = ConstraintGroup("ends", lambda n, rng: np.zeros((n, 1)), coef(b_value),
                            lambda X: X[:, 0] == 0)
    exact = exact or (lambda X: np.sin(3 * X[:, 0]) + 0.5)
    return ProblemSpec("const", UNIT, coef(r_value), (group,), exact, None,
                       lambda X: np.zeros(len(X)), lambda: np.linspace(0, 1, 11)[:, None])


ZERO_NET = init_network([1, 1], seed=0, init="zeros")


def test_hand_arithmetic_loss():
    sets = CollocationSets(np.array([[0.5]]), [np.array([[0.0]])])
    total, j_c, j_b = compute_loss(ZERO_NET, constant_problem(2.0, 3.0), sets, 1.0)
    assert (total, j_c, j_b) == (13.0, 4.0, 9.0)


def test_boundary_weight():
    sets = CollocationSets(np.full((4, 1), 0.3), [np.zeros((3, 1))])
    total, j_c, j_b = compute_loss(ZERO_NET, constant_problem(1.0, 2.0), sets, 0.0)
    assert total == j_c == 1.0 and j_b == 4.0
    total, _, _ = compute_loss(ZERO_NET, constant_problem(1.0, 2.0), sets, 0.25)
    assert total == 2.0


def test_groups_are_pooled():
    problem = make_problem("wave1d")
    net = init_network([2, 6, 1], seed=1)
    rng = np.random.default_rng(0)
    groups = [g.sampler(n, rng) for g, n in zip(problem.constraints, (5, 3, 2))]
    sets = CollocationSets(problem.domain.sample(7, rng), groups)
    _, _, j_b = compute_loss(net, problem, sets, 1.0)
    from afipinn.autodiff import evaluate_batch
    squares = [g.operator(X, evaluate_batch(net, X, g.operator.order)) ** 2
               for g, X in zip(problem.constraints, groups)]
    assert j_b == pytest.approx(np.concatenate(squares).mean(), rel=1e-13)


def test_exact_solution_has_zero_loss_terms():
    problem = make_problem("multipeak2")
    rng = np.random.default_rng(0)
    X = problem.domain.sample(1000, rng)
    (B,) = [g.sampler(800, rng) for g in problem.constraints]
    j_c = np.mean(problem.interior(X, problem.exact_bundle(X)) ** 2)
    j_b = np.mean(problem.constraints[0].operator(B, problem.exact_bundle(B)) ** 2)
    assert j_c < 1e-10 and j_b < 1e-10


def test_loss_gradient_matches_finite_differences():
    problem = make_problem("multipeak2")
    net = init_network([2, 8, 8, 1], seed=3)
    rng = np.random.default_rng(1)
    sets = CollocationSets(problem.domain.sample(30, rng),
                           [problem.constraints[0].sampler(20, rng)])
    evaluator = LossEvaluator(problem, sets, 0.7)
    _, _, _, grad = evaluator(net)
    base = net.params.copy()
    h = 1e-6
    for i in np.random.default_rng(2).choice(net.n_params, 15, replace=False):
        vals = []
        for sign in (1, -1):
            p = base.copy()
            p[i] += sign * h
            vals.append(evaluator(Network(net.layer_widths, p), with_grad=False)[0])
        fd = (vals[0] - vals[1]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-6 * np.abs(grad).max())


def test_empty_sets_rejected():
    with pytest.raises(ContractError):
        compute_loss(ZERO_NET, constant_problem(1, 1), CollocationSets(np.zeros((0, 1)),
                                                                     [np.zeros((1, 1))]), 1.0)


def test_relative_l2_cases():
    net = init_network([1, 5, 1], seed=4)
    X = np.linspace(0, 1, 50)[:, None]
    exact = net(X)
    problem = constant_problem(0, 0, exact=lambda Y: net(Y))
    assert relative_l2(net, problem, X) == 0.0
    assert relative_l2(ZERO_NET, problem, X) == 1.0
    assert relative_l2(net, problem, X, exact=exact / 1.1) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ContractError):
        relative_l2(net, problem, X, exact=np.zeros(50))
    with pytest.raises(ContractError):
        relative_l2(net, problem, np.zeros((0, 1)))


def test_child_rng_is_deterministic_and_label_sensitive():
    a = child_rng(3, "restart", 1).random(4)
    assert np.array_equal(a, child_rng(3, "restart", 1).random(4))
    assert not np.array_equal(a, child_rng(3, "restart", 2).random(4))
    assert not np.array_equal(a, child_rng(4, "restart", 1).random(4))


@pytest.mark.parametrize("text,expected", [("RFiPinn", Method.R_FIPINN), ("mc-fipinn", Method.MC_FIPINN),
                                           ("Vanilla", Method.VANILLA), ("g_fipinn", Method.G_FIPINN)])
def test_method_spellings(text, expected):
    assert parse_method(text) is expected


@pytest.mark.parametrize("changes", [dict(eps_r=0.0), dict(eps_p=-1.0), dict(n_c=0),
                                     dict(lambda_b=-1.0), dict(optimizer="sgd"),
                                     dict(method="fipinn"), dict(anneal_a=0.7),
                                     dict(ss_p=0.3), dict(restart_min_gap=10)])
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes)


def test_subset_sample_budget():
    cfg = TrainConfig(n_c=1000, ss_p=0.1)
    assert cfg.ss_samples(0.5) == 500
    assert cfg.ss_samples(0.0137) == 20
    assert cfg.ss_samples(0.0) == 10
    assert cfg.ss_samples(1.0) == 1000


def small_config(**changes):
    base = dict(problem="multipeak2", n_c=200, n_b=80, t_max=300, hidden_layers=2,
                hidden_width=12, restart_window=20, restart_min_gap=40, restart_delta=0.5,
                norm_samples=500, snapshot_period=25, lr=3e-3)
    base.update(changes)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def multipeak():
    return make_problem("multipeak2")


def test_vanilla_never_restarts(multipeak):
    net, report = train(multipeak, small_config(method="vanilla"))
    assert report.events == []
    assert report.stop_reason is StopReason.MAX_EPOCHS
    assert report.epochs == 301
    assert report.snapshots[-1][0] == 300
    assert report.final_rel_l2 == relative_l2(net, multipeak, multipeak.test_points())
    assert all(v >= 0 for v in report.loss_total)
    assert report.loss_total[-1] < report.loss_total[0]


def test_early_stop_with_loose_tolerance(multipeak):
    _, report = train(multipeak, small_config(method="r_fipinn", eps_p=1.0))
    assert report.stop_reason is StopReason.EARLY_STOP
    assert len(report.events) == 1 and report.events[0]["kind"] == "early_stop"
    assert report.events[0]["p_hat"] < 1.0
    ev = report.events[0]
    assert ev["eta"] == pytest.approx(0.5 * (1 + np.cos(np.pi * ev["epoch"] / 300)))
    assert report.norm_state > 0


def test_mc_fipinn_restarts_without_stopping(multipeak):
    _, report = train(multipeak, small_config(method="mc_fipinn", eps_p=1.0))
    assert report.stop_reason is StopReason.MAX_EPOCHS
    assert len(report.restart_events) >= 2
    epochs = [e["epoch"] for e in report.events]
    assert epochs == sorted(set(epochs))
    for e in report.events:
        assert 0.0 <= e["eta"] <= 1.0
        assert e["n_kept"] + e["n_adaptive"] + e["n_prior"] == 200
    assert len(report.final_interior) == 200


@pytest.mark.parametrize("method", ["r_fipinn", "g_fipinn"])
def test_failure_informed_run_is_reproducible(multipeak, method):
    cfg = small_config(method=method, eps_p=1e-6)
    _, a = train(multipeak, cfg)
    _, b = train(multipeak, cfg)
    assert a.loss_total == b.loss_total and a.snapshots == b.snapshots
    assert a.events == b.events
    assert np.array_equal(a.final_interior, b.final_interior)
    assert len(a.restart_events) >= 1
    first = a.restart_events[0]
    assert first["n_s"] % 10 == 0 and first["levels"] >= 0


def test_early_stop_is_sound(multipeak):
    _, report = train(multipeak, small_config(method="r_fipinn", eps_p=0.3, t_max=600))
    if report.stop_reason is StopReason.EARLY_STOP:
        assert report.events[-1]["p_hat"] < 0.3
    else:
        assert all(e["p_hat"] >= 0.3 for e in report.events)


def test_lbfgs_training_reduces_loss(multipeak):
    _, report = train(multipeak, small_config(method="vanilla", optimizer="lbfgs", lr=0.3,
                                              t_max=100))
    assert report.stop_reason is StopReason.MAX_EPOCHS
    assert report.loss_total[-1] < 0.5 * report.loss_total[0]


def test_lbfgs_with_restarts(multipeak):
    _, report = train(multipeak, small_config(method="r_fipinn", optimizer="lbfgs", lr=0.3,
                                              t_max=150, eps_p=1e-9))
    assert report.stop_reason is StopReason.MAX_EPOCHS
    assert len(report.restart_events) >= 1


def test_numerical_failure_gives_partial_report():
    good = constant_problem(1.0, 1.0)

    def bad_coef(X):
        rhs = np.zeros(len(X))
        rhs[1] = np.nan
        return Coefficients(np.ones(len(X)), None, None, rhs)

    problem = dataclasses.replace(good, interior=LinearOperator(0, bad_coef))
    cfg = TrainConfig(method="vanilla", n_c=5, n_b=2, t_max=10, hidden_layers=1, hidden_width=3)
    _, report = train(problem, cfg)
    assert report.stop_reason is StopReason.NUMERICAL_ERROR
    assert "index 1" in report.error_message
    assert report.final_interior.shape == (5, 1)
