import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afipinn.errors import ConfigError, NumericalError
from afipinn.optim import AdamState, LbfgsState, adam_step, lbfgs_step


def adam_reference(g_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written out from the textbook recursion."""
    x, m, v = 0.0, 0.0, 0.0
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_adam_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    out = adam_step(p, np.zeros(2), AdamState(2))
    assert np.array_equal(out, p)


def test_adam_first_step_is_lr_times_sign():
    p = np.zeros(3)
    out = adam_step(p, np.array([0.3, -7.0, 1e-3]), AdamState(3, lr=0.01))
    np.testing.assert_allclose(out, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_two_steps_constant_gradient():
    state = AdamState(1, lr=0.005)
    p = np.zeros(1)
    for _ in range(2):
        p = adam_step(p, np.array([0.5]), state)
    assert p[0] == pytest.approx(-0.010, rel=1e-6)
    assert p[0] == pytest.approx(adam_reference([0.5, 0.5], 0.005), abs=1e-15)
    assert state.step_count == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_adam_matches_reference_recursion(gs):
    state = AdamState(1, lr=0.003)
    p = np.zeros(1)
    for g in gs:
        p = adam_step(p, np.array([g]), state)
    assert p[0] == pytest.approx(adam_reference(gs, 0.003), abs=1e-12)


def test_adam_rejects_bad_input():
    with pytest.raises(NumericalError):
        adam_step(np.zeros(2), np.array([1.0, np.nan]), AdamState(2))
    with pytest.raises(ConfigError):
        adam_step(np.zeros(2), np.zeros(3), AdamState(2))
    with pytest.raises(ConfigError):
        AdamState(2, lr=0.0)


def quadratic(diag):
    A = np.diag(diag)
    return lambda x: (0.5 * x @ A @ x, A @ x)


def test_lbfgs_first_step_is_scaled_gradient_descent():
    # |g|_1 = 2 halves the step
    state = LbfgsState(step_size=0.3)
    x = lbfgs_step(np.array([1.0, 1.0]), quadratic([1.0, 1.0]), state)
    np.testing.assert_allclose(x, [0.85, 0.85])
    assert len(state.history) == 1
    # small gradients are not scaled up
    state = LbfgsState(step_size=0.3)
    x = lbfgs_step(np.array([0.2, 0.1]), quadratic([1.0, 1.0]), state)
    np.testing.assert_allclose(x, [0.14, 0.07])


def test_lbfgs_reset_rescales_next_step():
    state = LbfgsState(step_size=1.0)
    f = quadratic([4.0, 4.0])
    x = lbfgs_step(np.array([1.0, 1.0]), f, state)
    state.reset()
    g = f(x)[1]
    np.testing.assert_allclose(lbfgs_step(x, f, state), x - g / np.abs(g).sum())


def test_lbfgs_converges_on_ill_conditioned_quadratic():
    f = quadratic([1.0, 10.0])
    state = LbfgsState(step_size=1.0)
    x = np.array([1.0, 1.0])
    for _ in range(50):
        x = lbfgs_step(x, f, state)
    assert np.linalg.norm(x) < 1e-8


def test_lbfgs_zero_gradient():
    state = LbfgsState()
    x = lbfgs_step(np.zeros(2), quadratic([1.0, 3.0]), state)
    assert np.array_equal(x, np.zeros(2)) and len(state.history) == 0


def dense_inverse_hessian(history, n):
    """Explicit BFGS inverse-Hessian product over the stored pairs."""
    s, y, _ = history[-1]
    H = (s @ y) / (y @ y) * np.eye(n)
    for s, y, rho in history:
        V = np.eye(n) - rho * np.outer(y, s)
        H = V.T @ H @ V + rho * np.outer(s, s)
    return H


def test_lbfgs_direction_matches_dense_bfgs_update():
    # non-quadratic objective so the pairs carry varying curvature
    def f(x):
        return float(np.sum(np.cosh(x)) + 0.5 * x @ x), np.sinh(x) + x

    state = LbfgsState(history_size=4, step_size=0.3)
    x = np.array([1.0, -0.5, 0.25, 2.0])
    for _ in range(6):
        x = lbfgs_step(x, f, state)
    H = dense_inverse_hessian(list(state.history), 4)
    expected = x - 0.3 * H @ state.grad
    np.testing.assert_allclose(lbfgs_step(x, f, state), expected, rtol=1e-10, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(diag=st.lists(st.floats(0.1, 10.0), min_size=2, max_size=6),
       step=st.sampled_from([0.3, 0.5, 1.0]), seed=st.integers(0, 1000))
def test_lbfgs_reduces_convex_quadratics(diag, step, seed):
    f = quadratic(diag)
    x = np.random.default_rng(seed).normal(size=len(diag))
    state = LbfgsState(step_size=step)
    start = f(x)[0]
    for _ in range(40):
        x = lbfgs_step(x, f, state)
        assert all(s @ y > 0 for s, y, _ in state.history)
    assert state.loss < 1e-3 * start


def test_unit_step_can_increase_loss():
    # without a line search the loss is not monotone on every quadratic
    f = quadratic([3.0, 5.0, 1.0])
    x = np.random.default_rng(6).normal(size=3)
    state = LbfgsState(step_size=1.0)
    losses = []
    for _ in range(8):
        x = lbfgs_step(x, f, state)
        losses.append(state.loss)
    assert losses[4] > losses[3]
    assert losses[7] < 1e-10 * losses[0]


def test_lbfgs_skips_pairs_without_curvature():
    # linear objective: y = 0, so no pair is ever stored
    f = lambda x: (float(x.sum()), np.ones_like(x))  # noqa: E731
    state = LbfgsState()
    x = np.zeros(3)
    for _ in range(3):
        x = lbfgs_step(x, f, state)
    assert len(state.history) == 0
    # every step is a first step: 0.3 / |g|_1 = 0.1 per coordinate
    np.testing.assert_allclose(x, -0.3)


def test_lbfgs_history_is_bounded():
    state = LbfgsState(history_size=3, step_size=0.1)
    f = quadratic([1.0, 2.0, 3.0])
    x = np.ones(3)
    for _ in range(10):
        x = lbfgs_step(x, f, state)
    assert len(state.history) == 3


def test_lbfgs_nonfinite_trial_resets():
    calls = {"n": 0}

    def f(x):
        calls["n"] += 1
        if calls["n"] > 2:
            return float("nan"), x
        return 0.5 * x @ x, x.copy()

    state = LbfgsState()
    x = lbfgs_step(np.ones(2), f, state)
    with pytest.raises(NumericalError):
        lbfgs_step(x, f, state)
    assert len(state.history) == 0 and state.grad is None
