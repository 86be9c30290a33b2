import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afipinn.anneal import (
    AnnealParams,
    AnnealState,
    RestartPolicy,
    proportion,
    recompose,
    should_restart,
)
from afipinn.errors import ConfigError, ContractError
from afipinn.problems import Box

SQUARE = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
PARAMS = AnnealParams(0.5, 1.0, 20_000)


def test_proportion_endpoints():
    assert proportion(3000, 3000, PARAMS) == pytest.approx(1.0)
    assert proportion(11_500, 3000, PARAMS) == pytest.approx(0.5)
    assert proportion(19_999, 0, PARAMS) == pytest.approx(0.0, abs=1e-7)


def test_proportion_requires_epoch_before_t_max():
    with pytest.raises(ContractError):
        proportion(20_000, 0, PARAMS)
    with pytest.raises(ContractError):
        proportion(100, 200, PARAMS)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.01, 0.5), frac=st.floats(0.0, 1.0), t_s=st.integers(0, 9000),
       dt=st.integers(0, 10_999))
def test_proportion_within_bounds(a, frac, t_s, dt):
    params = AnnealParams(a, frac, 20_000) if frac > 0 else AnnealParams(a, 1e-9, 20_000)
    eta = proportion(t_s + dt, t_s, params)
    assert params.lower - 1e-12 <= eta <= params.upper + 1e-12


@pytest.mark.parametrize("a,b", [(0.6, 1.0), (0.5, 1.5), (0.0, 1.0), (0.5, 0.0)])
def test_invalid_anneal_params(a, b):
    with pytest.raises(ConfigError):
        AnnealParams(a, b, 100)


def test_restart_policy_validation():
    with pytest.raises(ConfigError):
        RestartPolicy(window=500, rel_improvement=1e-3, min_gap=100)
    with pytest.raises(ConfigError):
        RestartPolicy(window=0)


def test_no_restart_on_geometric_decrease():
    losses = list(0.9 ** np.arange(3000))
    policy = RestartPolicy(window=50, rel_improvement=1e-3, min_gap=100)
    assert not any(should_restart(losses, e, 0, policy) for e in range(len(losses)))


def test_restart_on_plateau():
    losses = [1.0] * 1200
    assert should_restart(losses, 1100, 0, RestartPolicy())


def test_gap_guard():
    losses = [1.0] * 5000
    policy = RestartPolicy()
    assert not should_restart(losses, 3999, 3000, policy)
    assert should_restart(losses, 4000, 3000, policy)


def test_slow_decrease_counts_as_plateau():
    # a 1e-4 relative drop over a window is below the 1e-3 threshold
    losses = list(1.0 - 1e-7 * np.arange(2000))
    assert should_restart(losses, 1500, 0, RestartPolicy())


def test_anneal_state_records():
    state = AnnealState()
    state.record(1200, 0.9, 0.3)
    state.record(2500, 0.7, 0.1)
    assert (state.t_s, state.restart_count) == (2500, 2)
    with pytest.raises(ContractError):
        state.record(2000, 0.5, 0.1)


def interior(n, seed=0):
    return SQUARE.sample(n, np.random.default_rng(seed))


def test_recompose_with_few_failures():
    old, fail = interior(1000), interior(200, seed=1)
    rec = recompose(old, fail, 0.5, SQUARE, np.random.default_rng(2))
    assert (rec.n_kept, rec.n_adaptive, rec.n_prior) == (500, 200, 300)
    assert len(rec.points) == 1000


def test_recompose_with_many_failures():
    old, fail = interior(1000), interior(800, seed=1)
    rec = recompose(old, fail, 0.5, SQUARE, np.random.default_rng(2))
    assert (rec.n_kept, rec.n_adaptive, rec.n_prior) == (500, 500, 0)


def test_recompose_eta_zero_keeps_everything():
    old = interior(100)
    rec = recompose(old, interior(30, seed=1), 0.0, SQUARE, np.random.default_rng(0))
    assert np.array_equal(rec.points, old)


def test_recompose_rejects_bad_eta():
    with pytest.raises(ContractError):
        recompose(interior(10), interior(3), 1.5, SQUARE, np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(n_c=st.integers(1, 400), eta=st.floats(0.0, 1.0), n_f=st.integers(0, 600),
       seed=st.integers(0, 1000))
def test_recompose_size_and_provenance(n_c, eta, n_f, seed):
    old, fail = interior(n_c, seed), interior(n_f, seed + 1)
    rec = recompose(old, fail, eta, SQUARE, np.random.default_rng(seed))
    n_new = math.floor(eta * n_c)
    assert len(rec.points) == n_c
    assert rec.n_kept == n_c - n_new
    assert rec.n_adaptive == min(n_f, n_new)
    assert rec.n_prior == n_new - rec.n_adaptive
    assert len(set(rec.kept_index)) == rec.n_kept
    np.testing.assert_array_equal(rec.points[:rec.n_kept], old[rec.kept_index])
    np.testing.assert_array_equal(rec.points[rec.n_kept:rec.n_kept + rec.n_adaptive],
                                  fail[rec.adaptive_index])
    assert np.all(SQUARE.contains(rec.points))
