"""Closed-form performance functions on ``[-1, 1]^d`` with known failure
probabilities, for checking the estimators."""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .problems import Box


def symmetric_box(dim: int) -> Box:
    if dim < 1:
        raise ConfigError(f"dimension must be at least 1, got {dim}")
    return Box(-np.ones(dim), np.ones(dim))


def _linear(X):
    return X[:, 0]


def _max_norm(X):
    return np.max(np.abs(X), axis=1)


def _sphere(X):
    return np.linalg.norm(X, axis=1)


def _linear_truth(eps, d):
    return min(max((1.0 - eps) / 2.0, 0.0), 1.0)


def _max_norm_truth(eps, d):
    if eps < 0:
        return 1.0
    return max(1.0 - eps ** d, 0.0)


def _sphere_truth(eps, d):
    if eps > 1.0:
        raise ConfigError("sphere-exterior truth is only closed-form for eps_r <= 1")
    if eps < 0:
        return 1.0
    ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * eps ** d
    return 1.0 - ball / 2.0 ** d


@dataclass(frozen=True)
class AnalyticCase:
    name: str
    q: Callable[[np.ndarray], np.ndarray]
    truth: Callable[[float, int], float]

    def failure_probability(self, eps_r: float, dim: int) -> float:
        return self.truth(eps_r, dim)


ANALYTIC_CASES = {
    "linear": AnalyticCase("linear", _linear, _linear_truth),
    "max-norm": AnalyticCase("max-norm", _max_norm, _max_norm_truth),
    "sphere-exterior": AnalyticCase("sphere-exterior", _sphere, _sphere_truth),
}


def analytic_case(name: str) -> AnalyticCase:
    try:
        return ANALYTIC_CASES[name]
    except KeyError:
        raise ConfigError(
            f"unknown performance function {name!r}; choose from {sorted(ANALYTIC_CASES)}"
        ) from None
