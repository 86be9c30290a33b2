"""Benchmark PDE problems.

Every operator used by the benchmarks is linear in the network output and its
first/second input derivatives, so a residual is represented by coefficient
arrays evaluated at the collocation points:

    r(x) = c0(x) u + sum_i c1_i(x) du/dx_i + sum_i c2_i(x) d2u/dx_i2 - rhs(x)

Coefficients depend only on the points, which lets the trainer evaluate them
once per dataset instead of once per epoch.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import BatchBundle
from .errors import ConfigError

PROBLEM_NAMES = ("multipeak2", "multipeak4", "wave1d", "poisson10d")


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ConfigError(f"invalid box bounds {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.width))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + self.width * rng.random((n, self.dim))

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)


@dataclass(frozen=True)
class Coefficients:
    c0: Optional[np.ndarray]
    c1: Optional[np.ndarray]
    c2: Optional[np.ndarray]
    rhs: np.ndarray

    def residual(self, b: BatchBundle) -> np.ndarray:
        r = -self.rhs
        if self.c0 is not None:
            r = r + self.c0 * b.value
        if self.c1 is not None:
            r = r + np.einsum("nd,nd->n", self.c1, b.grad)
        if self.c2 is not None:
            r = r + np.einsum("nd,nd->n", self.c2, b.hess_diag)
        return r

    def pullback(self, w: np.ndarray) -> BatchBundle:
        """Cotangent bundle of ``sum(w * r)`` with respect to (u, du, d2u)."""
        n = w.shape[0]
        return BatchBundle(
            w * self.c0 if self.c0 is not None else np.zeros(n),
            w[:, None] * self.c1 if self.c1 is not None else None,
            w[:, None] * self.c2 if self.c2 is not None else None,
        )


@dataclass(frozen=True)
class LinearOperator:
    """Residual operator; ``order`` is the highest input derivative it uses."""

    order: int
    coefficients: Callable[[np.ndarray], Coefficients]

    def __call__(self, X: np.ndarray, b: BatchBundle) -> np.ndarray:
        return self.coefficients(X).residual(b)


@dataclass(frozen=True)
class ConstraintGroup:
    label: str
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    operator: LinearOperator
    on_manifold: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: Box
    interior: LinearOperator
    constraints: tuple
    exact: Callable[[np.ndarray], np.ndarray]
    exact_bundle: Callable[[np.ndarray], BatchBundle]
    forcing: Callable[[np.ndarray], np.ndarray]
    test_points: Callable[[], np.ndarray] = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.domain.dim


def sample_interior(problem: ProblemSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. uniform points in the domain box (the prior)."""
    if n < 1:
        raise ConfigError(f"need at least one interior point, got {n}")
    return problem.domain.sample(n, rng)


def sample_constraints(problem: ProblemSpec, n_total: int, rng: np.random.Generator) -> list:
    """Split ``n_total`` points evenly over the constraint groups.

    The remainder goes to the earlier groups.
    """
    k = len(problem.constraints)
    if n_total < k:
        raise ConfigError(f"need at least {k} constraint points, got {n_total}")
    base, extra = divmod(n_total, k)
    return [g.sampler(base + (i < extra), rng) for i, g in enumerate(problem.constraints)]


def _face_sampler(box: Box):
    """Pick a face of the box uniformly, then a uniform point on it."""

    def sample(n, rng):
        X = box.sample(n, rng)
        face = rng.integers(0, 2 * box.dim, size=n)
        axis, side = face // 2, face % 2
        rows = np.arange(n)
        X[rows, axis] = np.where(side == 0, box.lower[axis], box.upper[axis])
        return X

    return sample


def _on_box_boundary(box: Box):
    def check(X, tol=1e-12):
        on_face = (np.abs(X - box.lower) <= tol) | (np.abs(X - box.upper) <= tol)
        return box.contains(X) & on_face.any(axis=1)

    return check


def _dirichlet(exact_fn):
    """Operator u - g with g from ``exact_fn``."""
    return LinearOperator(0, lambda X: Coefficients(np.ones(len(X)), None, None, exact_fn(X)))


def _grid(box: Box, n: int = 256) -> np.ndarray:
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# -- multi-peak problem ---------------------------------------------------------

PEAK_SHARPNESS = 1000.0


def _multipeak(name, centers):
    centers = np.asarray(centers, dtype=np.float64)
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    k = PEAK_SHARPNESS

    def exact_bundle(X):
        u = np.zeros(len(X))
        du = np.zeros_like(X)
        d2u = np.zeros_like(X)
        for c in centers:
            diff = X - c
            e = np.exp(-k * np.sum(diff * diff, axis=1))
            u += e
            du += -2.0 * k * diff * e[:, None]
            d2u += (-2.0 * k + 4.0 * k * k * diff * diff) * e[:, None]
        return BatchBundle(u, du, d2u)

    def exact(X):
        return exact_bundle(X).value

    def apply_operator(X, b):
        # -div(u grad(x^2 + y^2)) + lap(u)
        return (-4.0 * b.value - 2.0 * np.einsum("nd,nd->n", X, b.grad)
                + b.hess_diag.sum(axis=1))

    def forcing(X):
        return apply_operator(X, exact_bundle(X))

    def coefficients(X):
        n = len(X)
        return Coefficients(np.full(n, -4.0), -2.0 * X, np.ones((n, 2)), forcing(X))

    boundary = ConstraintGroup("boundary", _face_sampler(box), _dirichlet(exact),
                               _on_box_boundary(box))
    return ProblemSpec(name, box, LinearOperator(2, coefficients), (boundary,),
                       exact, exact_bundle, forcing, lambda: _grid(box))


# -- wave equation ----------------------------------------------------------------

WAVE_SPEED_SQ = 3.0


def _sech(z):
    return 1.0 / np.cosh(z)


def _wave1d():
    box = Box(np.array([0.0, -5.0]), np.array([6.0, 5.0]))
    c = np.sqrt(WAVE_SPEED_SQ)
    # u = sum_j amp_j * sech(2 (x + shift_j + vel_j * t))
    humps = [(0.5, 0.0, -c), (-0.5, -10.0, c), (0.5, 0.0, c), (-0.5, 10.0, -c)]

    def exact_bundle(X):
        t, x = X[:, 0], X[:, 1]
        u = np.zeros(len(X))
        du = np.zeros_like(X)
        d2u = np.zeros_like(X)
        for amp, shift, vel in humps:
            z = 2.0 * (x + shift + vel * t)
            s = _sech(z)
            th = np.tanh(z)
            f1 = -s * th                     # d sech / dz
            f2 = s * (th * th - s * s)       # d2 sech / dz2
            u += amp * s
            du[:, 0] += amp * f1 * 2.0 * vel
            du[:, 1] += amp * f1 * 2.0
            d2u[:, 0] += amp * f2 * 4.0 * vel * vel
            d2u[:, 1] += amp * f2 * 4.0
        return BatchBundle(u, du, d2u)

    def exact(X):
        return exact_bundle(X).value

    def initial_value(x):
        return _sech(2 * x) - 0.5 * _sech(2 * (x - 10)) - 0.5 * _sech(2 * (x + 10))

    def interior(X):
        n = len(X)
        c2 = np.empty((n, 2))
        c2[:, 0] = 1.0
        c2[:, 1] = -WAVE_SPEED_SQ
        return Coefficients(None, None, c2, np.zeros(n))

    def sample_initial(n, rng):
        X = np.zeros((n, 2))
        X[:, 1] = rng.uniform(box.lower[1], box.upper[1], n)
        return X

    def sample_lateral(n, rng):
        X = np.empty((n, 2))
        X[:, 0] = rng.uniform(box.lower[0], box.upper[0], n)
        X[:, 1] = np.where(rng.integers(0, 2, n) == 0, box.lower[1], box.upper[1])
        return X

    def velocity(X):
        n = len(X)
        c1 = np.zeros((n, 2))
        c1[:, 0] = 1.0
        return Coefficients(None, c1, None, np.zeros(n))

    def lateral(X):
        n = len(X)
        return Coefficients(np.ones(n), None, None, np.zeros(n))

    def at_t0(X):
        return box.contains(X) & (X[:, 0] == box.lower[0])

    def at_sides(X):
        return box.contains(X) & ((X[:, 1] == box.lower[1]) | (X[:, 1] == box.upper[1]))

    groups = (
        ConstraintGroup("initial_value", sample_initial,
                        LinearOperator(0, lambda X: Coefficients(
                            np.ones(len(X)), None, None, initial_value(X[:, 1]))), at_t0),
        ConstraintGroup("initial_velocity", sample_initial, LinearOperator(1, velocity), at_t0),
        ConstraintGroup("lateral", sample_lateral, LinearOperator(0, lateral), at_sides),
    )
    return ProblemSpec("wave1d", box, LinearOperator(2, interior), groups, exact,
                       exact_bundle, lambda X: np.zeros(len(X)), lambda: _grid(box))


# -- high-dimensional Poisson -------------------------------------------------------

POISSON_DIM = 10
POISSON_DECAY = 10.0
POISSON_TEST_SEED = 20230101


def _poisson10d():
    d = POISSON_DIM
    box = Box(-np.ones(d), np.ones(d))
    k = POISSON_DECAY

    def exact_bundle(X):
        u = np.exp(-k * np.sum(X * X, axis=1))
        du = -2.0 * k * X * u[:, None]
        d2u = (-2.0 * k + 4.0 * k * k * X * X) * u[:, None]
        return BatchBundle(u, du, d2u)

    def exact(X):
        return np.exp(-k * np.sum(X * X, axis=1))

    def forcing(X):
        r2 = np.sum(X * X, axis=1)
        return (2.0 * k * d - 4.0 * k * k * r2) * np.exp(-k * r2)

    def interior(X):
        return Coefficients(None, None, -np.ones((len(X), d)), forcing(X))

    def test_points():
        return box.sample(10_000, np.random.default_rng(POISSON_TEST_SEED))

    boundary = ConstraintGroup("boundary", _face_sampler(box), _dirichlet(exact),
                               _on_box_boundary(box))
    return ProblemSpec("poisson10d", box, LinearOperator(2, interior), (boundary,),
                       exact, exact_bundle, forcing, test_points)


def make_problem(name: str) -> ProblemSpec:
    if name == "multipeak2":
        return _multipeak(name, [(0.5, 0.5), (-0.5, -0.5)])
    if name == "multipeak4":
        return _multipeak(name, [(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)])
    if name == "wave1d":
        return _wave1d()
    if name == "poisson10d":
        return _poisson10d()
    raise ConfigError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEM_NAMES)}")
