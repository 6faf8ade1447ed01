"""Dimensions, probability weights, orthant points and vNM utility oracles.

Every oracle works on batches: a value function maps an ``(n, 2C)`` array of
points to ``(n,)`` values, a gradient function to ``(n, 2C)`` and a Hessian
function to ``(n, 2C, 2C)``. The public methods also accept a single point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, NormalizationError

__all__ = [
    "Dimensions",
    "ProbabilityWeights",
    "VnmOracle",
    "make_weights",
    "builtin_family",
    "fd_oracle",
    "central_gradient",
    "central_hessian",
    "log_uniform_points",
    "pack_point",
    "unpack_point",
    "BUILTIN_FAMILIES",
]

GRADIENT_STEP = 1e-5
HESSIAN_STEP = 1e-4
WEIGHT_TOL = 1e-12
ASYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class Dimensions:
    commodities: int
    states: int

    def __post_init__(self):
        for name in ("commodities", "states"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise DomainError(f"{name} must be a positive integer, got {val!r}")

    @property
    def total(self) -> int:
        return self.commodities * (self.states + 1)

    @property
    def pair(self) -> int:
        """Number of coordinates of the vNM utility, 2C."""
        return 2 * self.commodities


@dataclass(frozen=True, eq=False)
class ProbabilityWeights:
    """State probabilities ``a_1..a_S``, renormalized to sum to one."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def __eq__(self, other):
        return isinstance(other, ProbabilityWeights) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"ProbabilityWeights({self.weights.tolist()})"

    def tolist(self) -> list[float]:
        return self.weights.tolist()


def make_weights(raw) -> ProbabilityWeights:
    """Validate and renormalize state probabilities.

    With a single state the only admissible vector is ``(1,)``.
    """
    w = np.array(raw, dtype=float).ravel()
    if w.size < 1:
        raise DomainError("at least one state weight is required")
    if not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite")
    if w.size == 1:
        if w[0] <= 0:
            raise DomainError(f"weight {w[0]!r} is not positive")
    elif np.any(w <= 0) or np.any(w >= 1):
        bad = w[(w <= 0) | (w >= 1)][0]
        raise DomainError(f"weight {bad!r} lies outside (0, 1)")
    total = math.fsum(w)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise NormalizationError(f"weights sum to {total!r}, not 1")
    w = w / total
    if w.size > 1:
        # push the rounding residue into the last entry
        last = 1.0 - math.fsum(w[:-1])
        if 0.0 < last < 1.0:
            w[-1] = last
    else:
        w[0] = 1.0
    return ProbabilityWeights(w)


def pack_point(x0, states) -> np.ndarray:
    """Flatten ``(x0, [x1..xS])`` into the PointG layout: x0 block, then states ascending."""
    x0 = np.asarray(x0, dtype=float).ravel()
    blocks = [np.asarray(s, dtype=float).ravel() for s in states]
    if any(b.size != x0.size for b in blocks):
        raise DimensionError("every state bundle must have as many commodities as x0")
    x = np.concatenate([x0, *blocks])
    _require_positive(x)
    return x


def unpack_point(x, dims: Dimensions) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat PointG into ``x0`` (C,) and the state bundles (S, C)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dims.total:
        raise DimensionError(f"expected {dims.total} coordinates, got {x.shape[-1]}")
    blocks = x.reshape(*x.shape[:-1], dims.states + 1, dims.commodities)
    return blocks[..., 0, :], blocks[..., 1:, :]


def _require_positive(x: np.ndarray):
    if not np.all(x > 0):
        raise DomainError("point leaves the strictly positive orthant")


def _as_batch(x, ndim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != ndim:
        raise DimensionError(f"expected points with {ndim} coordinates, got shape {np.shape(x)}")
    return arr, single


@dataclass(frozen=True)
class VnmOracle:
    """Evaluatable u on the positive orthant of R^{2C}.

    ``value_fn``, ``gradient_fn`` and ``hessian_fn`` take an ``(n, 2C)`` batch.
    Hessians are symmetrized on the way out; raw asymmetry above 1e-8 relative
    raises.
    """

    commodities: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    hessian_fn: Callable[[np.ndarray], np.ndarray]
    provenance: str = "analytic"
    name: str = "custom"
    params: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def ndim(self) -> int:
        return 2 * self.commodities

    def value(self, x):
        X, single = _as_batch(x, self.ndim)
        _require_positive(X)
        out = np.asarray(self.value_fn(X), dtype=float).reshape(len(X))
        return out[0] if single else out

    def gradient(self, x):
        X, single = _as_batch(x, self.ndim)
        _require_positive(X)
        out = np.asarray(self.gradient_fn(X), dtype=float).reshape(len(X), self.ndim)
        return out[0] if single else out

    def hessian(self, x):
        X, single = _as_batch(x, self.ndim)
        _require_positive(X)
        H = np.asarray(self.hessian_fn(X), dtype=float).reshape(len(X), self.ndim, self.ndim)
        H = symmetrize(H)
        return H[0] if single else H


def symmetrize(H: np.ndarray, tol: float = ASYMMETRY_TOL) -> np.ndarray:
    Ht = np.swapaxes(H, -1, -2)
    scale = np.maximum(np.abs(H).max(axis=(-2, -1)), 1.0)
    defect = np.abs(H - Ht).max(axis=(-2, -1))
    if np.any(defect > tol * scale):
        raise DomainError(f"Hessian asymmetry {defect.max():.3g} exceeds {tol:g} relative")
    return 0.5 * (H + Ht)


# ---------------------------------------------------------------------------
# Built-in analytic families
# ---------------------------------------------------------------------------

def _split(X, C):
    return X[:, :C], X[:, C:]


def _log_additive(C, params):
    def value(X):
        return np.log(X).sum(axis=1)

    def grad(X):
        return 1.0 / X

    def hess(X):
        n, d = X.shape
        H = np.zeros((n, d, d))
        idx = np.arange(d)
        H[:, idx, idx] = -1.0 / X**2
        return H

    return value, grad, hess


def _crra(C, params):
    (gamma,) = params
    if not gamma > 0 or gamma == 1:
        raise ConfigError(f"crra needs gamma > 0 and gamma != 1, got {gamma!r} (use log-additive for 1)")
    e = 1.0 - gamma

    def value(X):
        return (X**e / e).sum(axis=1)

    def grad(X):
        return X**-gamma

    def hess(X):
        n, d = X.shape
        H = np.zeros((n, d, d))
        idx = np.arange(d)
        H[:, idx, idx] = -gamma * X ** (-gamma - 1.0)
        return H

    return value, grad, hess


def _log_of_sum(C, params):
    def value(X):
        return np.log(X.sum(axis=1))

    def grad(X):
        s = X.sum(axis=1, keepdims=True)
        return np.broadcast_to(1.0 / s, X.shape).copy()

    def hess(X):
        n, d = X.shape
        s = X.sum(axis=1)
        return np.broadcast_to((-1.0 / s**2)[:, None, None], (n, d, d)).copy()

    return value, grad, hess


def _linear(C, params):
    def value(X):
        return X.sum(axis=1)

    def grad(X):
        return np.ones_like(X)

    def hess(X):
        n, d = X.shape
        return np.zeros((n, d, d))

    return value, grad, hess


def _linear_plus_log(C, params):
    def value(X):
        x0, xs = _split(X, C)
        return x0.sum(axis=1) + np.log(xs).sum(axis=1)

    def grad(X):
        x0, xs = _split(X, C)
        return np.concatenate([np.ones_like(x0), 1.0 / xs], axis=1)

    def hess(X):
        n, d = X.shape
        H = np.zeros((n, d, d))
        idx = np.arange(C, d)
        H[:, idx, idx] = -1.0 / X[:, C:] ** 2
        return H

    return value, grad, hess


BUILTIN_FAMILIES: dict[str, tuple[Callable, int]] = {
    "log-additive": (_log_additive, 0),
    "crra": (_crra, 1),
    "sqrt-additive": (lambda C, p: _crra(C, (0.5,)), 0),
    "log-of-sum": (_log_of_sum, 0),
    "linear": (_linear, 0),
    "linear-plus-log": (_linear_plus_log, 0),
}

# parameters used when a family is swept without explicit params
DEFAULT_PARAMS = {"crra": (2.0,)}


def builtin_family(name: str, params=(), dims: Dimensions | int = 1) -> VnmOracle:
    """Analytic vNM utility from the registry; ``dims`` may be Dimensions or C."""
    if name not in BUILTIN_FAMILIES:
        raise ConfigError(f"unknown family {name!r}; known: {', '.join(BUILTIN_FAMILIES)}")
    factory, n_params = BUILTIN_FAMILIES[name]
    params = tuple(float(p) for p in (params if params is not None else ()))
    if not params and n_params:
        params = DEFAULT_PARAMS[name]
    if len(params) != n_params:
        raise ConfigError(f"family {name!r} takes {n_params} parameter(s), got {len(params)}")
    C = dims.commodities if isinstance(dims, Dimensions) else int(dims)
    value, grad, hess = factory(C, params)
    return VnmOracle(C, value, grad, hess, provenance="analytic", name=name, params=params)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def _steps(X, step, relative):
    if relative:
        return step * np.abs(X)
    return np.full_like(X, step)


def central_gradient(f, X, step=GRADIENT_STEP, relative=False) -> np.ndarray:
    """Central-difference gradient of a batched value function at ``(n, d)`` points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    h = _steps(X, step, relative)
    if np.any(X - h <= 0):
        raise DomainError("finite-difference stencil leaves the positive orthant")
    eye = np.eye(d)
    plus = X[:, None, :] + h[:, :, None] * eye
    minus = X[:, None, :] - h[:, :, None] * eye
    fp = np.asarray(f(plus.reshape(-1, d))).reshape(n, d)
    fm = np.asarray(f(minus.reshape(-1, d))).reshape(n, d)
    return (fp - fm) / (2.0 * h)


def central_hessian(f, X, step=GRADIENT_STEP, outer_step=HESSIAN_STEP, relative=False) -> np.ndarray:
    """Nested central differences: outer difference of the central gradient, symmetrized."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    h = _steps(X, outer_step, relative)
    inner = _steps(X, step, relative)
    if np.any(X - h - inner * (1.0 - outer_step if relative else 1.0) <= 0):
        raise DomainError("finite-difference stencil leaves the positive orthant")
    eye = np.eye(d)
    plus = (X[:, None, :] + h[:, :, None] * eye).reshape(-1, d)
    minus = (X[:, None, :] - h[:, :, None] * eye).reshape(-1, d)
    gp = central_gradient(f, plus, step, relative).reshape(n, d, d)
    gm = central_gradient(f, minus, step, relative).reshape(n, d, d)
    # row j holds the gradient at x +/- h_j e_j
    H = (gp - gm) / (2.0 * h[:, :, None])
    return 0.5 * (H + np.swapaxes(H, 1, 2))


def fd_oracle(
    value_only: Callable,
    step: float = GRADIENT_STEP,
    commodities: int = 1,
    *,
    hessian_step: float = HESSIAN_STEP,
    relative: bool = False,
    vectorized: bool = True,
    name: str = "custom",
) -> VnmOracle:
    """Wrap a value-only utility with central-difference derivatives.

    ``relative=True`` scales each step by the coordinate magnitude, which keeps
    the stencil inside the orthant at any scale.
    """
    if not step > 0 or not hessian_step > 0:
        raise ConfigError("finite-difference steps must be positive")
    if vectorized:
        value = value_only
    else:
        def value(X):
            return np.array([float(value_only(row)) for row in X])

    return VnmOracle(
        commodities,
        value,
        lambda X: central_gradient(value, X, step, relative),
        lambda X: central_hessian(value, X, step, hessian_step, relative),
        provenance="finite-difference",
        name=name,
        params=(step, hessian_step),
    )


def log_uniform_points(rng: np.random.Generator, n: int, d: int, low=1e-3, high=1e3) -> np.ndarray:
    """Points with coordinates drawn log-uniformly from [low, high]."""
    return np.exp(rng.uniform(np.log(low), np.log(high), size=(n, d)))
