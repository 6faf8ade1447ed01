"""Negative curvature on the tangent space of the gradient (differentiable strict quasi-concavity).

The condition reads: ``Df(x) v = 0`` and ``v != 0`` imply ``v' D2f(x) v < 0``.
For an expected utility it transfers from U to u through the diagonal lift
``w = (z, t) -> v = (z, t, ..., t)``. The converse direction is not known to
hold; :func:`search_counterexample` looks for points where U violates the
condition although u satisfies it.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import ExpectedUtility, RestrictedUtility, diagonal_embedding
from .blockarrow import densify, quadratic_form
from .core import (
    Dimensions, ProbabilityWeights, VnmOracle, builtin_family, log_uniform_points, make_weights,
)
from .errors import DimensionError, DomainError
from .properties import (
    FAIL, INDETERMINATE, PASS, CheckConfig, PropertyReport, Witness, _config, _rng, _sample, fmt_real, target_kind,
)

__all__ = [
    "TangentSpaceProbe",
    "tangent_probe",
    "check_diff_strict_quasiconcavity",
    "verify_transfer_U_to_u",
    "TangencyDecomposition",
    "decompose_tangency",
    "SearchCandidate",
    "SearchResult",
    "search_counterexample",
    "blend_family",
    "cobb_douglas_family",
    "default_search_families",
]

CANDIDATE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TangentSpaceProbe:
    point: np.ndarray
    gradient: np.ndarray
    basis: np.ndarray               # (d, d-1), orthonormal, orthogonal to gradient (in scaled coordinates)
    projected_hessian: np.ndarray   # basis' H basis
    max_eigenvalue: float
    direction: np.ndarray           # maximizing tangent direction in original coordinates
    scaling: np.ndarray             # diagonal congruence applied before projecting


def _tangent_basis(g: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``{v : g.v = 0}`` for a batch of gradients, shape (n, d, d-1)."""
    Q, _ = np.linalg.qr(g[:, :, None], mode="complete")
    return Q[:, :, 1:]


def _jacobi(H: np.ndarray) -> np.ndarray:
    diag = np.abs(np.diagonal(H, axis1=-2, axis2=-1))
    sigma = np.ones_like(diag)
    nz = diag > 0
    sigma[nz] = 1.0 / np.sqrt(diag[nz])
    return sigma


def _probes(X, G, H, equilibrate=True):
    n, d = X.shape
    sigma = _jacobi(H) if equilibrate else np.ones((n, d))
    gs = sigma * G
    Hs = sigma[:, :, None] * H * sigma[:, None, :]
    B = _tangent_basis(gs)
    P = np.swapaxes(B, 1, 2) @ Hs @ B
    P = 0.5 * (P + np.swapaxes(P, 1, 2))
    evals, evecs = np.linalg.eigh(P)
    top = evecs[:, :, -1]
    direction = sigma * np.einsum("nij,nj->ni", B, top)
    scale = np.abs(Hs).max(axis=(1, 2))
    return [
        TangentSpaceProbe(X[i], G[i], B[i], P[i], float(evals[i, -1]), direction[i], sigma[i])
        for i in range(n)
    ], scale


def tangent_probe(point, gradient, hessian, equilibrate: bool = False) -> TangentSpaceProbe:
    """Largest curvature of ``hessian`` over unit directions tangent to ``gradient``.

    Without ``equilibrate`` the basis is orthonormal in the original
    coordinates; with it, in the Jacobi-scaled ones.
    """
    X = np.atleast_2d(np.asarray(point, dtype=float))
    G = np.atleast_2d(np.asarray(gradient, dtype=float))
    H = np.asarray(hessian, dtype=float)[None]
    if G.shape[1] < 2:
        raise DimensionError("tangent spaces need at least two coordinates")
    probes, _ = _probes(X, G, H, equilibrate)
    return probes[0]


def _dense(target, X):
    dense = getattr(target, "dense_hessian", None) or target.hessian
    return np.asarray(dense(X))


def check_diff_strict_quasiconcavity(target, samples=None, seed=None, tol=None, config=None) -> PropertyReport:
    """Tangent-space curvature negative at every sampled point.

    The exact maximum over the tangent unit sphere is the top eigenvalue of
    the projected Hessian, computed after a Jacobi congruence (which maps
    tangent directions to tangent directions). Points with a vanishing
    gradient are skipped and counted.
    """
    config = _config(config, samples, seed)
    X = _sample(target, config, "quasiconcavity")
    G = np.asarray(target.gradient(X))
    keep = np.linalg.norm(G, axis=1) >= 1e-12
    skipped = int((~keep).sum())
    X, G = X[keep], G[keep]
    notes = [f"skipped {skipped} points with vanishing gradient"] if skipped else []
    if len(X) == 0:
        return PropertyReport("quasiconcavity", target_kind(target), INDETERMINATE, [], 0, config.seed, notes)
    probes, scale = _probes(X, G, _dense(target, X))
    witnesses = []
    for p, s in zip(probes, scale):
        t = 1e-9 * (1.0 + s) if tol is None else tol
        if not p.max_eigenvalue < -t:
            witnesses.append(Witness(p.point, p.direction, p.max_eigenvalue, "tangent curvature not negative"))
    verdict = FAIL if witnesses else PASS
    return PropertyReport(
        "quasiconcavity", target_kind(target), verdict, witnesses[: config.max_witnesses], len(X), config.seed, notes
    )


# ---------------------------------------------------------------------------
# Proven direction: U -> u
# ---------------------------------------------------------------------------

def _lift(W, dims: Dimensions):
    C, S = dims.commodities, dims.states
    return np.concatenate([W[..., :C], np.tile(W[..., C:], S)], axis=-1)


def verify_transfer_U_to_u(source, dims: Dimensions, samples=None, seed=None, config=None) -> PropertyReport:
    """Check that tangent-space concavity of U carries over to u(x, y) = U(x, y, ..., y).

    For every sampled (x, y) and every basis direction w of the tangent space
    of Du, the lift v = (z, t, ..., t) must be tangent to DU at the diagonal
    point (residual <= 1e-10 |DU| |v|) and carry the same curvature
    (within 1e-10 relative); the restriction must then pass the tangent
    curvature test. When U itself does not pass, the report is
    ``indeterminate`` with a ``precondition-failed`` note.
    """
    config = _config(config, samples, seed)
    pre = check_diff_strict_quasiconcavity(source, config=config)
    if pre.verdict != PASS:
        return PropertyReport(
            "quasiconcavity_transfer", target_kind(source), INDETERMINATE, [], pre.samples_used, config.seed,
            [f"precondition-failed: source verdict {pre.verdict}"],
        )
    R = RestrictedUtility(source, dims)
    X = log_uniform_points(_rng(config.seed, "transfer"), config.samples, 2 * dims.commodities, config.low, config.high)
    E = diagonal_embedding(X, dims)
    g_u = R.gradient(X)
    H_u = R.hessian(X)
    g_U = np.asarray(source.gradient(E))
    H_U = _dense(source, E)
    W = _tangent_basis(g_u)                       # (n, 2C, 2C-1)
    V = _lift(np.swapaxes(W, 1, 2), dims)         # (n, 2C-1, G)
    witnesses = []
    for i in range(len(X)):
        for w, v in zip(W[i].T, V[i]):
            res = abs(g_U[i] @ v)
            if res > 1e-10 * np.linalg.norm(g_U[i]) * np.linalg.norm(v):
                witnesses.append(Witness(X[i], w, res, "lifted direction not tangent to DU"))
            cu, cU = w @ H_u[i] @ w, v @ H_U[i] @ v
            if abs(cu - cU) > 1e-10 * max(abs(cu), abs(cU), np.abs(H_u[i]).max(), 1e-300):
                witnesses.append(Witness(X[i], w, cU - cu, "lifted curvature differs from restricted curvature"))
    post = check_diff_strict_quasiconcavity(R, config=config)
    witnesses.extend(post.witnesses)
    if post.verdict == INDETERMINATE and not witnesses:
        verdict = INDETERMINATE
    else:
        verdict = FAIL if witnesses else PASS
    return PropertyReport(
        "quasiconcavity_transfer", target_kind(source), verdict, witnesses[: config.max_witnesses],
        len(X), config.seed, list(post.notes),
    )


# ---------------------------------------------------------------------------
# Tangency decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TangencyDecomposition:
    residuals: np.ndarray       # r_s = D_x0 u(x0, x_s) v0 + D_xs u(x0, x_s) v_s
    aggregate: float            # sum_s a_s r_s, equal to DU v
    regime: str                 # per-state-tangent | unresolved-regime | not-tangent


def decompose_tangency(v, point, vnm: VnmOracle, weights: ProbabilityWeights, dims: Dimensions | None = None,
                       tol: float = 1e-12) -> TangencyDecomposition:
    """Split ``DU(x) v`` into the per-state tangency residuals.

    Every residual zero is the sufficient case in which the curvature of U
    is a positive combination of negative per-state curvatures. A zero
    aggregate with nonzero residuals is the case no argument covers.
    """
    v = np.asarray(v, dtype=float)
    point = np.asarray(point, dtype=float)
    C = vnm.commodities
    S = len(weights)
    dims = dims or Dimensions(C, S)
    if v.shape != (dims.total,) or point.shape != (dims.total,):
        raise DimensionError(f"expected vectors of length {dims.total}")
    if not np.any(v != 0):
        raise DomainError("direction must be nonzero")
    blocks_x = point.reshape(S + 1, C)
    blocks_v = v.reshape(S + 1, C)
    pairs = np.concatenate([np.broadcast_to(blocks_x[0], (S, C)), blocks_x[1:]], axis=1)
    g = vnm.gradient(pairs)                       # (S, 2C)
    r = g[:, :C] @ blocks_v[0] + np.einsum("si,si->s", g[:, C:], blocks_v[1:])
    a = weights.weights
    aggregate = 0.0
    for s in range(S):
        aggregate += a[s] * r[s]
    DU = ExpectedUtility(vnm, weights, dims).gradient(point)
    scale = np.abs(DU).max() * np.abs(v).max()
    if abs(aggregate - DU @ v) > 1e-12 * max(scale, 1e-300) + 1e-15:
        raise AssertionError("per-state residuals do not add up to DU v")
    rscale = np.abs(g).max() * np.abs(v).max()
    if np.all(np.abs(r) <= tol * max(rscale, 1e-300)):
        regime = "per-state-tangent"
    elif abs(aggregate) <= tol * max(scale, 1e-300):
        regime = "unresolved-regime"
    else:
        regime = "not-tangent"
    return TangencyDecomposition(r, float(aggregate), regime)


# ---------------------------------------------------------------------------
# Counterexample search: u -> U
# ---------------------------------------------------------------------------

def blend_family(alpha: float, beta: float, commodities: int = 1) -> VnmOracle:
    """``u = alpha sum x0 + beta sum ln x0 + sum ln xs``; beta = 0 is linear-plus-log up to scale."""
    if not alpha > 0 or beta < 0:
        raise DomainError("blend family needs alpha > 0 and beta >= 0")
    C = commodities

    def value(X):
        x0, xs = X[:, :C], X[:, C:]
        return alpha * x0.sum(axis=1) + beta * np.log(x0).sum(axis=1) + np.log(xs).sum(axis=1)

    def grad(X):
        x0, xs = X[:, :C], X[:, C:]
        return np.concatenate([alpha + beta / x0, 1.0 / xs], axis=1)

    def hess(X):
        n, d = X.shape
        H = np.zeros((n, d, d))
        idx = np.arange(d)
        diag = np.concatenate([-beta / X[:, :C] ** 2, -1.0 / X[:, C:] ** 2], axis=1)
        H[:, idx, idx] = diag
        return H

    return VnmOracle(C, value, grad, hess, name="blend", params=(float(alpha), float(beta)))


def cobb_douglas_family(alpha: float, beta: float, commodities: int = 1) -> VnmOracle:
    """``u = prod x0^alpha * prod xs^beta``: tangent-concave for all positive exponents."""
    if not alpha > 0 or not beta > 0:
        raise DomainError("cobb-douglas exponents must be positive")
    C = commodities
    expo = np.concatenate([np.full(C, alpha), np.full(C, beta)])

    def value(X):
        return np.exp(np.log(X) @ expo)

    def grad(X):
        return value(X)[:, None] * expo / X

    def hess(X):
        u = value(X)[:, None, None]
        q = expo / X
        H = u * q[:, :, None] * q[:, None, :]
        idx = np.arange(X.shape[1])
        H[:, idx, idx] -= u[:, :, 0] * expo / X**2
        return H

    return VnmOracle(C, value, grad, hess, name="cobb-douglas", params=(float(alpha), float(beta)))


def default_search_families():
    """Registry families plus a 10 x 10 grid of the linear/log blend."""
    fams = [("builtin", name, ()) for name in ("log-additive", "crra", "sqrt-additive", "log-of-sum",
                                               "linear", "linear-plus-log")]
    for alpha in np.logspace(-2, 2, 10):
        for beta in np.concatenate([[0.0], np.logspace(-3, 0, 9)]):
            fams.append(("blend", "blend", (float(alpha), float(beta))))
    return fams


def _make_family(kind, name, params, C) -> VnmOracle:
    if kind == "builtin":
        return builtin_family(name, params, C)
    if kind == "blend":
        return blend_family(*params, commodities=C)
    if kind == "cobb-douglas":
        return cobb_douglas_family(*params, commodities=C)
    raise DomainError(f"unknown search family kind {kind!r}")


def default_weight_grid(S: int):
    if S == 1:
        return [(1.0,)]
    ramp = np.arange(1, S + 1, dtype=float)
    return [tuple(np.full(S, 1.0 / S)), tuple(ramp / ramp.sum())]


@dataclass
class SearchCandidate:
    family: str
    params: tuple
    weights: tuple
    dims: Dimensions
    point: np.ndarray
    direction: np.ndarray
    gradient_residual: float
    curvature_value: float          # v' D2U v in original coordinates
    scaled_curvature: float         # top tangent eigenvalue after Jacobi scaling
    dense_curvature: float          # recomputed from the densified Hessian
    fd_curvature: float             # second difference of U along the direction
    u_certificate: float            # largest tangent eigenvalue of u over its probes
    regime: str
    seed: int

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "record": "candidate",
            "family": self.family,
            "params": [fmt_real(p) for p in self.params],
            "weights": [fmt_real(a) for a in self.weights],
            "commodities": self.dims.commodities,
            "states": self.dims.states,
            "point": [fmt_real(x) for x in self.point],
            "direction": [fmt_real(x) for x in self.direction],
            "gradient_residual": fmt_real(self.gradient_residual),
            "curvature_value": fmt_real(self.curvature_value),
            "scaled_curvature": fmt_real(self.scaled_curvature),
            "dense_curvature": fmt_real(self.dense_curvature),
            "fd_curvature": fmt_real(self.fd_curvature),
            "u_certificate": fmt_real(self.u_certificate),
            "regime": self.regime,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


@dataclass
class SearchResult:
    candidates: list = field(default_factory=list)
    evaluations: int = 0
    budget: int = 0
    budget_exhausted: bool = False
    cells: int = 0
    cells_skipped: int = 0          # u itself failed the tangent test
    rejected: int = 0               # hits dropped by the finite-difference re-check

    def summary_record(self) -> dict:
        return {
            "schema_version": 1,
            "record": "search-summary",
            "candidates": len(self.candidates),
            "evaluations": self.evaluations,
            "budget": self.budget,
            "budget_exhausted": self.budget_exhausted,
            "cells": self.cells,
            "cells_skipped": self.cells_skipped,
            "rejected": self.rejected,
        }


def _cell_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _family_certificate(family, dims: Dimensions, seed: int, config: CheckConfig):
    """Largest tangent eigenvalue of u over its probes, or None when u fails the test."""
    kind, name, params = family
    u = _make_family(kind, name, params, dims.commodities)
    cfg = replace(config, seed=seed)
    if check_diff_strict_quasiconcavity(u, config=cfg).verdict != PASS:
        return u, None
    Xu = _sample(u, cfg, "quasiconcavity")
    probes, _ = _probes(Xu, u.gradient(Xu), u.hessian(Xu))
    return u, max(p.max_eigenvalue for p in probes)


def _fd_curvature(U: ExpectedUtility, x, v, rel_step: float = 1e-3):
    """Second difference of U along ``v`` and the rounding noise it carries.

    The step is a fixed fraction of the distance to the orthant boundary
    along ``v``, so small coordinates never leave the domain.
    """
    active = np.abs(v) > 1e-12
    t = rel_step * float(np.min(x[active] / np.abs(v[active])))
    vals = U.value(np.stack([x + t * v, x, x - t * v]))
    second = (vals[0] - 2.0 * vals[1] + vals[2]) / t**2
    noise = 64.0 * np.finfo(float).eps * np.abs(vals).max() / t**2
    return float(second), float(noise)


def search_cell(family, dims: Dimensions, weights, points: int, seed: int, config: CheckConfig,
                tol: float = CANDIDATE_TOL):
    """Search one (family, dims, weights) cell at ``points`` sampled points.

    Returns ``(candidates, rejected)``; ``rejected`` counts tangent-curvature
    hits that did not survive the finite-difference re-check.
    """
    u, u_certificate = _family_certificate(family, dims, seed, config)
    if u_certificate is None or points <= 0:
        return [], 0
    kind, name, params = family
    w = make_weights(weights)
    U = ExpectedUtility(u, w, dims)
    X = log_uniform_points(_rng(seed, "search"), points, dims.total, config.low, config.high)
    G = U.gradient(X)
    probes, _ = _probes(X, G, U.dense_hessian(X))
    out, rejected = [], 0
    for i, p in enumerate(probes):
        if p.max_eigenvalue < -tol:
            continue
        v = p.direction / np.linalg.norm(p.direction)
        residual = abs(G[i] @ v)
        if residual > 1e-10 * np.linalg.norm(G[i]):
            rejected += 1
            continue
        arrow = U.hessian(X[i])
        curv = quadratic_form(arrow, v)
        dense_curv = float(v @ densify(arrow) @ v)
        if abs(curv - dense_curv) > 1e-8 * max(abs(curv), 1e-300) + 1e-15 * arrow.max_abs():
            raise AssertionError("candidate curvature does not re-verify against the dense Hessian")
        fd_curv, noise = _fd_curvature(U, X[i], v)
        if abs(fd_curv - curv) > 1e-3 * max(abs(curv), abs(fd_curv)) + noise:
            rejected += 1
            continue
        regime = decompose_tangency(v, X[i], u, w, dims).regime
        out.append(SearchCandidate(
            name, tuple(params), tuple(w.tolist()), dims, X[i], v, float(residual), float(curv),
            p.max_eigenvalue, dense_curv, fd_curv, u_certificate, regime, seed,
        ))
    return out, rejected


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def search_counterexample(
    families=None,
    dims_grid=((1, 2), (1, 3), (2, 2)),
    weight_grid=None,
    points_per_cell: int = 16,
    seed: int = 0,
    budget: int = 100_000,
    tol: float = CANDIDATE_TOL,
    config: CheckConfig | None = None,
    threads: int = 1,
) -> SearchResult:
    """Grid search for points where U has non-negative tangent curvature while u has none.

    Cells whose u fails the tangent test on its own probes are skipped and
    cost nothing. ``budget`` counts sampled points of U and is allotted to
    cells in grid order, so the last cell may be cut short and the result
    is flagged. Cells run in parallel; results merge in grid order. An
    empty candidate list is a valid outcome.
    """
    families = default_search_families() if families is None else families
    config = config or CheckConfig(samples=16)
    cells = []
    for family in families:
        for C, S in dims_grid:
            dims = Dimensions(C, S)
            grid = weight_grid(S) if callable(weight_grid) else (weight_grid or default_weight_grid(S))
            for weights in grid:
                if len(weights) == S:
                    cells.append((family, dims, tuple(weights), _cell_seed(seed, len(cells))))

    certs = _map(lambda c: _family_certificate(c[0], c[1], c[3], config)[1], cells, threads)
    result = SearchResult(budget=budget, cells=len(cells))
    plan = []
    for cell, cert in zip(cells, certs):
        if cert is None:
            result.cells_skipped += 1
            continue
        take = min(points_per_cell, budget - result.evaluations)
        if take <= 0:
            result.budget_exhausted = True
            break
        if take < points_per_cell:
            result.budget_exhausted = True
        result.evaluations += take
        plan.append((cell, take))
    found = _map(lambda item: search_cell(item[0][0], item[0][1], item[0][2], item[1], item[0][3], config, tol),
                 plan, threads)
    for cands, rejected in found:
        result.candidates.extend(cands)
        result.rejected += rejected
    return result
