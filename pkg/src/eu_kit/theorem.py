"""Cross-checks between u and the assembled U: verdict equivalence, witness transport, grid oracle.

The four conditions (smoothness, monotonicity, negative definiteness,
closed upper contour sets via boundary divergence) hold for u exactly when
they hold for U = sum_s a_s u(x0, x_s). :func:`verify_equivalence` runs the
checkers on both sides and on the diagonal restriction of U, and reports
any determinate disagreement. :func:`brute_force_oracle` is an independent
grid computation for the smallest instances.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .assembly import ExpectedUtility, RestrictedUtility, diagonal_embedding
from .blockarrow import quadratic_form
from .core import Dimensions, ProbabilityWeights, VnmOracle
from .errors import DimensionError, DomainError
from .properties import FAIL, INDETERMINATE, PASS, PROPERTIES, CheckConfig, check_all, fmt_real

__all__ = [
    "Discrepancy",
    "EquivalenceVerdict",
    "verify_equivalence",
    "lift_witness_u_to_U",
    "project_witness_U_to_u",
    "select_nonzero_state",
    "SignFlipped",
    "brute_force_oracle",
    "OracleTable",
]

DETERMINATE = (PASS, FAIL)


@dataclass(frozen=True)
class Discrepancy:
    property: str
    direction: str      # "u->U": u passes, U fails; "U->u": U passes, u (or restrict(U)) fails
    witness: dict | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"property": self.property, "direction": self.direction, "witness": self.witness,
                "detail": self.detail}


@dataclass
class EquivalenceVerdict:
    family: str
    params: tuple
    dims: Dimensions
    weights: tuple
    pairs: dict                 # property -> (verdict on u, verdict on U, verdict on restrict(U))
    discrepancies: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    lifted: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not self.discrepancies

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "record": "equivalence",
            "family": self.family,
            "params": [fmt_real(p) for p in self.params],
            "commodities": self.dims.commodities,
            "states": self.dims.states,
            "weights": [fmt_real(a) for a in self.weights],
            "pairs": {k: {"u": v[0], "U": v[1], "restricted": v[2]} for k, v in self.pairs.items()},
            "consistent": self.consistent,
            "discrepancies": [d.to_dict() for d in self.discrepancies],
            "lifted_witnesses": self.lifted,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def lift_witness_u_to_U(w, dims: Dimensions) -> np.ndarray:
    """``(z, t) -> (z, t, ..., t)`` with S copies of t."""
    w = np.asarray(w, dtype=float)
    if w.shape != (dims.pair,):
        raise DimensionError(f"expected a direction of length {dims.pair}")
    if not np.any(w != 0):
        raise DomainError("cannot lift the zero direction")
    C = dims.commodities
    return np.concatenate([w[:C], np.tile(w[C:], dims.states)])


def project_witness_U_to_u(v, dims: Dimensions, state: int) -> np.ndarray:
    """The pair ``(v0, v_s)`` for a 1-based state index."""
    v = np.asarray(v, dtype=float)
    if v.shape != (dims.total,):
        raise DimensionError(f"expected a direction of length {dims.total}")
    if not 1 <= state <= dims.states:
        raise DimensionError(f"state index {state} outside 1..{dims.states}")
    C = dims.commodities
    return np.concatenate([v[:C], v[state * C:(state + 1) * C]])


def select_nonzero_state(v, dims: Dimensions) -> int:
    """First state whose pair ``(v0, v_s)`` is nonzero; one exists for every nonzero v."""
    v = np.asarray(v, dtype=float)
    if not np.any(v != 0):
        raise DomainError("direction must be nonzero")
    for s in range(1, dims.states + 1):
        if np.any(project_witness_U_to_u(v, dims, s) != 0):
            return s
    raise AssertionError("nonzero direction with every state pair zero")


@dataclass(frozen=True)
class SignFlipped:
    """Fault injection: U with the sign of its state-block gradient flipped.

    Only meant to prove that the harness detects an inconsistent assembly.
    """

    inner: ExpectedUtility

    @property
    def ndim(self):
        return self.inner.ndim

    @property
    def dims(self):
        return self.inner.dims

    @property
    def provenance(self):
        return self.inner.provenance

    def value(self, x):
        return self.inner.value(x)

    def gradient(self, x):
        g = np.array(self.inner.gradient(x), dtype=float)
        g[..., self.inner.dims.commodities:] *= -1.0
        return g

    def hessian(self, x):
        return self.inner.dense_hessian(x)

    def dense_hessian(self, x):
        return self.inner.dense_hessian(x)

    def arrow_hessians(self, X):
        return self.inner.arrow_hessians(X)


def _first_witness(report):
    return report.witnesses[0].to_dict() if report.witnesses else None


def _lift_nd_witnesses(report_u, U, dims: Dimensions, limit: int = 3):
    """Carry the u-side ND witnesses to U at the diagonal point and record both curvatures."""
    out = []
    if not isinstance(U, ExpectedUtility):
        return out
    for wit in report_u.witnesses[:limit]:
        if wit.direction is None or not np.any(wit.direction != 0):
            continue
        point = np.asarray(wit.point, dtype=float)
        v = lift_witness_u_to_U(wit.direction, dims)
        x = diagonal_embedding(point[None], dims)[0]
        qU = quadratic_form(U.hessian(x), v)
        qu = float(wit.direction @ U.vnm.hessian(point) @ wit.direction)
        out.append({
            "point": [fmt_real(c) for c in x],
            "direction": [fmt_real(c) for c in v],
            "curvature_U": fmt_real(qU),
            "curvature_u": fmt_real(qu),
        })
    return out


def verify_equivalence(vnm: VnmOracle, weights: ProbabilityWeights, dims: Dimensions,
                       config: CheckConfig | None = None, fault: str | None = None) -> EquivalenceVerdict:
    """Run every checker on u, on U and on restrict(U); compare the determinate verdicts.

    An indeterminate verdict on either side is noted but never counted as a
    discrepancy. ``fault="sign-flip"`` swaps in a deliberately broken U.
    """
    config = config or CheckConfig()
    U = ExpectedUtility(vnm, weights, dims)
    target_U = SignFlipped(U) if fault == "sign-flip" else U
    if fault not in (None, "sign-flip"):
        raise ValueError(f"unknown fault {fault!r}")
    ru = check_all(vnm, config)
    rU = check_all(target_U, config)
    rR = check_all(RestrictedUtility(target_U, dims), config)
    verdict = EquivalenceVerdict(vnm.name, tuple(vnm.params), dims, tuple(weights.tolist()), {})
    for a, b, c in zip(ru, rU, rR):
        verdict.pairs[a.property] = (a.verdict, b.verdict, c.verdict)
        if a.verdict in DETERMINATE and b.verdict in DETERMINATE and a.verdict != b.verdict:
            direction = "u->U" if a.verdict == PASS else "U->u"
            failing = b if b.verdict == FAIL else a
            verdict.discrepancies.append(Discrepancy(a.property, direction, _first_witness(failing),
                                                     f"u {a.verdict}, U {b.verdict}"))
        if a.verdict in DETERMINATE and c.verdict in DETERMINATE and a.verdict != c.verdict:
            failing = c if c.verdict == FAIL else a
            verdict.discrepancies.append(Discrepancy(a.property, "U->u", _first_witness(failing),
                                                     f"u {a.verdict}, restricted U {c.verdict}"))
        if INDETERMINATE in (a.verdict, b.verdict, c.verdict):
            verdict.notes.append(f"{a.property}: indeterminate verdict tolerated "
                                 f"(u {a.verdict}, U {b.verdict}, restricted {c.verdict})")
        if a.property == "negative_definiteness" and a.verdict == FAIL:
            verdict.lifted = _lift_nd_witnesses(a, U, dims)
    return verdict


# ---------------------------------------------------------------------------
# Grid oracle for G <= 3
# ---------------------------------------------------------------------------

@dataclass
class OracleTable:
    family: str
    dims: Dimensions
    weights: tuple
    rows: dict          # (target, property) -> (oracle verdict, pipeline verdict)

    @property
    def agree(self) -> bool:
        return all(o == p for o, p in self.rows.values())

    def disagreements(self):
        return {k: v for k, v in self.rows.items() if v[0] != v[1]}

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "record": "brute-force",
            "family": self.family,
            "commodities": self.dims.commodities,
            "states": self.dims.states,
            "weights": [fmt_real(a) for a in self.weights],
            "rows": [{"target": t, "property": p, "oracle": o, "pipeline": q, "agree": o == q}
                     for (t, p), (o, q) in self.rows.items()],
            "agree": self.agree,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    def format(self) -> str:
        lines = [f"{self.family} C={self.dims.commodities} S={self.dims.states}"]
        for (t, p), (o, q) in self.rows.items():
            lines.append(f"  {t:9s} {p:22s} oracle={o:5s} pipeline={q:13s} {'ok' if o == q else 'DIFFER'}")
        return "\n".join(lines)


def _log_grid(resolution, d, low, high):
    axis = np.linspace(np.log(low), np.log(high), resolution)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _phi_derivatives(value_fn, Y, h):
    """Value, gradient and Hessian of phi(y) = F(exp(y)) by plain central stencils."""
    n, d = Y.shape
    E = np.eye(d) * h
    offsets = [np.zeros(d)]
    for i in range(d):
        offsets += [E[i], -E[i], 2 * E[i], -2 * E[i]]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        offsets += [E[i] + E[j], E[i] - E[j], -E[i] + E[j], -E[i] - E[j]]
    offsets = np.array(offsets)
    F = value_fn(np.exp((Y[:, None, :] + offsets[None]).reshape(-1, d))).reshape(n, len(offsets))
    f0 = F[:, 0]
    g = np.empty((n, d))
    H = np.empty((n, d, d))
    for i in range(d):
        p, m, p2, m2 = F[:, 1 + 4 * i: 5 + 4 * i].T
        g[:, i] = (p - m) / (2 * h)
        H[:, i, i] = (p2 - 2 * f0 + m2) / (4 * h * h)
    base = 1 + 4 * d
    for k, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = F[:, base + 4 * k: base + 4 * k + 4].T
        H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4 * h * h)
    return f0, g, H


def _oracle_verdicts(value_fn, d, resolution, low, high, h=1e-3, nd_tol=1e-6):
    Y = _log_grid(resolution, d, low, high)
    with np.errstate(all="ignore"):
        f, g, H = _phi_derivatives(value_fn, Y, h)
        _, g2, H2 = _phi_derivatives(value_fn, Y, h / 2)
    out = {}
    # smoothness: derivatives stable under halving the step
    gscale = np.abs(g).max(axis=1) + 1e-8 * (1 + np.abs(f))
    hscale = np.abs(H).max(axis=(1, 2)) + 1e-3 * (1 + np.abs(f))
    smooth = (np.abs(g - g2).max(axis=1) <= 1e-5 * gscale) & (np.abs(H - H2).max(axis=(1, 2)) <= 1e-3 * hscale)
    out["smoothness"] = PASS if smooth.all() else FAIL
    # monotonicity: x_i dF/dx_i = dphi/dy_i
    out["monotonicity"] = PASS if np.all(g > 0) else FAIL
    # negative definiteness of X H X = D2 phi - diag(D phi), a congruence of D2F
    scaled = H - g[:, :, None] * np.eye(d)
    top = np.linalg.eigvalsh(scaled)[:, -1]
    out["negative_definiteness"] = PASS if np.all(top < -nd_tol) else FAIL
    # closed upper contour sets: a boundary run that never drops below the lowest grid value
    X = np.exp(Y)
    floor = f.min()
    scales = 10.0 ** -np.arange(0, 301, 10, dtype=float)
    masks = [np.eye(d, dtype=bool)[i] for i in range(d)] + [np.ones(d, dtype=bool)]
    closed = True
    for mask in masks:
        factor = np.where(mask[None, :], scales[:, None], 1.0)             # (k, d)
        P = (X[:, None, :] * factor[None]).reshape(-1, d)
        with np.errstate(all="ignore"):
            vals = value_fn(P).reshape(len(X), len(scales))
        lowest = np.nanmin(np.where(np.isfinite(vals), vals, -np.inf), axis=1)
        if np.any(lowest >= floor):
            closed = False
            break
    out["boundary_divergence"] = PASS if closed else FAIL
    return out


def brute_force_oracle(vnm: VnmOracle, weights: ProbabilityWeights, dims: Dimensions, resolution: int = 20,
                       low: float = 1e-2, high: float = 1e2, config: CheckConfig | None = None,
                       pipeline: dict | None = None) -> OracleTable:
    """Grid verdicts for u and U on ``resolution**d`` log-spaced points, next to the pipeline's.

    Derivatives come from plain central stencils of ``y -> F(exp(y))``.
    Negative definiteness is read off the largest eigenvalue of the
    coordinate-scaled Hessian. Closedness is probed directly: each grid
    point is pushed to the boundary (one coordinate, or all at once, down
    to a factor of 1e-300); if the values along some push never fall below
    the smallest grid value, that value's upper contour set contains points
    accumulating at the boundary and is flagged as not closed.

    ``pipeline`` may carry precomputed ``{target: {property: verdict}}``.
    """
    if dims.total > 3:
        raise DimensionError("the grid oracle is limited to at most three coordinates")
    U = ExpectedUtility(vnm, weights, dims)
    config = config or CheckConfig()
    if pipeline is None:
        pipeline = {
            "vnm": {r.property: r.verdict for r in check_all(vnm, config)},
            "expected": {r.property: r.verdict for r in check_all(U, config)},
        }
    rows = {}
    for target, fn, d in (("vnm", vnm.value, dims.pair), ("expected", U.value, dims.total)):
        oracle = _oracle_verdicts(fn, d, resolution, low, high)
        for prop in PROPERTIES:
            rows[(target, prop)] = (oracle[prop], pipeline[target][prop])
    return OracleTable(vnm.name, dims, tuple(weights.tolist()), rows)
