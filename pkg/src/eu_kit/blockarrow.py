"""Symmetric block-arrow matrices: the sparsity pattern of an expected-utility Hessian.

The matrix has a C x C corner block ``A0`` (today's bundle), S arm blocks
``B_s`` coupling today's bundle with state ``s`` and S diagonal blocks ``D_s``.
Blocks coupling two different states are structurally zero and never stored.

Negative definiteness is decided by eliminating the state blocks first and
factorizing the Schur complement of the corner last, which costs O(S C^3)
instead of O((SC)^3) and produces no fill-in.
"""
from __future__ import annotations

import json
import statistics
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .core import Dimensions
from .errors import DimensionError

__all__ = [
    "BlockArrowHessian",
    "NDResult",
    "quadratic_form",
    "is_negative_definite",
    "densify",
    "default_tol",
    "random_arrow",
    "dense_nd_decision",
    "fit_exponent",
    "bench_nd",
    "format_bench_table",
]

ND = "ND"
NOT_ND = "not-ND"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class BlockArrowHessian:
    corner: np.ndarray      # (C, C)
    arms: np.ndarray        # (S, C, C), rows indexed by x0, columns by x_s
    diagonals: np.ndarray   # (S, C, C)
    dims: Dimensions

    def __post_init__(self):
        C, S = self.dims.commodities, self.dims.states
        if self.corner.shape != (C, C) or self.arms.shape != (S, C, C) or self.diagonals.shape != (S, C, C):
            raise DimensionError(
                f"block shapes {self.corner.shape}, {self.arms.shape}, {self.diagonals.shape} "
                f"do not match C={C}, S={S}"
            )
        for name, blk in (("corner", self.corner), ("diagonals", self.diagonals)):
            scale = max(1.0, float(np.abs(blk).max(initial=0.0)))
            if np.abs(blk - np.swapaxes(blk, -1, -2)).max(initial=0.0) > 1e-12 * scale:
                raise DimensionError(f"{name} block is not symmetric")

    @classmethod
    def from_dense(cls, H, dims: Dimensions, check: bool = True) -> "BlockArrowHessian":
        """Read the arrow blocks of a dense G x G matrix.

        With ``check`` the cross-state blocks must be exactly zero.
        """
        H = np.asarray(H, dtype=float)
        C, S = dims.commodities, dims.states
        if H.shape != (dims.total, dims.total):
            raise DimensionError(f"expected a {dims.total}x{dims.total} matrix, got {H.shape}")
        blocks = H.reshape(S + 1, C, S + 1, C).transpose(0, 2, 1, 3)
        if check:
            off = blocks[1:, 1:].copy()
            off[np.arange(S), np.arange(S)] = 0.0
            if np.any(off != 0.0):
                raise DimensionError("matrix has nonzero cross-state blocks")
        idx = np.arange(1, S + 1)
        corner = 0.5 * (blocks[0, 0] + blocks[0, 0].T)
        diags = blocks[idx, idx]
        diags = 0.5 * (diags + np.swapaxes(diags, 1, 2))
        return cls(corner, blocks[0, 1:].copy(), diags, dims)

    @classmethod
    def from_pair_hessian(cls, H, commodities: int) -> "BlockArrowHessian":
        """View a 2C x 2C Hessian of u as a single-state arrow."""
        return cls.from_dense(H, Dimensions(commodities, 1), check=False)

    def scaled(self, sigma: np.ndarray) -> "BlockArrowHessian":
        """Congruence ``diag(sigma) H diag(sigma)``; preserves the arrow pattern and the inertia."""
        C, S = self.dims.commodities, self.dims.states
        blk = sigma.reshape(S + 1, C)
        s0, ss = blk[0], blk[1:]
        return BlockArrowHessian(
            s0[:, None] * self.corner * s0[None, :],
            s0[None, :, None] * self.arms * ss[:, None, :],
            ss[:, :, None] * self.diagonals * ss[:, None, :],
            self.dims,
        )

    def diagonal(self) -> np.ndarray:
        d0 = np.diagonal(self.corner)
        ds = np.diagonal(self.diagonals, axis1=1, axis2=2).ravel()
        return np.concatenate([d0, ds])

    def max_abs(self) -> float:
        return max(
            float(np.abs(self.corner).max(initial=0.0)),
            float(np.abs(self.arms).max(initial=0.0)),
            float(np.abs(self.diagonals).max(initial=0.0)),
        )


def densify(h: BlockArrowHessian) -> np.ndarray:
    C, S = h.dims.commodities, h.dims.states
    blocks = np.zeros((S + 1, S + 1, C, C))
    idx = np.arange(1, S + 1)
    blocks[0, 0] = h.corner
    blocks[0, 1:] = h.arms
    blocks[1:, 0] = np.swapaxes(h.arms, 1, 2)
    blocks[idx, idx] = h.diagonals
    return blocks.transpose(0, 2, 1, 3).reshape(h.dims.total, h.dims.total)


def quadratic_form(h: BlockArrowHessian, v) -> float:
    """``v' H v`` as ``v0'A0 v0 + sum_s (2 v0'B_s v_s + v_s'D_s v_s)`` in O(S C^2)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (h.dims.total,):
        raise DimensionError(f"direction must have {h.dims.total} components, got {v.shape}")
    C, S = h.dims.commodities, h.dims.states
    blocks = v.reshape(S + 1, C)
    v0, vs = blocks[0], blocks[1:]
    per_state = 2.0 * np.einsum("i,sij,sj->s", v0, h.arms, vs) + np.einsum("si,sij,sj->s", vs, h.diagonals, vs)
    total = float(v0 @ h.corner @ v0)
    for term in per_state:
        total += term
    return total


def default_tol(h: BlockArrowHessian) -> float:
    return 1e-9 * (1.0 + h.max_abs())


@dataclass(frozen=True)
class NDResult:
    decision: str
    witness: np.ndarray | None = None   # direction in the original coordinates
    min_pivot: float = np.inf
    stage: str = ""                     # "state <s>" (1-based) or "corner"
    curvature: float | None = None      # quadratic form at the witness
    tol: float = 0.0

    @property
    def is_nd(self) -> bool:
        return self.decision == ND


def _ldl_pivots(M: np.ndarray, tol: float):
    """Unpivoted LDL' of a symmetric matrix; stops at the first pivot <= tol.

    Returns ``(pivots, fail_index, witness)``; the witness y satisfies
    ``y' M y = pivot[fail_index]`` and has a unit entry at ``fail_index``.
    """
    n = M.shape[0]
    try:
        L = np.linalg.cholesky(M)
        piv = np.diagonal(L) ** 2
        if piv.min() > tol:
            return piv, None, None
    except np.linalg.LinAlgError:
        pass
    L = np.eye(n)
    d = np.zeros(n)
    for k in range(n):
        d[k] = M[k, k] - np.dot(L[k, :k] ** 2, d[:k])
        if not d[k] > tol:
            Lk = L[: k + 1, : k + 1]
            e = np.zeros(k + 1)
            e[k] = 1.0
            y = np.linalg.solve(Lk.T, e)
            w = np.zeros(n)
            w[: k + 1] = y
            return d[: k + 1], k, w
        if k + 1 < n:
            L[k + 1:, k] = (M[k + 1:, k] - L[k + 1:, :k] @ (L[k, :k] * d[:k])) / d[k]
    return d, None, None


def _equilibration(h: BlockArrowHessian) -> np.ndarray:
    diag = np.abs(h.diagonal())
    sigma = np.ones_like(diag)
    nz = diag > 0
    sigma[nz] = 1.0 / np.sqrt(diag[nz])
    return sigma


def is_negative_definite(h: BlockArrowHessian, tol: float | None = None, equilibrate: bool = False) -> NDResult:
    """Decide ``v'Hv < 0`` for all nonzero v by Schur elimination on the arrow.

    Factorizes ``-D_s`` for every state, then the Schur complement
    ``-(A0 - sum_s B_s D_s^{-1} B_s')``. A pivot at or below ``tol`` yields a
    witness direction, which is re-evaluated through :func:`quadratic_form`:
    ``not-ND`` when ``v'Hv >= -tol |v|^2`` holds there, ``indeterminate``
    when the elimination and the direct evaluation disagree.

    ``equilibrate`` applies the Jacobi congruence ``diag(|H_ii|^-1/2)`` first,
    which leaves the decision unchanged in exact arithmetic and makes the
    pivot threshold scale free.
    """
    sigma = None
    work = h
    if equilibrate:
        sigma = _equilibration(h)
        work = h.scaled(sigma)
    if tol is None:
        tol = default_tol(work)
    C, S = work.dims.commodities, work.dims.states
    min_pivot = np.inf
    solves = []
    witness = None
    stage = ""
    for s in range(S):
        R = -work.diagonals[s]
        piv, k, y = _ldl_pivots(R, tol)
        min_pivot = min(min_pivot, float(piv.min()))
        if k is not None:
            witness = np.zeros(work.dims.total)
            witness[C * (s + 1): C * (s + 2)] = y
            stage = f"state {s + 1}"
            break
        # R_s^{-1} Q_s' with Q_s = -B_s
        solves.append(np.linalg.solve(R, -work.arms[s].T))
    if witness is None:
        T = -work.corner.copy()
        for s in range(S):
            T -= (-work.arms[s]) @ solves[s]
        T = 0.5 * (T + T.T)
        piv, k, y = _ldl_pivots(T, tol)
        min_pivot = min(min_pivot, float(piv.min()))
        if k is None:
            return NDResult(ND, min_pivot=min_pivot, tol=tol)
        witness = np.zeros(work.dims.total)
        witness[:C] = y
        for s in range(S):
            witness[C * (s + 1): C * (s + 2)] = -solves[s] @ y
        stage = "corner"

    blocks = witness.reshape(S + 1, C)
    # a nonzero v has at least one nonzero pair (v0, v_s)
    assert any(np.any(blocks[0] != 0) or np.any(blocks[s] != 0) for s in range(1, S + 1))
    q = quadratic_form(work, witness)
    decision = NOT_ND if q >= -tol * float(witness @ witness) else INDETERMINATE
    if sigma is not None:
        witness = sigma * witness
        q = quadratic_form(h, witness)
    return NDResult(decision, witness, min_pivot, stage, q, tol)


# ---------------------------------------------------------------------------
# Dense comparison and benchmark
# ---------------------------------------------------------------------------

def dense_nd_decision(H: np.ndarray, tol: float) -> bool:
    """Eigenvalue oracle: all eigenvalues below ``-tol``."""
    return bool(np.linalg.eigvalsh(H).max() < -tol)


def _dense_cholesky_nd(H: np.ndarray, tol: float) -> bool:
    try:
        L = np.linalg.cholesky(-H)
    except np.linalg.LinAlgError:
        return False
    return bool((np.diagonal(L) ** 2).min() > tol)


DENSE_METHODS = {
    "dense": dense_nd_decision,
    "dense-cholesky": _dense_cholesky_nd,
}


def random_arrow(rng: np.random.Generator, dims: Dimensions, p_nd: float = 0.5) -> BlockArrowHessian:
    """Random block-arrow matrix, negative definite with probability about ``p_nd``.

    ``-H`` is built with positive definite state blocks and a Schur complement
    whose spectrum is shifted to be either positive or indefinite.
    """
    C, S = dims.commodities, dims.states
    W = rng.normal(size=(S, C, C))
    R = W @ np.swapaxes(W, 1, 2) + 0.5 * np.eye(C)
    if rng.random() < 0.1:
        # occasionally make one state block itself indefinite
        R[rng.integers(S)] -= 3.0 * np.eye(C)
    Q = rng.normal(size=(S, C, C)) / np.sqrt(S)
    Z = rng.normal(size=(C, C))
    T = Z @ Z.T / C
    evals = np.linalg.eigvalsh(T)
    shift = 0.5 - evals.min() if rng.random() < p_nd else -0.5 * (evals.max() + evals.min()) - 0.3
    T = T + shift * np.eye(C)
    P = T.copy()
    for s in range(S):
        try:
            P += Q[s] @ np.linalg.solve(R[s], Q[s].T)
        except np.linalg.LinAlgError:
            pass
    P = 0.5 * (P + P.T)
    return BlockArrowHessian(-P, -Q, -R, dims)


def _median_time(fn, repetitions, budget=2.0):
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
        if len(times) >= 3 and sum(times) > budget:
            break
    return statistics.median(times)


def fit_exponent(xs, ys) -> float:
    """Growth exponent k of ``t = c0 + c * S**k``.

    The constant term absorbs per-call overhead, which otherwise flattens a
    log-log fit at small sizes. Falls back to the plain log-log slope.
    """
    xs = np.asarray(xs, dtype=float)
    ly = np.log(np.asarray(ys, dtype=float))
    plain = float(np.polyfit(np.log(xs), ly, 1)[0])
    if len(xs) < 4:
        return plain

    def model(S, lc0, lc, k):
        return np.logaddexp(lc0, lc + k * np.log(S))

    p0 = [ly[0] - 1.0, ly[-1] - plain * np.log(xs[-1]), plain]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(model, xs, ly, p0=p0, bounds=([-60, -60, 0.0], [10, 10, 5.0]), maxfev=20000)
    except (RuntimeError, ValueError):
        return plain
    return float(popt[2])


def bench_nd(
    states=(4, 16, 64, 256),
    commodities=(1, 4, 16),
    repetitions: int = 5,
    seed: int = 0,
    instances: int = 2,
    methods=("structured", "dense", "dense-cholesky"),
):
    """Time structured vs dense negative-definiteness decisions.

    ``dense`` is the eigenvalue oracle on ``densify(h)``; ``dense-cholesky``
    factorizes ``-densify(h)``. Every dense decision must equal the
    structured one. Returns ``(records, fits)``: one record per
    (S, C, method) and the growth exponent in S per (C, method).
    """
    rng = np.random.default_rng(seed)
    records = []
    for C in commodities:
        for S in states:
            dims = Dimensions(C, S)
            hs = [random_arrow(rng, dims) for _ in range(instances)]
            tols = [default_tol(h) for h in hs]
            structured = [is_negative_definite(h, t).is_nd for h, t in zip(hs, tols)]
            for method in methods:
                if method == "structured":
                    def run(h=hs[0], t=tols[0]):
                        return is_negative_definite(h, t).is_nd
                else:
                    decide = DENSE_METHODS[method]
                    decisions = [decide(densify(h), t) for h, t in zip(hs, tols)]
                    if decisions != structured:
                        raise AssertionError(f"{method} and structured decisions differ at S={S}, C={C}")

                    def run(h=hs[0], t=tols[0], decide=decide):
                        return decide(densify(h), t)

                records.append({
                    "schema_version": 1,
                    "record": "bench",
                    "states": S,
                    "commodities": C,
                    "method": method,
                    "median_seconds": _median_time(run, repetitions),
                    "decisions_agree": True,
                    "nd_count": int(sum(structured)),
                    "instances": instances,
                })
    fits = {}
    for C in commodities:
        for method in methods:
            rows = [r for r in records if r["commodities"] == C and r["method"] == method]
            fits[(C, method)] = fit_exponent([r["states"] for r in rows], [r["median_seconds"] for r in rows])
    return records, fits


def format_bench_table(records, fits) -> str:
    methods = list(dict.fromkeys(r["method"] for r in records))
    keyed = {(r["states"], r["commodities"], r["method"]): r["median_seconds"] for r in records}
    lines = [f"{'S':>6} {'C':>4} " + " ".join(f"{m + ' [s]':>20}" for m in methods)]
    for C in sorted({r["commodities"] for r in records}):
        for S in sorted({r["states"] for r in records}):
            cells = " ".join(f"{keyed[(S, C, m)]:>20.3e}" for m in methods)
            lines.append(f"{S:>6} {C:>4} {cells}")
    lines.append("")
    lines.append("growth exponent in S (t = c0 + c S^k):")
    for (C, method), k in sorted(fits.items()):
        lines.append(f"  C={C:<3} {method:<15} {k:6.2f}")
    return "\n".join(lines)


def bench_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
