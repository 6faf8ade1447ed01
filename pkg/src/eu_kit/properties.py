"""Numerical checkers for smoothness, monotonicity, concavity and boundary behaviour.

Each checker samples points of the positive orthant (log-uniform coordinates,
seeded), evaluates a target and returns a :class:`PropertyReport`. Targets are
vNM oracles (2C coordinates), assembled expected utilities (G coordinates) or
restricted utilities; anything with batched ``value``/``gradient``/``hessian``
and an ``ndim`` attribute works.

Closed upper contour sets are not checked directly. For continuous, lower
unbounded functions they are equivalent to divergence to minus infinity along
every sequence approaching the boundary, and that is what
:func:`check_boundary_divergence` probes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import ExpectedUtility
from .blockarrow import INDETERMINATE, NOT_ND, BlockArrowHessian, is_negative_definite
from .core import GRADIENT_STEP, HESSIAN_STEP, log_uniform_points
from .errors import EUKitError

__all__ = [
    "CheckConfig",
    "Witness",
    "PropertyReport",
    "BoundarySequence",
    "CheckAborted",
    "check_monotonicity",
    "check_negative_definiteness",
    "check_boundary_divergence",
    "check_smoothness_proxy",
    "check_all",
    "default_sequences",
    "classify_sequence",
    "target_kind",
    "fmt_real",
]

PASS, FAIL = "pass", "fail"
PROPERTIES = ("smoothness", "monotonicity", "negative_definiteness", "boundary_divergence")
# RNG stream per property so that adding samples to one check leaves the others alone
_STREAM = {name: i for i, name in enumerate(PROPERTIES + ("quasiconcavity", "transfer", "search"))}


@dataclass(frozen=True)
class CheckConfig:
    samples: int = 32
    seed: int = 0
    low: float = 1e-3
    high: float = 1e3
    nd_tol: float | None = None
    fd_step: float = GRADIENT_STEP
    fd_hessian_step: float = HESSIAN_STEP
    thresholds: tuple = (1e1, 1e2, 1e3, 1e4)
    sequence_length: int = 60
    boundary_bases: int = 3
    boundary_low: float = 0.1
    boundary_high: float = 10.0
    unbounded_level: float = 1e3
    segment_points: int = 10
    max_witnesses: int = 5

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CheckConfig":
        d = dict(d)
        if "thresholds" in d:
            d["thresholds"] = tuple(float(t) for t in d["thresholds"])
        return cls(**d)


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class Witness:
    point: np.ndarray
    direction: np.ndarray | None = None
    residual: float = float("nan")
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "point": [fmt_real(v) for v in self.point],
            "direction": None if self.direction is None else [fmt_real(v) for v in self.direction],
            "residual": fmt_real(self.residual),
            "detail": self.detail,
        }


@dataclass
class PropertyReport:
    property: str
    target: str
    verdict: str
    witnesses: list = field(default_factory=list)
    samples_used: int = 0
    seed: int = 0
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict == FAIL and not self.witnesses:
            raise ValueError("a failing report needs a witness")
        if self.verdict == PASS:
            self.witnesses = []

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "record": "property",
            "property": self.property,
            "target": self.target,
            "verdict": self.verdict,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "samples_used": self.samples_used,
            "seed": self.seed,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


class CheckAborted(EUKitError):
    """A checker raised; ``partial`` holds the reports finished before it."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def target_kind(target) -> str:
    if isinstance(target, ExpectedUtility) or hasattr(target, "arrow_hessians"):
        return "expected"
    return "vnm"


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), _STREAM[stream]])


def _config(config, samples, seed) -> CheckConfig:
    config = config or CheckConfig()
    if samples is not None:
        config = replace(config, samples=int(samples))
    if seed is not None:
        config = replace(config, seed=int(seed))
    if config.samples < 1:
        raise ValueError("samples must be at least 1")
    return config


def _sample(target, config: CheckConfig, stream: str) -> np.ndarray:
    return log_uniform_points(_rng(config.seed, stream), config.samples, target.ndim, config.low, config.high)


def _evaluate(fn, X, what):
    try:
        return fn(X)
    except EUKitError:
        raise
    except Exception as exc:  # attach the batch that triggered it
        raise EUKitError(f"{what} evaluation failed near {X[0].tolist()}: {exc}") from exc


# ---------------------------------------------------------------------------
# Monotonicity
# ---------------------------------------------------------------------------

def check_monotonicity(target, samples=None, seed=None, config=None) -> PropertyReport:
    """Every gradient component strictly positive at every sampled point."""
    config = _config(config, samples, seed)
    X = _sample(target, config, "monotonicity")
    g = _evaluate(target.gradient, X, "gradient")
    witnesses = []
    for i in np.flatnonzero(np.any(~(g > 0), axis=1))[: config.max_witnesses]:
        comp = int(np.flatnonzero(~(g[i] > 0))[0])
        direction = np.zeros(target.ndim)
        direction[comp] = 1.0
        witnesses.append(Witness(X[i], direction, float(g[i, comp]), f"component {comp + 1}"))
    verdict = FAIL if witnesses else PASS
    return PropertyReport("monotonicity", target_kind(target), verdict, witnesses, len(X), config.seed)


# ---------------------------------------------------------------------------
# Negative definiteness
# ---------------------------------------------------------------------------

def arrow_hessians(target, X) -> list[BlockArrowHessian]:
    if hasattr(target, "arrow_hessians"):
        return target.arrow_hessians(X)
    H = _evaluate(target.hessian, X, "hessian")
    if target.ndim % 2:
        raise EUKitError("dense targets need an even number of coordinates")
    return [BlockArrowHessian.from_pair_hessian(h, target.ndim // 2) for h in H]


def check_negative_definiteness(target, samples=None, seed=None, tol=None, config=None) -> PropertyReport:
    """Hessian negative definite at every sampled point.

    Uses the block-arrow Schur test on a Jacobi-equilibrated Hessian; a vNM
    Hessian is the single-state arrow ``[[H00, H0s], [Hs0, Hss]]``.
    """
    config = _config(config, samples, seed)
    tol = config.nd_tol if tol is None else tol
    X = _sample(target, config, "negative_definiteness")
    fails, indet = [], []
    for x, h in zip(X, arrow_hessians(target, X)):
        r = is_negative_definite(h, tol, equilibrate=True)
        if r.decision == NOT_ND:
            fails.append(Witness(x, r.witness, float(r.curvature), f"pivot {r.min_pivot:.3g} at {r.stage}"))
        elif r.decision == INDETERMINATE:
            indet.append(Witness(x, r.witness, float(r.curvature), f"pivot {r.min_pivot:.3g} at {r.stage}"))
    if fails:
        verdict, witnesses = FAIL, fails
    elif indet:
        verdict, witnesses = INDETERMINATE, indet
    else:
        verdict, witnesses = PASS, []
    return PropertyReport(
        "negative_definiteness", target_kind(target), verdict, witnesses[: config.max_witnesses], len(X), config.seed
    )


# ---------------------------------------------------------------------------
# Boundary divergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySequence:
    """``x[n]`` equals ``base`` with the coordinates in ``indices`` scaled by 1/n, n = 1..length."""

    base: np.ndarray
    mode: str                   # single-coordinate-to-zero | all-coordinates-to-zero | coordinate-subset
    indices: tuple
    length: int = 60

    def points(self) -> np.ndarray:
        n = np.arange(1, self.length + 1, dtype=float)
        P = np.tile(self.base, (self.length, 1))
        idx = list(self.indices)
        P[:, idx] = self.base[idx][None, :] / n[:, None]
        if not np.all(P > 0):
            raise AssertionError("boundary sequence left the positive orthant")
        return P


def default_sequences(ndim: int, config: CheckConfig, rng: np.random.Generator) -> list[BoundarySequence]:
    seqs = []
    for _ in range(config.boundary_bases):
        base = log_uniform_points(rng, 1, ndim, config.boundary_low, config.boundary_high)[0]
        for i in range(ndim):
            seqs.append(BoundarySequence(base, "single-coordinate-to-zero", (i,), config.sequence_length))
        seqs.append(BoundarySequence(base, "all-coordinates-to-zero", tuple(range(ndim)), config.sequence_length))
        if ndim > 2:
            k = int(rng.integers(2, ndim))
            subset = tuple(sorted(int(i) for i in rng.choice(ndim, size=k, replace=False)))
            seqs.append(BoundarySequence(base, "coordinate-subset", subset, config.sequence_length))
    return seqs


def _slope(x, y) -> tuple[float, float]:
    beta, alpha = np.polyfit(x, y, 1)
    return float(beta), float(alpha)


DIVERGE, BOUNDED = "divergent", "bounded"


@dataclass(frozen=True)
class SequenceVerdict:
    status: str                 # divergent | bounded | undecided
    slope_log: float            # fitted slope vs ln n on the last window
    slope_linear: float         # fitted slope vs n on the last window
    slope_ratio: float          # last-window over first-window slope vs ln n
    crossings: tuple            # log10 of the index where each threshold is crossed
    tail_min: float


def classify_sequence(values, thresholds=(1e1, 1e2, 1e3, 1e4), window: int = 10) -> SequenceVerdict:
    """Trend analysis of ``F(x[n])`` for n = 1..N.

    Least squares on the last ``window`` values against ln n and against n.
    A strictly decreasing tail whose ln-n slope has not decayed relative to
    the first window (ratio >= 0.9) is certified divergent; threshold
    crossings beyond N are extrapolated along the ln-n fit, which is the
    slowest unbounded trend considered. A non-decreasing tail, or an ln-n
    slope that has decayed to at most half its initial value, certifies a
    bounded sequence.
    """
    v = np.asarray(values, dtype=float)
    N = len(v)
    n = np.arange(1, N + 1, dtype=float)
    last, first = slice(N - window, N), slice(0, window)
    tail = v[last]
    tail_min = float(np.min(v[np.isfinite(v)])) if np.any(np.isfinite(v)) else float("-inf")
    if np.any(np.isneginf(tail)):
        return SequenceVerdict(DIVERGE, -np.inf, -np.inf, np.inf, tuple(0.0 for _ in thresholds), tail_min)
    if not np.all(np.isfinite(v)):
        return SequenceVerdict("undecided", np.nan, np.nan, np.nan, (), tail_min)
    b_log, a_log = _slope(np.log(n[last]), tail)
    b_lin, _ = _slope(n[last], tail)
    b_first, _ = _slope(np.log(n[first]), v[first])
    ratio = b_log / b_first if b_first < 0 else np.nan
    diffs = np.diff(tail)

    crossings = []
    for K in thresholds:
        below = v < -K
        if below[-1]:
            # first index after which the values stay below -K
            k = N - int(np.argmin(below[::-1])) if not below.all() else 0
            crossings.append(float(np.log10(k + 1)))
        elif b_log < 0:
            crossings.append(float((-K - a_log) / b_log / np.log(10)))
        else:
            crossings.append(float("inf"))

    if np.all(diffs < 0) and b_log < 0 and np.isfinite(ratio) and ratio >= 0.9:
        status = DIVERGE
    elif np.all(diffs >= 0) or (np.isfinite(ratio) and b_log < 0 and ratio <= 0.5):
        status = BOUNDED
    else:
        status = "undecided"
    return SequenceVerdict(status, b_log, b_lin, float(ratio), tuple(crossings), tail_min)


def probe_lower_unbounded(value_fn, bases, level: float) -> bool:
    """Scale every coordinate by 10^-k (k = 1..300) and look for values below ``-level``."""
    t = 10.0 ** -np.arange(1, 301, dtype=float)
    for base in bases:
        with np.errstate(all="ignore"):
            vals = value_fn(base[None, :] * t[:, None])
        if np.any(vals < -level):
            return True
    return False


def check_boundary_divergence(target, sequences=None, config=None, seed=None) -> PropertyReport:
    """``F(x[n]) -> -inf`` along every boundary sequence, certified by trend fits.

    ``pass`` when every sequence is certified divergent, ``fail`` when some
    sequence is certified bounded (its tail minimum is the witness),
    ``indeterminate`` otherwise. Lower unboundedness, the hypothesis that
    links divergence to closed upper contour sets, is probed separately and
    only annotated.
    """
    config = _config(config, None, seed)
    rng = _rng(config.seed, "boundary_divergence")
    if sequences is None:
        sequences = default_sequences(target.ndim, config, rng)
    P = np.concatenate([s.points() for s in sequences])
    with np.errstate(divide="ignore", over="ignore"):
        values = _evaluate(target.value, P, "value")
    witnesses, undecided, verdicts = [], 0, []
    offset = 0
    for seq in sequences:
        vals = values[offset: offset + seq.length]
        offset += seq.length
        sv = classify_sequence(vals, config.thresholds)
        verdicts.append(sv)
        if sv.status == BOUNDED:
            direction = np.zeros(target.ndim)
            direction[list(seq.indices)] = -seq.base[list(seq.indices)]
            witnesses.append(Witness(
                seq.points()[-1], direction, sv.tail_min,
                f"{seq.mode} {list(seq.indices)}: values stay above {sv.tail_min:.6g} (slope ratio {sv.slope_ratio:.3g})",
            ))
        elif sv.status != DIVERGE:
            undecided += 1
    notes = []
    if witnesses:
        verdict = FAIL
    elif undecided:
        verdict = INDETERMINATE
        notes.append(f"{undecided} of {len(sequences)} sequences undecided")
    else:
        verdict = PASS
    if verdict != PASS:
        bases = list({s.base.tobytes(): s.base for s in sequences}.values())
        if not probe_lower_unbounded(target.value, bases, config.unbounded_level):
            notes.append(
                "hypotheses-not-established: no value below "
                f"-{config.unbounded_level:g} found, lower unboundedness not witnessed"
            )
    return PropertyReport(
        "boundary_divergence", target_kind(target), verdict, witnesses[: config.max_witnesses],
        len(P), config.seed, notes,
    )


# ---------------------------------------------------------------------------
# Smoothness proxy
# ---------------------------------------------------------------------------

def _log_fd_gradient(value_fn, Y, step):
    """Central differences of y -> F(exp(y))."""
    n, d = Y.shape
    E = np.eye(d) * step
    Yp = (Y[:, None, :] + E).reshape(-1, d)
    Ym = (Y[:, None, :] - E).reshape(-1, d)
    fp = value_fn(np.exp(Yp)).reshape(n, d)
    fm = value_fn(np.exp(Ym)).reshape(n, d)
    return (fp - fm) / (2.0 * step)


def _log_fd_hessian(value_fn, Y, step, outer):
    """Nested central differences in log coordinates, not symmetrized."""
    n, d = Y.shape
    E = np.eye(d) * outer
    gp = _log_fd_gradient(value_fn, (Y[:, None, :] + E).reshape(-1, d), step).reshape(n, d, d)
    gm = _log_fd_gradient(value_fn, (Y[:, None, :] - E).reshape(-1, d), step).reshape(n, d, d)
    return (gp - gm) / (2.0 * outer)


def check_smoothness_proxy(target, samples=None, seed=None, config=None) -> PropertyReport:
    """Finite-difference proxy for C^2; never a certificate.

    Derivatives are taken in log coordinates ``y = ln x`` so the stencil is
    relative to each coordinate. Checks (a) agreement of analytic and
    finite-difference first and second derivatives when the target has
    analytic ones, (b) symmetry of the finite-difference Hessian, (c) no
    jumps of the gradient along short log-spaced segments through each
    sample in every coordinate direction.
    """
    config = _config(config, samples, seed)
    X = _sample(target, config, "smoothness")
    Y = np.log(X)
    n, d = X.shape
    f = _evaluate(target.value, X, "value")
    fscale = 1.0 + np.abs(f)
    h, ho = config.fd_step, config.fd_hessian_step
    witnesses = []

    Gy = _log_fd_gradient(target.value, Y, h)
    Hy = _log_fd_hessian(target.value, Y, h, ho)
    if getattr(target, "provenance", "analytic") == "analytic":
        g = target.gradient(X)
        an_g = X * g
        err = np.abs(Gy - an_g).max(axis=1)
        bad = err > 1e-6 * np.abs(an_g).max(axis=1) + 1e-10 * fscale
        for i in np.flatnonzero(bad):
            witnesses.append(Witness(X[i], None, float(err[i]), "gradient disagrees with finite differences"))
        H = _dense_hessian(target, X)
        an_H = X[:, :, None] * H * X[:, None, :]
        idx = np.arange(d)
        an_H[:, idx, idx] += an_g
        Hs = 0.5 * (Hy + np.swapaxes(Hy, 1, 2))
        err = np.abs(Hs - an_H).max(axis=(1, 2))
        bad = err > 1e-4 * np.abs(an_H).max(axis=(1, 2)) + 1e-6 * fscale
        for i in np.flatnonzero(bad):
            witnesses.append(Witness(X[i], None, float(err[i]), "Hessian disagrees with finite differences"))

    defect = np.abs(Hy - np.swapaxes(Hy, 1, 2)).max(axis=(1, 2))
    bad = defect > 1e-4 * (np.abs(Hy).max(axis=(1, 2)) + 1e-2 * fscale)
    for i in np.flatnonzero(bad):
        witnesses.append(Witness(X[i], None, float(defect[i]), "finite-difference Hessian not symmetric"))

    # gradient continuity along segments y_j + [-ln 2, ln 2]
    m = config.segment_points
    offsets = np.linspace(-np.log(2.0), np.log(2.0), m)
    segs = np.repeat(Y[:, None, None, :], d, axis=1).repeat(m, axis=2)  # (n, d, m, d)
    segs[:, np.arange(d), :, np.arange(d)] += offsets
    flat = segs.reshape(-1, d)
    g_seg = (_log_fd_gradient(target.value, flat, h) / np.exp(flat)).reshape(n, d, m, d)
    jumps = np.abs(np.diff(g_seg, axis=2))                  # (n, d, m-1, d)
    # rounding floor of a central difference: eps |f| / (h x_k)
    noise = np.finfo(float).eps * fscale[:, None, None, None] / (h * np.exp(flat).reshape(n, d, m, d))
    scale = np.median(jumps, axis=2) + 1e-6 * np.abs(g_seg).max(axis=2) + 1e2 * noise.max(axis=2) + 1e-300
    ratio = jumps.max(axis=2) / scale                      # (n, d, d)
    for i, j in zip(*np.nonzero((ratio > 1e3).any(axis=2))):
        direction = np.zeros(d)
        direction[j] = 1.0
        witnesses.append(Witness(
            X[i], direction, float(ratio[i, j].max()), f"gradient jump along coordinate {int(j)}"
        ))

    verdict = FAIL if witnesses else PASS
    notes = ["proxy: finite-difference consistency, not a C2 certificate"]
    if getattr(target, "provenance", "analytic") != "analytic":
        notes.append("no analytic derivatives; agreement check skipped")
    return PropertyReport(
        "smoothness", target_kind(target), verdict, witnesses[: config.max_witnesses], n, config.seed, notes
    )


def _dense_hessian(target, X):
    dense = getattr(target, "dense_hessian", None) or target.hessian
    return np.asarray(dense(X))


# ---------------------------------------------------------------------------

def check_all(target, config: CheckConfig | None = None) -> list[PropertyReport]:
    """Smoothness, monotonicity, negative definiteness and boundary divergence, in that order."""
    config = config or CheckConfig()
    steps = (
        lambda: check_smoothness_proxy(target, config=config),
        lambda: check_monotonicity(target, config=config),
        lambda: check_negative_definiteness(target, config=config),
        lambda: check_boundary_divergence(target, config=config),
    )
    reports = []
    for step in steps:
        try:
            reports.append(step())
        except Exception as exc:
            raise CheckAborted(f"{PROPERTIES[len(reports)]} check aborted: {exc}", reports) from exc
    return reports
