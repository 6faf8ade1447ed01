"""``eu-kit``: property checks, equivalence sweeps, tangent-curvature search and benchmarks.

Every command writes JSONL (one header record echoing the effective
configuration, then result records) to standard output or ``--out``.
Output is byte-identical for equal configuration and seed whatever the
thread count. Exit codes: 0 success, 1 inconsistency between u and U
(a bug), 2 a property fails, 3 only indeterminate verdicts, 64 bad
configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import __version__
from .assembly import ExpectedUtility
from .blockarrow import bench_nd, format_bench_table
from .core import BUILTIN_FAMILIES, Dimensions, builtin_family, make_weights
from .errors import ConfigError, EUKitError
from .expr import expression_oracle
from .properties import FAIL, INDETERMINATE, CheckConfig, check_all
from .quasiconcavity import blend_family, cobb_douglas_family, search_counterexample
from .theorem import brute_force_oracle, verify_equivalence

EXIT_OK, EXIT_INCONSISTENT, EXIT_FAIL, EXIT_INDETERMINATE, EXIT_CONFIG = 0, 1, 2, 3, 64
SEARCH_FAMILIES = {"blend": blend_family, "cobb-douglas": cobb_douglas_family}
SWEEP_COMMODITIES = (1, 2, 3)
SWEEP_STATES = (1, 2, 4)


@dataclass
class RunConfig:
    commodities: int = 1
    states: int = 2
    weights: object = "uniform"
    family: str = "log-additive"
    params: list = field(default_factory=list)
    expr: str | None = None
    seed: int = 0
    samples: int = 32
    nd_tol: float | None = None
    fd_step: float = 1e-5
    fd_hessian_step: float = 1e-4
    thresholds: list = field(default_factory=lambda: [1e1, 1e2, 1e3, 1e4])
    sweep: bool = False
    brute_force: bool = False
    resolution: int = 20
    budget: int = 100_000
    points_per_cell: int = 16
    bench_states: list = field(default_factory=lambda: [4, 16, 64, 256])
    bench_commodities: list = field(default_factory=lambda: [1, 4, 16])
    repetitions: int = 5
    omit_timings: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"{key}: unknown configuration field")
        return cls(**data).validated()

    def validated(self) -> "RunConfig":
        def need(ok, name, what):
            if not ok:
                raise ConfigError(f"{name}: {what}")

        for name in ("commodities", "states", "samples", "resolution", "budget", "points_per_cell", "repetitions"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, name, "must be a positive integer")
        need(isinstance(self.seed, int) and not isinstance(self.seed, bool) and 0 <= self.seed < 2**64,
             "seed", "must be an unsigned 64-bit integer")
        for name in ("fd_step", "fd_hessian_step"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and v > 0, name, "must be positive")
        need(self.nd_tol is None or (isinstance(self.nd_tol, (int, float)) and self.nd_tol > 0),
             "nd_tol", "must be positive")
        need(isinstance(self.thresholds, list) and len(self.thresholds) > 0
             and all(isinstance(t, (int, float)) and t > 0 for t in self.thresholds),
             "thresholds", "must be a list of positive numbers")
        need(isinstance(self.params, list) and all(isinstance(p, (int, float)) for p in self.params),
             "params", "must be a list of numbers")
        need(self.weights == "uniform" or (isinstance(self.weights, list)
                                           and all(isinstance(a, (int, float)) for a in self.weights)),
             "weights", "must be 'uniform' or a list of numbers")
        for name in ("bench_states", "bench_commodities"):
            v = getattr(self, name)
            need(isinstance(v, list) and v and all(isinstance(k, int) and k >= 1 for k in v), name,
                 "must be a list of positive integers")
        need(isinstance(self.family, str), "family", "must be a name")
        need(self.expr is None or isinstance(self.expr, str), "expr", "must be a string")
        return self

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.commodities, self.states)

    def check_config(self) -> CheckConfig:
        return CheckConfig(samples=self.samples, seed=self.seed, nd_tol=self.nd_tol, fd_step=self.fd_step,
                           fd_hessian_step=self.fd_hessian_step, thresholds=tuple(float(t) for t in self.thresholds))


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _csv_floats(name):
    def parse(text):
        try:
            return [float(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: expected comma-separated numbers") from None
    return parse


def _csv_ints(name):
    def parse(text):
        try:
            return [int(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: expected comma-separated integers") from None
    return parse


def _weights(text):
    return "uniform" if text.strip() == "uniform" else _csv_floats("weights")(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON configuration file; flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="write JSONL here instead of standard output")
    g.add_argument("--threads", type=int, help="worker threads (default: $EU_KIT_THREADS or 1)")
    m = common.add_argument_group("model")
    m.add_argument("--family", help=f"one of {', '.join(BUILTIN_FAMILIES)}")
    m.add_argument("--params", type=_csv_floats("params"), help="comma-separated family parameters")
    m.add_argument("--expr", help="utility expression over x0_i, xs_i (x, y when C=1)")
    m.add_argument("--C", dest="commodities", type=int, help="commodities per bundle")
    m.add_argument("--S", dest="states", type=int, help="number of states")
    m.add_argument("--weights", type=_weights, help="comma-separated probabilities or 'uniform'")
    m.add_argument("--samples", type=int)
    m.add_argument("--nd-tol", dest="nd_tol", type=float)
    m.add_argument("--fd-step", dest="fd_step", type=float)
    m.add_argument("--fd-hessian-step", dest="fd_hessian_step", type=float)
    m.add_argument("--thresholds", type=_csv_floats("thresholds"))

    parser = _Parser(prog="eu-kit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eu-kit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("check", parents=[common], argument_default=argparse.SUPPRESS,
                   help="run the property checks on u and on U")

    vt = sub.add_parser("verify-theorem", parents=[common], argument_default=argparse.SUPPRESS,
                        help="compare verdicts on u, U and restrict(U)")
    vt.add_argument("--sweep", action="store_true", default=argparse.SUPPRESS,
                    help="all builtin families x C in {1,2,3} x S in {1,2,4} x three weight vectors")
    vt.add_argument("--brute-force", dest="brute_force", action="store_true", default=argparse.SUPPRESS,
                    help="also run the grid oracle where there are at most three coordinates")
    vt.add_argument("--resolution", type=int)
    vt.add_argument("--inject-sign-flip", dest="inject_sign_flip", action="store_true", default=False,
                    help=argparse.SUPPRESS)

    sq = sub.add_parser("search-qc", parents=[common], argument_default=argparse.SUPPRESS,
                        help="search for tangent-curvature failures of U")
    sq.add_argument("--budget", type=int, help="maximum number of sampled points of U")
    sq.add_argument("--points-per-cell", dest="points_per_cell", type=int)

    bn = sub.add_parser("bench", parents=[common], argument_default=argparse.SUPPRESS,
                        help="structured vs dense negative-definiteness timing")
    bn.add_argument("--bench-states", dest="bench_states", type=_csv_ints("bench-states"))
    bn.add_argument("--bench-commodities", dest="bench_commodities", type=_csv_ints("bench-commodities"))
    bn.add_argument("--repetitions", type=int)
    bn.add_argument("--omit-timings", dest="omit_timings", action="store_true", default=argparse.SUPPRESS,
                    help="leave timing fields out of the JSONL (for reproducibility checks)")
    return parser


RUNTIME_KEYS = ("command", "config", "out", "threads", "inject_sign_flip")


def resolve_config(ns: argparse.Namespace) -> tuple[RunConfig, dict]:
    """Defaults, then the JSON file, then flags. Returns the config and the runtime options."""
    args = vars(ns)
    data = {}
    if args.get("config"):
        try:
            with open(args["config"]) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args['config']}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
    data.update({k: v for k, v in args.items() if k not in RUNTIME_KEYS})
    cfg = RunConfig.from_dict(data)
    threads = args.get("threads")
    if threads is None:
        env = os.environ.get("EU_KIT_THREADS", "1")
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"threads: EU_KIT_THREADS={env!r} is not an integer") from None
    if threads < 1:
        raise ConfigError("threads: must be at least 1")
    explicit = set(data)
    runtime = {"command": args["command"], "out": args.get("out"), "threads": threads,
               "inject_sign_flip": args.get("inject_sign_flip", False), "explicit": explicit}
    return cfg, runtime


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------

def make_vnm(cfg: RunConfig, commodities: int | None = None):
    C = commodities or cfg.commodities
    if cfg.expr is not None:
        return expression_oracle(cfg.expr, C, cfg.fd_step, cfg.fd_hessian_step)
    if cfg.family not in BUILTIN_FAMILIES:
        raise ConfigError(f"family: unknown family {cfg.family!r}")
    try:
        return builtin_family(cfg.family, tuple(cfg.params), C)
    except ConfigError as exc:
        raise ConfigError(f"params: {exc}") from None


def make_weight_vector(cfg: RunConfig, states: int | None = None):
    S = states or cfg.states
    raw = np.full(S, 1.0 / S) if cfg.weights == "uniform" else np.asarray(cfg.weights, dtype=float)
    if len(raw) != S:
        raise ConfigError(f"weights: {len(raw)} values for {S} states")
    try:
        return make_weights(raw)
    except EUKitError as exc:
        raise ConfigError(f"weights: {exc}") from None


def sweep_weights(S: int):
    """Uniform, proportional to 1..S, and proportional to 2^-s."""
    ramp = np.arange(1, S + 1, dtype=float)
    geo = 2.0 ** -ramp
    return [make_weights(np.full(S, 1.0 / S)), make_weights(ramp / ramp.sum()), make_weights(geo / geo.sum())]


def _pmap(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _header(command: str, cfg: RunConfig, **extra) -> dict:
    rec = {"schema_version": 1, "record": "header", "command": command, "version": __version__,
           "config": cfg.to_dict()}
    rec.update(extra)
    return rec


def cmd_check(cfg: RunConfig, threads: int = 1):
    vnm = make_vnm(cfg)
    U = ExpectedUtility(vnm, make_weight_vector(cfg), cfg.dims)
    extra = {}
    if cfg.expr is not None:
        extra["caveat"] = "user expression: finite-difference derivatives only, no analytic cross-check"
    records = [_header("check", cfg, **extra)]
    ccfg = cfg.check_config()
    for reports in _pmap(lambda t: check_all(t, ccfg), [vnm, U], threads):
        records.extend(r.to_record() for r in reports)
    verdicts = [r["verdict"] for r in records[1:]]
    if FAIL in verdicts:
        code = EXIT_FAIL
    elif INDETERMINATE in verdicts:
        code = EXIT_INDETERMINATE
    else:
        code = EXIT_OK
    summary = [f"{r['target']:9s} {r['property']:22s} {r['verdict']}" for r in records[1:]]
    return records, code, "\n".join(summary)


def theorem_cells(cfg: RunConfig):
    if not cfg.sweep:
        return [(cfg.family, cfg.commodities, cfg.states, make_weight_vector(cfg))]
    return [(name, C, S, w) for name in BUILTIN_FAMILIES for C in SWEEP_COMMODITIES for S in SWEEP_STATES
            for w in sweep_weights(S)]


def cmd_verify_theorem(cfg: RunConfig, threads: int = 1, inject_sign_flip: bool = False):
    if cfg.expr is not None:
        raise ConfigError("expr: verify-theorem works on builtin families only")
    cells = theorem_cells(cfg)
    ccfg = cfg.check_config()
    fault = "sign-flip" if inject_sign_flip else None

    def run(cell):
        name, C, S, w = cell
        sub = replace(cfg, family=name, commodities=C, states=S, params=[] if cfg.sweep else cfg.params)
        vnm = make_vnm(sub)
        dims = Dimensions(C, S)
        verdict = verify_equivalence(vnm, w, dims, ccfg, fault=fault)
        table = None
        if cfg.brute_force and dims.total <= 3:
            pipeline = {
                "vnm": {k: v[0] for k, v in verdict.pairs.items()},
                "expected": {k: v[1] for k, v in verdict.pairs.items()},
            }
            table = brute_force_oracle(vnm, w, dims, cfg.resolution, config=ccfg, pipeline=pipeline)
        return verdict, table

    results = _pmap(run, cells, threads)
    records = [_header("verify-theorem", cfg, cells=len(cells))]
    lines = []
    consistent = True
    for verdict, table in results:
        records.append(verdict.to_record())
        consistent &= verdict.consistent
        tag = "consistent" if verdict.consistent else "DISCREPANCY"
        lines.append(f"{verdict.family:16s} C={verdict.dims.commodities} S={verdict.dims.states} "
                     f"a={','.join(f'{a:.3g}' for a in verdict.weights):24s} {tag}")
        if table is not None:
            records.append(table.to_record())
            consistent &= table.agree
            lines.append("  grid oracle: " + ("agrees" if table.agree else f"DIFFERS {table.disagreements()}"))
    records.append({"schema_version": 1, "record": "summary", "cells": len(cells), "consistent": consistent})
    return records, EXIT_OK if consistent else EXIT_INCONSISTENT, "\n".join(lines)


def search_families(cfg: RunConfig, explicit=frozenset()):
    if cfg.expr is not None:
        raise ConfigError("expr: search-qc works on named families only")
    if "family" not in explicit:
        return None
    if cfg.family in SEARCH_FAMILIES:
        if len(cfg.params) != 2:
            raise ConfigError(f"params: {cfg.family} takes two parameters")
        try:
            SEARCH_FAMILIES[cfg.family](*cfg.params)
        except EUKitError as exc:
            raise ConfigError(f"params: {exc}") from None
        return [(cfg.family, cfg.family, tuple(cfg.params))]
    make_vnm(cfg)
    return [("builtin", cfg.family, tuple(cfg.params))]


def cmd_search_qc(cfg: RunConfig, threads: int = 1, explicit=frozenset()):
    """Default grid unless a family is named; ``explicit`` holds the keys the user set."""
    families = search_families(cfg, explicit)
    if families is None:
        dims_grid = ((1, 2), (1, 3), (2, 2))
    else:
        dims_grid = ((cfg.commodities, cfg.states),)
    weight_grid = None
    if "weights" in explicit:
        weight_grid = [tuple(make_weight_vector(cfg).tolist())]
    result = search_counterexample(families, dims_grid, weight_grid, cfg.points_per_cell, cfg.seed, cfg.budget,
                                   config=replace(cfg.check_config(), samples=16), threads=threads)
    records = [_header("search-qc", cfg)]
    records.extend(c.to_record() for c in result.candidates)
    records.append(result.summary_record())
    text = (f"{len(result.candidates)} candidates in {result.cells} cells "
            f"({result.cells_skipped} skipped, {result.evaluations}/{result.budget} points"
            f"{', budget exhausted' if result.budget_exhausted else ''})")
    return records, EXIT_OK, text


def cmd_bench(cfg: RunConfig, threads: int = 1):
    records, fits = bench_nd(tuple(cfg.bench_states), tuple(cfg.bench_commodities), cfg.repetitions, cfg.seed)
    out = [_header("bench", cfg)]
    for r in records:
        r = dict(r)
        if cfg.omit_timings:
            r.pop("median_seconds", None)
        out.append(r)
    for (C, method), k in sorted(fits.items()):
        rec = {"schema_version": 1, "record": "bench-fit", "commodities": C, "method": method}
        if not cfg.omit_timings:
            rec["exponent"] = k
        out.append(rec)
    return out, EXIT_OK, format_bench_table(records, fits)


COMMANDS = {"check": cmd_check, "verify-theorem": cmd_verify_theorem, "search-qc": cmd_search_qc, "bench": cmd_bench}


def _dumps(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg, runtime = resolve_config(ns)
        command = runtime["command"]
        kwargs = {"threads": runtime["threads"]}
        if command == "verify-theorem":
            kwargs["inject_sign_flip"] = runtime["inject_sign_flip"]
        elif command == "search-qc":
            kwargs["explicit"] = runtime["explicit"]
        records, code, text = COMMANDS[command](cfg, **kwargs)
    except ConfigError as exc:
        print(f"eu-kit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    payload = _dumps(records)
    if runtime["out"]:
        with open(runtime["out"], "w") as fh:
            fh.write(payload)
        print(text)
    else:
        sys.stdout.write(payload)
        print(text, file=sys.stderr)
    return code


