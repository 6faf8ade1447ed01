"""Decide negative definiteness of a block-arrow Hessian without forming it.

Run: python demos/block_arrow_nd.py [--bench]
"""
import argparse

import numpy as np

from eu_kit import Dimensions, densify, is_negative_definite
from eu_kit.blockarrow import bench_nd, format_bench_table, random_arrow

parser = argparse.ArgumentParser()
parser.add_argument("--bench", action="store_true", help="also time structured vs dense (about a minute)")
args = parser.parse_args()

rng = np.random.default_rng(3)
for _ in range(6):
    h = random_arrow(rng, Dimensions(2, 5))
    res = is_negative_definite(h)
    top = np.linalg.eigvalsh(densify(h)).max()
    line = f"structured: {res.decision:<18} largest eigenvalue {top:+.3f}"
    if not res.is_nd:
        # the witness is a direction of non-negative curvature, found at the stage that broke
        line += f"   witness from {res.stage}, curvature {res.curvature:+.3f}"
    print(line)

if args.bench:
    records, fits = bench_nd(states=(4, 16, 64, 256), commodities=(1, 16), repetitions=3)
    print(format_bench_table(records, fits))
else:
    print("pass --bench to time the structured elimination against dense eigenvalues")
