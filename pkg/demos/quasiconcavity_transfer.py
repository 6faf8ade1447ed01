"""Tangent-space curvature, transfer from U back to u, and the search for a gap.

Run: python demos/quasiconcavity_transfer.py
"""
import numpy as np

from eu_kit import (
    Dimensions, ExpectedUtility, builtin_family, check_diff_strict_quasiconcavity, check_negative_definiteness,
    decompose_tangency, make_weights, search_counterexample, verify_transfer_U_to_u,
)

weights = make_weights([0.5, 0.5])
dims = Dimensions(1, 2)

# x + ln y: curved along every level set, yet linear in x, so not concave
u = builtin_family("linear-plus-log")
U = ExpectedUtility(u, weights, dims)
print("u concave:", check_negative_definiteness(u).verdict,
      " u tangent-concave:", check_diff_strict_quasiconcavity(u).verdict)
print("U tangent-concave:", check_diff_strict_quasiconcavity(U).verdict,
      " transfer to u:", verify_transfer_U_to_u(U, dims).verdict)

# a direction tangent to the level set of U need not be tangent state by state
log_u = builtin_family("log-additive")
x = np.array([1.0, 2.0, 0.5])
for v in (np.array([0.0, 2.0, -0.5]), np.array([1.0, -2.0, -0.5])):
    dec = decompose_tangency(v, x, log_u, weights)
    print(f"v={v}: per-state residuals {np.round(dec.residuals, 3)} -> {dec.regime}")

print()
result = search_counterexample(budget=20000)
print(f"default grid: {result.cells} cells, {result.evaluations} evaluations, {len(result.candidates)} candidates")

# Cobb-Douglas u is tangent-concave but its expected utility is not: the search finds it
cd = search_counterexample(families=[("cobb-douglas", "cobb-douglas", (1.0, 2.0))], dims_grid=((1, 2),), budget=2000)
best = cd.candidates[0]
print(f"cobb-douglas: {len(cd.candidates)} candidates, first at x={np.round(best.point, 4)} "
      f"curvature {float(best.curvature_value):+.3e} regime {best.regime}")
