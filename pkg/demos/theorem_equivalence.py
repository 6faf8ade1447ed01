"""Compare the verdicts for u and for U, and cross-check them on a brute-force grid.

Run: python demos/theorem_equivalence.py
"""
from eu_kit import Dimensions, brute_force_oracle, builtin_family, make_weights, verify_equivalence

weights = make_weights([0.25, 0.75])
dims = Dimensions(1, 2)
for name in ("log-additive", "crra", "sqrt-additive", "linear"):
    u = builtin_family(name)
    verdict = verify_equivalence(u, weights, dims)
    row = "  ".join(f"{prop[:12]}={pair[0]}/{pair[1]}" for prop, pair in verdict.pairs.items())
    print(f"{name:<14} consistent={verdict.consistent}  {row}")
    for lift in verdict.lifted[:1]:
        print("   a failing direction for u, carried over to U:", lift)

print()
print("grid oracle on 20^3 points for log-of-sum:")
print(brute_force_oracle(builtin_family("log-of-sum"), weights, dims).format())

# a deliberately broken expected utility is caught
broken = verify_equivalence(builtin_family("log-additive"), weights, dims, fault="sign-flip")
print("sign-flipped state gradient -> consistent =", broken.consistent)
for d in broken.discrepancies:
    print("  ", d.property, d.direction, d.detail)
