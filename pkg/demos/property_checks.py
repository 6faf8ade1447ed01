"""Run the four property checks on a state-level utility and on its expected utility.

Run: python demos/property_checks.py
"""
from eu_kit import CheckConfig, Dimensions, ExpectedUtility, builtin_family, check_all, make_weights

weights = make_weights([0.5, 0.5])
for name in ("log-additive", "sqrt-additive", "log-of-sum"):
    u = builtin_family(name)
    U = ExpectedUtility(u, weights, Dimensions(1, 2))
    print(f"== {name}")
    for label, target in (("u", u), ("U", U)):
        for report in check_all(target, CheckConfig(seed=1)):
            first = report.witnesses[0].detail if report.witnesses else ""
            print(f"  {label} {report.property:<22} {report.verdict:<14} {first}")

# sqrt stays bounded near the boundary, so its upper contour sets are not closed;
# log-of-sum is monotone and smooth but has a flat direction, so it is not strictly concave
