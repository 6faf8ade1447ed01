"""Build an expected utility from a state-level utility and look at its pieces.

Run: python demos/assemble_expected_utility.py
"""
import numpy as np

from eu_kit import Dimensions, ExpectedUtility, RestrictedUtility, builtin_family, densify, make_weights

dims = Dimensions(commodities=1, states=3)
weights = make_weights([0.2, 0.3, 0.5])
u = builtin_family("log-additive")
U = ExpectedUtility(u, weights, dims)

# today's bundle first, then one bundle per state
x = np.array([1.0, 2.0, 0.5, 4.0])
print("U(x)      =", U.value(x))
print("by hand   =", sum(a * u.value(np.array([x[0], xs])) for a, xs in zip(weights.tolist(), x[1:])))
print("gradient  =", U.gradient(x))

# the Hessian couples today's bundle to every state, but no two states to each other
print("Hessian (dense view):")
print(np.array2string(densify(U.hessian(x)), precision=3, suppress_small=True))

# feeding the same bundle to every state recovers u exactly
R = RestrictedUtility(U, dims)
pair = np.array([1.5, 3.0])
print("u(1.5, 3) =", u.value(pair), " restricted U =", R.value(pair))
