import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eu_kit import (
    DimensionError, Dimensions, DomainError, RestrictedUtility, brute_force_oracle, builtin_family,
    check_negative_definiteness, lift_witness_u_to_U, make_weights, project_witness_U_to_u, quadratic_form,
    verify_equivalence,
)
from eu_kit.assembly import diagonal_embedding
from eu_kit.core import log_uniform_points
from eu_kit.theorem import select_nonzero_state

from conftest import FAMILIES, assemble

HALF = make_weights([0.5, 0.5])


def test_equivalence_log_additive():
    v = verify_equivalence(builtin_family("log-additive"), HALF, Dimensions(1, 2))
    assert v.consistent
    assert all(p == ("pass", "pass", "pass") for p in v.pairs.values())


def test_equivalence_sqrt_additive():
    v = verify_equivalence(builtin_family("sqrt-additive"), HALF, Dimensions(1, 2))
    assert v.consistent
    assert v.pairs["boundary_divergence"] == ("fail", "fail", "fail")


def test_equivalence_log_of_sum_lifts_witness():
    v = verify_equivalence(builtin_family("log-of-sum"), HALF, Dimensions(1, 2))
    assert v.consistent
    assert v.pairs["negative_definiteness"] == ("fail", "fail", "fail")
    lifted = v.lifted[0]
    d = [float(t) for t in lifted["direction"]]
    assert d[1] == d[2]
    assert abs(float(lifted["curvature_U"])) < 1e-12
    rec = json.loads(v.to_json())
    assert rec["schema_version"] == 1 and rec["consistent"] is True


def test_injected_fault_is_detected():
    v = verify_equivalence(builtin_family("log-additive"), HALF, Dimensions(1, 2), fault="sign-flip")
    assert not v.consistent
    assert {d.direction for d in v.discrepancies} >= {"u->U"}
    assert all(d.witness is not None for d in v.discrepancies)


def test_lift_examples():
    assert lift_witness_u_to_U([1.0, 0.0], Dimensions(1, 3)).tolist() == [1, 0, 0, 0]
    assert lift_witness_u_to_U([0.0, 1.0], Dimensions(1, 2)).tolist() == [0, 1, 1]
    with pytest.raises(DomainError):
        lift_witness_u_to_U([0.0, 0.0], Dimensions(1, 2))
    with pytest.raises(DimensionError):
        lift_witness_u_to_U([1.0, 0.0, 0.0], Dimensions(1, 2))
    _, U = assemble("log-of-sum", 1, 2, weights=HALF)
    v = lift_witness_u_to_U([1.0, -1.0], Dimensions(1, 2))
    assert quadratic_form(U.hessian(np.ones(3)), v) == 0.0


def test_project_examples():
    d = Dimensions(1, 2)
    assert project_witness_U_to_u([1.0, 0.0, 0.0], d, 1).tolist() == [1, 0]
    assert project_witness_U_to_u([1.0, 0.0, 0.0], d, 2).tolist() == [1, 0]
    assert project_witness_U_to_u([0.0, 0.0, 1.0], d, 1).tolist() == [0, 0]
    assert select_nonzero_state([0.0, 0.0, 1.0], d) == 2
    with pytest.raises(DomainError):
        select_nonzero_state([0.0, 0.0, 0.0], d)


@given(st.sampled_from(FAMILIES), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_lift_identity(name, C, S, seed):
    rng = np.random.default_rng(seed)
    dims = Dimensions(C, S)
    _, U = assemble(name, C, S)
    R = RestrictedUtility(U, dims)
    p = log_uniform_points(rng, 1, 2 * C)
    w = rng.normal(size=2 * C)
    lhs = quadratic_form(U.hessian(diagonal_embedding(p, dims)[0]), lift_witness_u_to_U(w, dims))
    Hr = R.hessian(p[0])
    rhs = w @ Hr @ w
    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), np.abs(w) @ np.abs(Hr) @ np.abs(w), 1e-300)


def test_decomposition_identity(rng):
    for _ in range(500):
        name = FAMILIES[rng.integers(len(FAMILIES))]
        C, S = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        u, U = assemble(name, C, S)
        x = log_uniform_points(rng, 1, U.ndim)[0]
        v = rng.normal(size=U.ndim)
        blocks_x, blocks_v = x.reshape(S + 1, C), v.reshape(S + 1, C)
        total, scale = 0.0, 0.0
        for s in range(1, S + 1):
            pair_x = np.concatenate([blocks_x[0], blocks_x[s]])
            pair_v = np.concatenate([blocks_v[0], blocks_v[s]])
            H = u.hessian(pair_x)
            total += U.weights.weights[s - 1] * (pair_v @ H @ pair_v)
            scale += U.weights.weights[s - 1] * (np.abs(pair_v) @ np.abs(H) @ np.abs(pair_v))
        assert abs(quadratic_form(U.hessian(x), v) - total) <= 1e-10 * max(abs(total), scale, 1e-300)


@pytest.mark.parametrize("name", ["log-of-sum", "linear", "linear-plus-log"])
def test_failing_U_projects_to_failing_u(name):
    u, U = assemble(name, 1, 3)
    r = check_negative_definiteness(U)
    assert r.verdict == "fail"
    wit = r.witnesses[0]
    v, x = wit.direction, wit.point
    C, S = 1, 3
    blocks = x.reshape(S + 1, C)
    terms = []
    for s in range(1, S + 1):
        w = project_witness_U_to_u(v, U.dims, s)
        H = u.hessian(np.concatenate([blocks[0], blocks[s]]))
        terms.append(w @ H @ w)
    best = int(np.argmax(terms))
    scale = np.abs(v) @ np.abs(U.dense_hessian(x)) @ np.abs(v)
    assert terms[best] >= -1e-9 * max(scale, 1e-300)
    assert np.any(project_witness_U_to_u(v, U.dims, best + 1) != 0)


@pytest.mark.parametrize("name,expected", [
    ("log-additive", {}),
    ("sqrt-additive", {"boundary_divergence": "fail"}),
    ("linear-plus-log", {"negative_definiteness": "fail", "boundary_divergence": "fail"}),
])
def test_brute_force_examples(name, expected):
    table = brute_force_oracle(builtin_family(name), HALF, Dimensions(1, 2), resolution=12)
    assert table.agree, table.format()
    for (target, prop), (oracle, pipeline) in table.rows.items():
        assert oracle == expected.get(prop, "pass")
    assert json.loads(table.to_json())["agree"] is True


def test_brute_force_limited_to_three_coordinates():
    with pytest.raises(DimensionError):
        brute_force_oracle(builtin_family("linear"), HALF, Dimensions(2, 1))


@pytest.mark.parametrize("name", FAMILIES)
def test_verdicts_consistent_small_grid(name):
    for C, S in [(1, 1), (2, 2)]:
        _, U = assemble(name, C, S)
        v = verify_equivalence(U.vnm, U.weights, U.dims)
        assert v.consistent, v.discrepancies
