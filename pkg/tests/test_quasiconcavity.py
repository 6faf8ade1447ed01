import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eu_kit import (
    Dimensions, ExpectedUtility, builtin_family, check_diff_strict_quasiconcavity, check_negative_definiteness,
    decompose_tangency, make_weights, search_counterexample, verify_transfer_U_to_u,
)
from eu_kit.core import central_gradient, central_hessian, log_uniform_points
from eu_kit.quasiconcavity import blend_family, cobb_douglas_family, tangent_probe

from conftest import FAMILIES, assemble

HALF = make_weights([0.5, 0.5])


def per_state_tangent(u, U, x, rng):
    """A direction whose every pair (v0, v_s) is tangent to Du at (x0, x_s)."""
    C, S = U.dims.commodities, U.dims.states
    blocks = x.reshape(S + 1, C)
    v0 = rng.normal(size=C)
    parts = [v0]
    for s in range(1, S + 1):
        g = u.gradient(np.concatenate([blocks[0], blocks[s]]))
        gs = g[C:]
        # minimum-norm solution of gs . vs = -g0 . v0 plus a random part orthogonal to gs
        vs = -(g[:C] @ v0) * gs / (gs @ gs)
        z = rng.normal(size=C)
        vs = vs + z - (z @ gs) * gs / (gs @ gs)
        parts.append(vs)
    return np.concatenate(parts)


def test_linear_plus_log_is_tangent_concave_but_not_concave():
    u = builtin_family("linear-plus-log")
    assert check_diff_strict_quasiconcavity(u).verdict == "pass"
    assert check_negative_definiteness(u).verdict == "fail"
    for y in (0.1, 1.0, 7.0):
        x = np.array([2.0, y])
        p = tangent_probe(x, u.gradient(x), u.hessian(x))
        w = np.array([1.0, -y])
        assert w @ u.hessian(x) @ w == pytest.approx(-1.0)
        assert p.max_eigenvalue == pytest.approx(-1.0 / (1.0 + y * y))


def test_linear_fails_with_flat_direction():
    u = builtin_family("linear")
    x = np.ones(2)
    p = tangent_probe(x, u.gradient(x), u.hessian(x))
    assert p.max_eigenvalue == 0.0
    assert abs(p.direction[0] + p.direction[1]) < 1e-12
    r = check_diff_strict_quasiconcavity(u)
    assert r.verdict == "fail"
    assert r.witnesses[0].direction is not None


def test_log_additive_passes():
    assert check_diff_strict_quasiconcavity(builtin_family("log-additive", (), 2)).verdict == "pass"


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_probe_invariants(d_half, seed):
    rng = np.random.default_rng(seed)
    d = 2 * d_half
    g = rng.normal(size=d)
    M = rng.normal(size=(d, d))
    H = M + M.T
    p = tangent_probe(np.ones(d), g, H)
    B = p.basis
    assert B.shape == (d, d - 1)
    assert np.abs(g @ B).max() <= 1e-12 * np.linalg.norm(g) * 10
    np.testing.assert_allclose(B.T @ B, np.eye(d - 1), atol=1e-12)
    np.testing.assert_allclose(p.projected_hessian, B.T @ H @ B, atol=1e-12)
    np.testing.assert_array_equal(p.projected_hessian, p.projected_hessian.T)


@pytest.mark.parametrize("name", FAMILIES)
@pytest.mark.parametrize("C,S", [(1, 2), (2, 3)])
def test_implication_chain(name, C, S):
    u, U = assemble(name, C, S)
    for target in (u, U):
        if check_negative_definiteness(target).verdict == "pass":
            assert check_diff_strict_quasiconcavity(target).verdict == "pass"


def test_transfer_examples():
    _, U = assemble("log-additive", 1, 3)
    assert verify_transfer_U_to_u(U, U.dims).verdict == "pass"
    _, U = assemble("linear-plus-log", 1, 2)
    assert check_diff_strict_quasiconcavity(U).verdict == "pass"
    assert verify_transfer_U_to_u(U, U.dims).verdict == "pass"
    _, U = assemble("linear", 1, 2)
    r = verify_transfer_U_to_u(U, U.dims)
    assert r.verdict == "indeterminate"
    assert r.notes[0].startswith("precondition-failed")


def test_linear_plus_log_with_two_commodities_fails():
    # the linear x0 part is flat along (1, -1, 0, 0), which is tangent
    u = builtin_family("linear-plus-log", (), 2)
    x = np.ones(4)
    v = np.array([1.0, -1.0, 0.0, 0.0])
    assert u.gradient(x) @ v == 0 and v @ u.hessian(x) @ v == 0
    assert check_diff_strict_quasiconcavity(u).verdict == "fail"


def test_decompose_per_state_and_unresolved(rng):
    u, U = assemble("log-additive", 1, 2, weights=HALF)
    x = np.array([1.0, 2.0, 0.5])
    v = per_state_tangent(u, U, x, rng)
    dec = decompose_tangency(v, x, u, HALF)
    assert dec.regime == "per-state-tangent"
    assert v @ U.dense_hessian(x) @ v < 0
    # r1 = v0 + v1 / 2 = 1, r2 = v0 + 2 v2 = -1: cancels in the aggregate only
    v = np.array([0.0, 2.0, -0.5])
    dec = decompose_tangency(v, x, u, HALF)
    np.testing.assert_allclose(dec.residuals, [1.0, -1.0])
    assert dec.regime == "unresolved-regime"
    assert decompose_tangency(np.array([1.0, 0, 0]), x, u, HALF).regime == "not-tangent"


@pytest.mark.parametrize("name", ["log-additive", "crra", "sqrt-additive", "linear-plus-log"])
def test_per_state_tangent_directions_have_negative_curvature(name, rng):
    u, U = assemble(name, 1, 3)
    for x in log_uniform_points(rng, 50, U.ndim):
        v = per_state_tangent(u, U, x, rng)
        dec = decompose_tangency(v, x, u, U.weights)
        scale = np.abs(v) @ np.abs(U.dense_hessian(x)) @ np.abs(v)
        if dec.regime == "per-state-tangent":
            assert v @ U.dense_hessian(x) @ v < 1e-12 * scale


def test_decomposition_identity_random(rng):
    for _ in range(100):
        name = FAMILIES[rng.integers(len(FAMILIES))]
        C, S = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        u, U = assemble(name, C, S)
        x = log_uniform_points(rng, 1, U.ndim)[0]
        v = rng.normal(size=U.ndim)
        dec = decompose_tangency(v, x, u, U.weights)
        assert abs(dec.aggregate - U.gradient(x) @ v) <= 1e-12 * np.abs(U.gradient(x)).max() * np.abs(v).max() * 10


def test_search_examples():
    for fam in ("linear-plus-log", "log-additive"):
        res = search_counterexample(families=[("builtin", fam, ())], dims_grid=((1, 2), (1, 3)))
        assert res.candidates == []
        assert res.cells_skipped == 0


def test_search_skips_families_failing_the_certificate():
    res = search_counterexample(families=[("builtin", "linear", ())], dims_grid=((1, 2),))
    assert res.cells_skipped == res.cells and res.evaluations == 0


def test_cobb_douglas_candidates_reverify():
    u = cobb_douglas_family(1.0, 2.0)
    assert check_diff_strict_quasiconcavity(u).verdict == "pass"
    U = ExpectedUtility(u, HALF, Dimensions(1, 2))
    assert check_diff_strict_quasiconcavity(U).verdict == "fail"
    res = search_counterexample(families=[("cobb-douglas", "cobb-douglas", (1.0, 2.0))], dims_grid=((1, 2),))
    assert res.candidates
    for c in res.candidates:
        g = U.gradient(c.point)
        assert c.gradient_residual <= 1e-10 * np.linalg.norm(g) * np.linalg.norm(c.direction)
        assert abs(c.dense_curvature - c.curvature_value) <= 1e-8 * abs(c.curvature_value)
        assert c.u_certificate < 0
        assert c.regime in ("unresolved-regime", "not-tangent", "per-state-tangent")
        rec = json.loads(c.to_json())
        assert rec["schema_version"] == 1 and rec["family"] == "cobb-douglas"


def test_search_budget_is_honored():
    res = search_counterexample(budget=500, points_per_cell=16)
    assert res.budget_exhausted
    assert 0.99 * 500 <= res.evaluations <= 500


def test_search_is_thread_independent():
    fams = [("cobb-douglas", "cobb-douglas", (1.0, 2.0)), ("blend", "blend", (1.0, 0.1))]
    a = search_counterexample(families=fams, seed=5)
    b = search_counterexample(families=fams, seed=5, threads=4)
    assert [c.to_json() for c in a.candidates] == [c.to_json() for c in b.candidates]
    assert a.summary_record() == b.summary_record()


@pytest.mark.parametrize("factory,params", [(blend_family, (0.5, 0.2)), (cobb_douglas_family, (0.7, 1.3))])
def test_search_family_derivatives(factory, params):
    u = factory(*params, commodities=2)
    X = log_uniform_points(np.random.default_rng(0), 10, 4, 0.3, 3.0)
    np.testing.assert_allclose(central_gradient(u.value, X), u.gradient(X), rtol=1e-7)
    np.testing.assert_allclose(central_hessian(u.value, X), u.hessian(X), rtol=1e-4, atol=1e-5)


def test_search_family_domain():
    with pytest.raises(ValueError):
        blend_family(0.0, 1.0)
    with pytest.raises(ValueError):
        cobb_douglas_family(1.0, -1.0)
