import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from geomech.liegroup import (FactorizationOutsideBigCell, adjoint, bracket, coadjoint, dexp_left, dexp_right,
                              dexp_right_inv, dual_minus, dual_plus, factorize, is_kminus_group, is_kplus_group,
                              mat_exp, pairing, proj_minus, proj_plus, random_sl, sl_basis)

E = np.array([[0.0, 1.0], [0.0, 0.0]])
F = E.T
H = np.diag([1.0, -1.0])
seeds = st.integers(0, 2 ** 32 - 1)
dims = st.sampled_from([2, 3, 4])


def test_exp_examples():
    assert np.array_equal(mat_exp(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(mat_exp(E), [[1, 1], [0, 1]], atol=1e-15)
    assert mat_exp(E)[1, 0] == 0.0


@given(seeds, dims, st.floats(0.01, 8.0))
def test_exp_matches_scipy_and_inverts(seed, d, scale):
    x = random_sl(np.random.default_rng(seed), d, scale)
    g = mat_exp(x)
    assert np.allclose(g, expm(x), rtol=1e-12, atol=1e-12 * np.abs(g).max())
    if scale <= 1:
        assert np.max(np.abs(g @ mat_exp(-x) - np.eye(d))) <= 1e-12


def test_exp_of_triangular_stays_triangular(rng):
    x = np.tril(rng.normal(size=(3, 3)))
    assert not np.triu(mat_exp(x), 1).any()
    assert not np.tril(mat_exp(np.triu(x.T, 1)), -1).any()


def test_exp_overflow():
    with pytest.raises(OverflowError):
        mat_exp(np.diag([np.inf, 0.0]))
    with pytest.raises(OverflowError):
        mat_exp(np.diag([1e4, -1e4]))


def test_bracket_examples():
    assert not bracket(H, H).any()
    assert np.array_equal(bracket(E, F), H)


@given(seeds, dims)
def test_jacobi_and_adjoint_homomorphism(seed, d):
    rng = np.random.default_rng(seed)
    x, y, z = (random_sl(rng, d) for _ in range(3))
    jac = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))
    assert np.max(np.abs(jac)) <= 1e-12
    g = mat_exp(random_sl(rng, d, 0.3))
    assert np.allclose(adjoint(g, bracket(x, y)), bracket(adjoint(g, x), adjoint(g, y)), atol=1e-12)
    assert pairing(adjoint(g, x), adjoint(g, y)) == pytest.approx(pairing(x, y), abs=1e-12)
    lam = random_sl(rng, d)
    assert pairing(coadjoint(g, lam), y) == pytest.approx(pairing(lam, adjoint(g, y)), abs=1e-12)


def test_adjoint_examples():
    assert np.array_equal(adjoint(np.eye(2), E), E)
    assert np.allclose(adjoint(np.diag([2.0, 0.5]), E), 4 * E)
    with pytest.raises(np.linalg.LinAlgError):
        adjoint(np.zeros((2, 2)), E)


def test_pairing_examples():
    assert pairing(H, H) == 2.0
    assert pairing(E, E) == 0.0 and pairing(E, F) == 1.0


def test_factorize_examples():
    gp, gm = factorize(np.eye(3))
    assert np.array_equal(gp, np.eye(3)) and np.array_equal(gm, np.eye(3))
    gp, gm = factorize(np.array([[2.0, 1.0], [0.0, 0.5]]))
    assert np.allclose(gp, np.diag([2.0, 0.5])) and np.allclose(gm, [[1.0, 0.5], [0.0, 1.0]])


@given(seeds, dims)
def test_factorize_reconstructs(seed, d):
    g = mat_exp(random_sl(np.random.default_rng(seed), d, 0.3))
    gp, gm = factorize(g)
    assert is_kplus_group(gp) and is_kminus_group(gm)
    assert np.linalg.norm(gp @ gm - g) <= 1e-12


@pytest.mark.parametrize("g", [
    np.array([[0.0, 1.0], [-1.0, 0.0]]),
    np.array([[-1.0, 0.0], [0.0, -1.0]]),
    np.array([[1.0, 2.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]]),
])
def test_factorize_outside_big_cell(g):
    with pytest.raises(FactorizationOutsideBigCell):
        factorize(g)


@given(seeds, dims)
def test_projections_and_duals(seed, d):
    rng = np.random.default_rng(seed)
    x, lam = random_sl(rng, d), rng.normal(size=(d, d))
    assert np.array_equal(proj_plus(x) + proj_minus(x), x)
    kp = proj_plus(random_sl(rng, d))
    km = proj_minus(rng.normal(size=(d, d)))
    assert pairing(dual_plus(lam), kp) == pytest.approx(pairing(lam, kp), abs=1e-12)
    assert pairing(dual_minus(lam), km) == pytest.approx(pairing(lam, km), abs=1e-12)


@given(seeds, dims)
def test_basis_coordinates(seed, d):
    rng = np.random.default_rng(seed)
    b = sl_basis(d)
    assert b.dim == d * d - 1
    x = random_sl(rng, d)
    assert np.allclose(b.combine(b.coords(x)), x, atol=1e-13)
    assert np.allclose(np.tril(b.plus.sum(0), -1) != 0, np.tril(np.ones((d, d)), -1) != 0)
    y = random_sl(rng, d)
    assert np.allclose(b.ad_matrix(x) @ b.coords(y), b.coords(bracket(x, y)), atol=1e-12)


@given(seeds, dims)
def test_dexp(seed, d):
    rng = np.random.default_rng(seed)
    x, y = random_sl(rng, d, 0.5), random_sl(rng, d)
    h = 1e-6
    fd = (mat_exp(x + h * y) - mat_exp(x - h * y)) / (2 * h)
    g_inv = mat_exp(-x)
    assert np.allclose(dexp_right(x, y), fd @ g_inv, atol=1e-8)
    assert np.allclose(dexp_left(x, y), g_inv @ fd, atol=1e-8)
    assert np.allclose(dexp_right_inv(x, dexp_right(x, y)), y, atol=1e-12)
