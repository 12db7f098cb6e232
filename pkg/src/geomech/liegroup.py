"""Dense matrix Lie group kernel for K = SL(d) with the LU factorization
K = K+ K-, where K+ is lower triangular with positive diagonal and K- is
unit upper triangular. Algebra elements are plain ``(d, d)`` arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli

SINGULAR_TOL = 1e-14
PIVOT_TOL = 1e-12


class FactorizationOutsideBigCell(ArithmeticError):
    pass


# Pade [6/6] coefficients for exp
_PADE6 = (1.0, 1.0 / 2, 5.0 / 44, 1.0 / 66, 1.0 / 792, 1.0 / 15840, 1.0 / 665280)


def squaring_count(x) -> int:
    """Number of halvings; -1 flags a non-finite input."""
    norm = np.abs(x).sum(axis=0).max() if np.size(x) else 0.0
    if not math.isfinite(norm):
        return -1
    if norm == 0.0:
        return 0
    return max(0, math.ceil(math.log2(norm)) + 3)


def mat_exp(x) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a [6/6] Pade kernel."""
    x = np.asarray(x, float)
    if not x.any():
        return np.eye(x.shape[0])
    s = squaring_count(x)
    if s < 0:
        raise OverflowError("mat_exp of non-finite matrix")
    a = x / (2.0 ** s) if s else x
    d = x.shape[0]
    a2 = a @ a
    a4 = a2 @ a2
    c = _PADE6
    even = c[2] * a2 + c[4] * a4 + c[6] * (a4 @ a2)
    even.flat[::d + 1] += c[0]
    odd = c[3] * a2 + c[5] * a4
    odd.flat[::d + 1] += c[1]
    odd = a @ odd
    r = np.linalg.solve(even - odd, even + odd)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            r = r @ r
    if not np.isfinite(r).all():
        raise OverflowError("mat_exp overflowed")
    # keep triangular patterns exact
    _, upper = _masks(d)
    if not (x * upper).any():
        r = r * _masks(d)[0]
    elif not (x * upper.T).any():
        r = r * (1.0 - upper.T)
    return r


def bracket(x, y) -> np.ndarray:
    return x @ y - y @ x


def _inverse(g) -> np.ndarray:
    g = np.asarray(g, float)
    if abs(np.linalg.det(g)) < SINGULAR_TOL:
        raise np.linalg.LinAlgError("group element is singular")
    return np.linalg.inv(g)


def adjoint(g, x) -> np.ndarray:
    """Ad_g x = g x g^-1."""
    return g @ x @ _inverse(g)


def coadjoint(g, lam) -> np.ndarray:
    """Matrix representing Ad*_g lam, i.e. <Ad*_g lam, y> = <lam, Ad_g y>."""
    return _inverse(g) @ lam @ g


def pairing(x, y) -> float:
    """Ad-invariant trace form <x, y> = tr(xy)."""
    return float(np.einsum("ij,ji->", x, y))


@lru_cache(maxsize=None)
def _masks(d: int) -> tuple[np.ndarray, np.ndarray]:
    lower = np.tril(np.ones((d, d)))
    upper = np.triu(np.ones((d, d)), 1)
    lower.setflags(write=False)
    upper.setflags(write=False)
    return lower, upper


def proj_plus(x) -> np.ndarray:
    """Lower-triangular (with diagonal) part: the k+ component."""
    x = np.asarray(x, float)
    return x * _masks(x.shape[-1])[0]


def proj_minus(x) -> np.ndarray:
    """Strictly upper part: the k- component."""
    x = np.asarray(x, float)
    return x * _masks(x.shape[-1])[1]


def dual_plus(lam) -> np.ndarray:
    """Canonical matrix for the functional <lam, .> restricted to k+ (upper
    triangular, traceless)."""
    r = np.triu(lam)
    d = r.shape[0]
    return r - np.trace(r) / d * np.eye(d)


def dual_minus(lam) -> np.ndarray:
    """Canonical matrix for the functional <lam, .> restricted to k-."""
    return np.tril(lam, -1)


def is_kplus_group(g, tol: float = 0.0) -> bool:
    return bool(np.all(np.abs(np.triu(g, 1)) <= tol) and np.all(np.diag(g) > 0))


def is_kminus_group(g, tol: float = 0.0) -> bool:
    return bool(np.all(np.abs(np.tril(g, -1)) <= tol) and np.all(np.abs(np.diag(g) - 1.0) <= tol))


def factorize(g) -> tuple[np.ndarray, np.ndarray]:
    """g = g_plus @ g_minus with g_plus lower triangular (positive diagonal)
    and g_minus unit upper triangular; Crout elimination without pivoting."""
    g = np.asarray(g, float)
    d = g.shape[0]
    lower = np.zeros((d, d))
    upper = np.eye(d)
    scale = max(1.0, np.max(np.abs(g)))
    for j in range(d):
        for i in range(j, d):
            lower[i, j] = g[i, j] - lower[i, :j] @ upper[:j, j]
        pivot = lower[j, j]
        if pivot <= PIVOT_TOL * scale:
            raise FactorizationOutsideBigCell(
                f"leading principal minor {j + 1} is not positive (pivot {pivot:.3g})")
        for k in range(j + 1, d):
            upper[j, k] = (g[j, k] - lower[j, :j] @ upper[:j, k]) / pivot
    return lower, upper


@dataclass(frozen=True)
class SLBasis:
    """Basis of sl(d): strictly lower E_ij and H_k = E_kk - E_k+1,k+1 span k+,
    strictly upper E_ij span k-. Plus elements come first."""

    d: int
    elements: np.ndarray  # (m, d, d)
    n_plus: int

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def plus(self) -> np.ndarray:
        return self.elements[:self.n_plus]

    @property
    def minus(self) -> np.ndarray:
        return self.elements[self.n_plus:]

    def combine(self, coeffs) -> np.ndarray:
        d = self.d
        return (np.asarray(coeffs, float) @ self.elements.reshape(self.dim, d * d)).reshape(d, d)

    def coords(self, x) -> np.ndarray:
        return _coord_map(self.d) @ np.asarray(x, float).ravel()

    def ad_matrix(self, x) -> np.ndarray:
        """Matrix of ad_x in this basis (columns are images of basis elements)."""
        return np.array([self.coords(bracket(x, e)) for e in self.elements]).T


@lru_cache(maxsize=None)
def _basis_elements(d: int) -> tuple[np.ndarray, int]:
    els = []
    for i in range(d):
        for j in range(i):
            e = np.zeros((d, d))
            e[i, j] = 1.0
            els.append(e)
    for k in range(d - 1):
        h = np.zeros((d, d))
        h[k, k] = 1.0
        h[k + 1, k + 1] = -1.0
        els.append(h)
    n_plus = len(els)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d))
            e[i, j] = 1.0
            els.append(e)
    arr = np.array(els)
    arr.setflags(write=False)
    return arr, n_plus


@lru_cache(maxsize=None)
def _coord_map(d: int) -> np.ndarray:
    els, _ = _basis_elements(d)
    m = np.linalg.pinv(els.reshape(len(els), -1).T)
    m.setflags(write=False)
    return m


def sl_basis(d: int) -> SLBasis:
    els, n_plus = _basis_elements(d)
    return SLBasis(d, els, n_plus)


@lru_cache(maxsize=None)
def _bernoulli_coeffs(terms: int) -> np.ndarray:
    b = bernoulli(terms)
    return np.array([b[k] / math.factorial(k) for k in range(terms + 1)])


def _series(x, y, coeffs) -> np.ndarray:
    """sum_k coeffs[k] ad_x^k y, stopped once the iterated brackets fall
    below roundoff of the partial sum."""
    term = np.array(y, float)
    out = coeffs[0] * term
    scale = np.abs(out).max()
    for k in range(1, len(coeffs)):
        term = x @ term - term @ x
        size = np.abs(term).max()
        if size == 0.0 or size * max(abs(coeffs[k]), abs(coeffs[k + 1]) if k + 1 < len(coeffs) else 0.0) \
                <= 1e-17 * scale:
            break
        if coeffs[k] != 0.0:
            out = out + coeffs[k] * term
    return out


@lru_cache(maxsize=None)
def _exp_coeffs(terms: int) -> np.ndarray:
    return np.array([1.0 / math.factorial(k + 1) for k in range(terms)])


def dexp_right(x, y, terms: int = 30) -> np.ndarray:
    """(d/ds exp(x + s y)) exp(-x) at s=0, i.e. sum ad_x^k y / (k+1)!."""
    return _series(np.asarray(x, float), y, _exp_coeffs(terms))


def dexp_right_inv(x, z, terms: int = 30) -> np.ndarray:
    """Inverse of :func:`dexp_right`: sum B_k/k! ad_x^k z (B_1 = -1/2)."""
    return _series(np.asarray(x, float), z, _bernoulli_coeffs(terms))


def dexp_left(x, y, terms: int = 30) -> np.ndarray:
    """exp(-x) (d/ds exp(x + s y)) at s=0, i.e. sum (-ad_x)^k y / (k+1)!."""
    return dexp_right(-np.asarray(x, float), y, terms)


def random_sl(rng, d: int, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(scale=scale, size=(d, d))
    return x - np.trace(x) / d * np.eye(d)
