"""Compiled reference integrator for the gauge-fixed Fehér flow.

RK4 acts on the group element directly in matrix space, so this is an
independent scheme from the exponential-chart integrator in :mod:`aks`.
Work buffers are allocated once per run.
"""
import numpy as np
from numba import njit

GAUGE_STATIC = 0
GAUGE_LAX = 1


@njit(cache=True)
def _solve_inplace(M, x, n):
    # Gaussian elimination with partial pivoting; overwrites M and x
    for k in range(n):
        p = k
        best = abs(M[k, k])
        for i in range(k + 1, n):
            if abs(M[i, k]) > best:
                best = abs(M[i, k])
                p = i
        if best == 0.0:
            raise ZeroDivisionError("singular matrix")
        if p != k:
            for j in range(n):
                tmp = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = tmp
            tmp = x[k]
            x[k] = x[p]
            x[p] = tmp
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            for j in range(k, n):
                M[i, j] -= f * M[k, j]
            x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        s = x[k]
        for j in range(k + 1, n):
            s -= M[k, j] * x[j]
        x[k] = s / M[k, k]


@njit(cache=True)
def _solve(A, b):
    M = A.copy()
    x = b.copy()
    _solve_inplace(M, x, A.shape[0])
    return x


@njit(cache=True)
def _matmul(a, b, out):
    d = a.shape[0]
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s += a[i, k] * b[k, j]
            out[i, j] = s


@njit(cache=True)
def _inv_into(g, out, work, col):
    d = g.shape[0]
    for j in range(d):
        for i in range(d):
            for k in range(d):
                work[i, k] = g[i, k]
            col[i] = 0.0
        col[j] = 1.0
        _solve_inplace(work, col, d)
        for i in range(d):
            out[i, j] = col[i]


@njit(cache=True)
def _inv(g):
    d = g.shape[0]
    out = np.empty((d, d))
    _inv_into(g, out, np.empty((d, d)), np.empty(d))
    return out



@njit(cache=True)
def _lax_into(g, elements, minus, rows_plus, rhs, lam, ginv, A, c, t1, t2, wd, cd):
    m = elements.shape[0]
    n_plus = rows_plus.shape[0]
    d = g.shape[0]
    _inv_into(g, ginv, wd, cd)
    for i in range(n_plus):
        for k in range(m):
            A[i, k] = rows_plus[i, k]
    for l in range(minus.shape[0]):
        _matmul(g, minus[l], t1)
        _matmul(t1, ginv, t2)
        for k in range(m):
            s = 0.0
            for i in range(d):
                for j in range(d):
                    s += elements[k, i, j] * t2[j, i]
            A[n_plus + l, k] = s
    for k in range(m):
        c[k] = rhs[k]
    _solve_inplace(A, c, m)
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(m):
                s += c[k] * elements[k, i, j]
            lam[i, j] = s


@njit(cache=True)
def lax_matrix(g, elements, minus, rows_plus, rhs):
    """Lambda(g) from the stationarity conditions (Gram solve)."""
    d = g.shape[0]
    m = elements.shape[0]
    lam = np.empty((d, d))
    ginv = np.empty((d, d))
    _lax_into(g, elements, minus, rows_plus, rhs, lam, ginv, np.empty((m, m)), np.empty(m),
              np.empty((d, d)), np.empty((d, d)), np.empty((d, d)), np.empty(d))
    return lam, ginv


@njit(cache=True)
def _velocity_into(g, elements, minus, rows_plus, rhs, gauge, out,
                   lam, ginv, A, c, t1, t2, wd, cd):
    # dg/dt = (Lambda - Ad_g beta) g with alpha = 0
    _lax_into(g, elements, minus, rows_plus, rhs, lam, ginv, A, c, t1, t2, wd, cd)
    d = g.shape[0]
    if gauge == GAUGE_LAX:
        # beta = strict upper part of g^-1 Lambda g; zeta g = Lambda g - g beta
        _matmul(ginv, lam, t1)
        _matmul(t1, g, t2)
        for i in range(d):
            for j in range(i + 1):
                t2[i, j] = 0.0
        _matmul(lam, g, t1)
        _matmul(g, t2, out)
        for i in range(d):
            for j in range(d):
                out[i, j] = t1[i, j] - out[i, j]
    else:
        _matmul(lam, g, out)


@njit(cache=True)
def velocity(g, elements, minus, rows_plus, rhs, gauge):
    d = g.shape[0]
    m = elements.shape[0]
    out = np.empty((d, d))
    _velocity_into(g, elements, minus, rows_plus, rhs, gauge, out, np.empty((d, d)), np.empty((d, d)),
                   np.empty((m, m)), np.empty(m), np.empty((d, d)), np.empty((d, d)),
                   np.empty((d, d)), np.empty(d))
    return out


@njit(cache=True)
def integrate(g0, dt, n_steps, every, elements, minus, rows_plus, rhs, gauge):
    """Fixed-step RK4 on g; returns g and tr(Lambda^2), tr(Lambda^3) at every
    ``every``-th step (including the first)."""
    n_rec = n_steps // every + 1
    d = g0.shape[0]
    m = elements.shape[0]
    gs = np.empty((n_rec, d, d))
    tr = np.empty((n_rec, 2))
    g = g0.copy()
    ks = np.empty((4, d, d))
    stage = np.empty((d, d))
    lam = np.empty((d, d))
    ginv = np.empty((d, d))
    A = np.empty((m, m))
    c = np.empty(m)
    t1 = np.empty((d, d))
    t2 = np.empty((d, d))
    wd = np.empty((d, d))
    cd = np.empty(d)
    rec = 0
    for k in range(n_steps + 1):
        if k % every == 0:
            _lax_into(g, elements, minus, rows_plus, rhs, lam, ginv, A, c, t1, t2, wd, cd)
            _matmul(lam, lam, t1)
            _matmul(t1, lam, t2)
            s2 = 0.0
            s3 = 0.0
            for i in range(d):
                s2 += t1[i, i]
                s3 += t2[i, i]
            gs[rec] = g
            tr[rec, 0] = s2
            tr[rec, 1] = s3
            rec += 1
        if k == n_steps:
            break
        for s in range(4):
            if s == 0:
                for i in range(d):
                    for j in range(d):
                        stage[i, j] = g[i, j]
            else:
                h = dt if s == 3 else 0.5 * dt
                for i in range(d):
                    for j in range(d):
                        stage[i, j] = g[i, j] + h * ks[s - 1, i, j]
            _velocity_into(stage, elements, minus, rows_plus, rhs, gauge, ks[s],
                           lam, ginv, A, c, t1, t2, wd, cd)
        w = dt / 6.0
        for i in range(d):
            for j in range(d):
                g[i, j] += w * (ks[0, i, j] + 2.0 * ks[1, i, j] + 2.0 * ks[2, i, j] + ks[3, i, j])
    return gs, tr
