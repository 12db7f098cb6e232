"""AKS systems on K = SL(d) = K+ K-: the unreduced geodesic-type system on
K x K+ x K-, the Fehér Lagrangian, its Routh-reduced counterpart and the map
between them.

Dual elements (momentum levels mu, nu and orbit points) are matrices paired
through <x, y> = tr(xy).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import _aks_kernels as kern
from .geomcalc import ScalarField
from .liegroup import (adjoint, bracket, coadjoint, dexp_left,
                       dexp_right, dexp_right_inv, dual_minus, dual_plus, factorize, mat_exp,
                       pairing, proj_minus, proj_plus, sl_basis, SLBasis)
from .mech import LagrangianSystem
from .symmetry import GroupAction, PrincipalConnection, momentum_map, routhian

GRAM_COND = 1e10
RECENTER = 0.5
FORM_TOL = 1e-12


class GramSingular(np.linalg.LinAlgError):
    pass


class SectionDomainError(ValueError):
    pass


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass(frozen=True)
class AKSParams:
    d: int
    mu: np.ndarray
    nu: np.ndarray
    g0: np.ndarray
    zeta0: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray

    def __post_init__(self):
        d = self.d
        arrays = {}
        for name in ("mu", "nu", "g0", "zeta0", "alpha0", "beta0"):
            a = np.array(getattr(self, name), float)
            if a.shape != (d, d):
                raise ValueError(f"{name} must be a {d}x{d} matrix")
            arrays[name] = a
        if not _finite(*arrays.values()):
            raise ValueError("AKS parameters must be finite")
        factorize(arrays["g0"])  # raises outside the big cell
        arrays["mu"] = dual_plus(arrays["mu"])
        arrays["nu"] = dual_minus(arrays["nu"])
        arrays["alpha0"] = proj_plus(arrays["alpha0"])
        arrays["beta0"] = proj_minus(arrays["beta0"])
        for name, a in arrays.items():
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def basis(self) -> SLBasis:
        return sl_basis(self.d)

    def with_levels(self, mu, nu) -> "AKSParams":
        return AKSParams(self.d, mu, nu, self.g0, self.zeta0, self.alpha0, self.beta0)


def toda_params(d: int, seed: int = 0, spread: float = 0.3, coupling: float = 0.25) -> AKSParams:
    """Toda-type levels: nu pairs to ``coupling`` with the simple upper root
    vectors (a character of k-), mu pairs to ``coupling`` with the simple
    lower ones. Small couplings keep the exponential growth of the group
    element slow over desk-scale horizons. Initial data are small random
    algebra elements."""
    rng = np.random.default_rng(seed)
    basis = sl_basis(d)
    mu = np.zeros((d, d))
    for i in range(d - 1):
        mu[i, i + 1] = coupling
    mu += np.diag(np.linspace(0.05, -0.05, d))
    nu = np.zeros((d, d))
    for i in range(d - 1):
        nu[i + 1, i] = coupling
    g0 = mat_exp(basis.combine(rng.normal(scale=spread, size=basis.dim)))
    zeta0 = basis.combine(rng.normal(size=basis.dim))
    alpha0 = proj_plus(basis.combine(rng.normal(size=basis.dim)))
    alpha0 -= np.trace(alpha0) / d * np.eye(d)
    beta0 = proj_minus(rng.normal(size=(d, d)))
    return AKSParams(d, mu, nu, g0, zeta0, alpha0, beta0)


def lax_matrix(g, zeta, alpha, beta) -> np.ndarray:
    """Lambda = zeta + alpha + Ad_g beta."""
    return zeta + alpha + adjoint(g, beta)


# --- Fehér Lagrangian -------------------------------------------------------

def feher_compact(params: AKSParams, g, zeta, alpha, beta) -> float:
    lam = lax_matrix(g, zeta, alpha, beta)
    return 0.5 * pairing(lam, lam) - pairing(alpha, params.mu) - pairing(beta, params.nu)


def feher_expanded(params: AKSParams, g, zeta, alpha, beta) -> float:
    """Six-term form; uses the body velocity g^-1 dg/dt = Ad_g^-1 zeta."""
    body = adjoint(np.linalg.inv(g), zeta)
    return (0.5 * pairing(zeta, zeta) + 0.5 * pairing(alpha, alpha) + 0.5 * pairing(beta, beta)
            + pairing(alpha, zeta - params.mu) + pairing(beta, body - params.nu)
            + pairing(alpha, adjoint(g, beta)))


def feher_lagrangian(params: AKSParams, check: bool = __debug__) -> Callable:
    """L_F(g, zeta, alpha, beta); with ``check`` both forms are evaluated and
    must agree."""

    def L(g, zeta, alpha, beta, t: float = 0.0) -> float:
        value = feher_compact(params, g, zeta, alpha, beta)
        if check:
            other = feher_expanded(params, g, zeta, alpha, beta)
            if abs(value - other) > FORM_TOL * max(1.0, abs(value)):
                raise AssertionError(f"Fehér forms disagree: {value!r} vs {other!r}")
        return value
    return L


class LaxSolver:
    """Lambda(g) determined by stationarity in alpha and beta:
    <Lambda - mu, k+> = 0 and <Lambda, Ad_g b> = <nu, b> for b in k-."""

    def __init__(self, d: int, mu, nu, max_cond: float = GRAM_COND):
        basis = sl_basis(d)
        self.basis = basis
        self.max_cond = max_cond
        els = np.ascontiguousarray(basis.elements)
        self._flat_T = els.transpose(0, 2, 1).reshape(basis.dim, -1)  # row k = E_k^T flattened
        self.rows_plus = np.array([[pairing(e, a) for e in els] for a in basis.plus])
        self.rhs = np.array([pairing(mu, a) for a in basis.plus] + [pairing(nu, b) for b in basis.minus])
        self.mu = np.asarray(mu, float)
        self.nu = np.asarray(nu, float)

    def gram(self, g, ginv=None) -> np.ndarray:
        ginv = np.linalg.inv(g) if ginv is None else ginv
        adb = g @ self.basis.minus @ ginv  # (m-, d, d)
        rows_minus = adb.reshape(len(adb), -1) @ self._flat_T.T
        return np.vstack([self.rows_plus, rows_minus])

    def __call__(self, g, ginv=None) -> np.ndarray:
        A = self.gram(g, ginv)
        # 1-norm condition number from the explicit inverse
        try:
            Ainv = np.linalg.inv(A)
            cond = np.abs(A).sum(0).max() * np.abs(Ainv).sum(0).max()
        except np.linalg.LinAlgError:
            cond = np.inf
        if not np.isfinite(cond) or cond > self.max_cond:
            raise GramSingular(f"stationarity system is degenerate (cond={cond:.3g})")
        return self.basis.combine(Ainv @ self.rhs)


def is_character(level, subalgebra) -> bool:
    """<level, [a, b]> = 0 for all a, b in the given basis."""
    for i, a in enumerate(subalgebra):
        for b in subalgebra[i + 1:]:
            if abs(pairing(level, bracket(a, b))) > 1e-14:
                return False
    return True


def stabilizer(level, subalgebra, tol: float = 1e-12) -> np.ndarray:
    """Basis of {a : <level, [a, y]> = 0 for all y} inside the span of
    ``subalgebra``, as a stack of matrices."""
    M = np.array([[pairing(level, bracket(a, y)) for a in subalgebra] for y in subalgebra])
    if M.size == 0:
        return np.zeros((0,) + np.shape(level))
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 0.0)))
    null = vt[rank:]
    return np.tensordot(null, subalgebra, axes=1)


# gauges: (g, ginv, Lambda) -> (alpha, beta)

def static_gauge(g, ginv, lam):
    z = np.zeros_like(g)
    return z, z


def lax_gauge(g, ginv, lam):
    """alpha = 0, beta = pi_-(Ad_g^-1 Lambda); then L = Ad_g^-1 Lambda obeys
    dL/dt = [pi_- L, L]."""
    return np.zeros_like(g), proj_minus(ginv @ lam @ g)


GAUGES = {"static": static_gauge, "lax": lax_gauge}


def _check_gauge(name: str, d: int, nu) -> None:
    if name not in GAUGES:
        raise ValueError(f"unknown gauge {name!r}; expected one of {sorted(GAUGES)}")
    if name == "lax" and not is_character(nu, sl_basis(d).minus):
        raise ValueError("lax gauge needs nu to vanish on [k-, k-]")


@dataclass
class GroupTrajectory:
    times: np.ndarray
    g: np.ndarray       # (N, d, d)
    lam: np.ndarray     # (N, d, d)
    zeta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def traces(self, k: int) -> np.ndarray:
        return np.array([np.trace(np.linalg.matrix_power(L, k)) for L in self.lam])


def chart_flow(velocity: Callable, g0, t1: float, dt: float, record: Callable,
               recenter: float = 0.0):
    """RK4 in the exponential chart g = exp(X) g_c, recentred once |x| >
    ``recenter`` (by default after every step, which keeps X of size dt and
    the dexp series short). ``velocity(g)`` gives dg/dt g^-1; ``record(k, g)``
    is called on every sample."""
    if not 0.0 <= recenter <= RECENTER:
        raise ValueError(f"recentring threshold must lie in [0, {RECENTER}]")
    from .integrate import sample_count

    d = g0.shape[0]
    basis = sl_basis(d)
    count = sample_count(0.0, t1, dt)
    center = np.array(g0, float)
    x = np.zeros(basis.dim)

    def deriv(x):
        if not x.any():
            return basis.coords(velocity(center))
        X = basis.combine(x)
        g = mat_exp(X) @ center
        return basis.coords(dexp_right_inv(X, velocity(g)))

    record(0, center)
    for k in range(1, count):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * dt * k1)
        k3 = deriv(x + 0.5 * dt * k2)
        k4 = deriv(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite chart state at step {k}")
        g = mat_exp(basis.combine(x)) @ center
        if np.linalg.norm(x) > recenter:
            center, x = g, np.zeros(basis.dim)
        record(k, g)
    return count


def feher_flow(params: AKSParams, t1: float, dt: float, gauge: str = "lax", g0=None) -> GroupTrajectory:
    """Integrate the Fehér system with Lambda from the stationarity solve and
    the gauge fixed by ``gauge``."""
    _check_gauge(gauge, params.d, params.nu)
    solver = LaxSolver(params.d, params.mu, params.nu)
    fix = GAUGES[gauge]
    g0 = params.g0 if g0 is None else np.asarray(g0, float)

    last = {}

    def parts(g):
        key = g.tobytes()
        if key in last:
            return last[key]
        ginv = np.linalg.inv(g)
        lam = solver(g, ginv)
        alpha, beta = fix(g, ginv, lam)
        out = lam, alpha, beta, lam - alpha - g @ beta @ ginv
        last.clear()
        last[key] = out
        return out

    def velocity(g):
        return parts(g)[3]

    from .integrate import sample_count
    count = sample_count(0.0, t1, dt)
    d = params.d
    out = {k: np.empty((count, d, d)) for k in ("g", "lam", "alpha", "beta", "zeta")}

    def record(k, g):
        lam, alpha, beta, zeta = parts(g)
        out["g"][k], out["lam"][k], out["alpha"][k], out["beta"][k], out["zeta"][k] = g, lam, alpha, beta, zeta

    chart_flow(velocity, g0, t1, dt, record)
    return GroupTrajectory(dt * np.arange(count), out["g"], out["lam"], out["zeta"], out["alpha"], out["beta"])


def feher_reference(params: AKSParams, t1: float, dt: float, every: int, gauge: str = "lax"):
    """Compiled matrix-space RK4 run; returns (times, g, traces) sampled every
    ``every`` steps."""
    _check_gauge(gauge, params.d, params.nu)
    solver = LaxSolver(params.d, params.mu, params.nu)
    n_steps = int(round(t1 / dt))
    code = kern.GAUGE_LAX if gauge == "lax" else kern.GAUGE_STATIC
    gs, tr = kern.integrate(np.array(params.g0, float), float(dt), n_steps, int(every),
                            np.ascontiguousarray(solver.basis.elements),
                            np.ascontiguousarray(solver.basis.minus), solver.rows_plus, solver.rhs, code)
    times = dt * every * np.arange(len(gs))
    return times, gs, tr


@dataclass
class IsospectralReport:
    d: int
    drift_tr2: float
    drift_tr3: float
    reference_trace_gap: float
    reference_state_gap: float
    trajectory: GroupTrajectory = field(repr=False)


def isospectral_check(params: AKSParams, t1: float = 10.0, dt: float = 1e-3,
                      ref_dt: Optional[float] = 1e-5, gauge: str = "lax") -> IsospectralReport:
    traj = feher_flow(params, t1, dt, gauge)
    tr2, tr3 = traj.traces(2), traj.traces(3)
    gap_tr = gap_g = float("nan")
    if ref_dt is not None:
        every = int(round(dt / ref_dt))
        _, gs, tr = feher_reference(params, t1, ref_dt, every, gauge)
        k = min(len(gs), len(traj.times))
        gap_tr = float(max(np.max(np.abs(tr[:k, 0] - tr2[:k])), np.max(np.abs(tr[:k, 1] - tr3[:k]))))
        gap_g = float(np.max(np.abs(gs[:k] - traj.g[:k])))
    return IsospectralReport(params.d, float(np.max(np.abs(tr2 - tr2[0]))),
                             float(np.max(np.abs(tr3 - tr3[0]))), gap_tr, gap_g, traj)


def feher_system(params: AKSParams, center=None) -> LagrangianSystem:
    """L_F on chart coordinates (x, a, b): g = exp(sum x_k E_k) g_c,
    alpha = sum a_i (k+ basis), beta = sum b_j (k- basis). The velocities of
    a and b do not enter, so the mass matrix is singular on those rows."""
    basis = params.basis
    m, mp = basis.dim, basis.n_plus
    mm = m - mp
    center = params.g0 if center is None else np.asarray(center, float)
    L_F = feher_lagrangian(params, check=False)

    def unpack(q, v):
        X = basis.combine(q[:m])
        g = mat_exp(X) @ center
        zeta = dexp_right(X, basis.combine(v[:m]))
        alpha = np.tensordot(q[m:m + mp], basis.plus, axes=1)
        beta = np.tensordot(q[m + mp:], basis.minus, axes=1)
        return X, g, zeta, alpha, beta

    def func(t, q, v):
        _, g, zeta, alpha, beta = unpack(q, v)
        return L_F(g, zeta, alpha, beta)

    def dv(t, q, v):
        X, g, zeta, alpha, beta = unpack(q, v)
        lam = lax_matrix(g, zeta, alpha, beta)
        out = np.zeros(m + mp + mm)
        out[:m] = [pairing(lam, dexp_right(X, e)) for e in basis.elements]
        return out

    return LagrangianSystem(m + mp + mm, ScalarField(func, m + mp + mm, dv=dv, label="feher"),
                            label=f"feher_sl{params.d}", time_dependent=False)


# --- unreduced system on K x K+ x K- ------------------------------------------

@dataclass(frozen=True)
class ProductChart:
    """Chart on K x K+ x K- around (g_c, p_c, m_c):
    g = exp(X) g_c, g+ = p_c exp(Y), g- = exp(Z) m_c, with X in k, Y in k+,
    Z in k-. The chart velocities map to the right-trivialized zeta, the
    left-trivialized alpha = g+^-1 g+' and the right-trivialized
    beta = g-' g-^-1."""

    d: int
    g_c: np.ndarray
    p_c: np.ndarray
    m_c: np.ndarray

    @property
    def basis(self) -> SLBasis:
        return sl_basis(self.d)

    @property
    def sizes(self) -> tuple[int, int, int]:
        b = self.basis
        return b.dim, b.n_plus, b.dim - b.n_plus

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def split(self, q):
        m, mp, _ = self.sizes
        d = self.d
        flat = self.basis.elements.reshape(m, d * d)
        q = np.asarray(q, float)
        return ((q[:m] @ flat).reshape(d, d), (q[m:m + mp] @ flat[:mp]).reshape(d, d),
                (q[m + mp:] @ flat[mp:]).reshape(d, d))

    def point(self, q):
        X, Y, Z = self.split(q)
        return mat_exp(X) @ self.g_c, self.p_c @ mat_exp(Y), mat_exp(Z) @ self.m_c

    def velocity(self, q, v):
        """(zeta, alpha, beta) of the chart velocity v at q."""
        X, Y, Z = self.split(q)
        dX, dY, dZ = self.split(v)
        return dexp_right(X, dX), dexp_left(Y, dY), dexp_right(Z, dZ)

    def chart_velocity(self, q, zeta, alpha, beta) -> np.ndarray:
        b = self.basis
        _, mp, _ = self.sizes
        if not np.any(q):
            return np.concatenate([b.coords(zeta), b.coords(alpha)[:mp], b.coords(beta)[mp:]])
        X, Y, Z = self.split(q)
        return np.concatenate([b.coords(dexp_right_inv(X, zeta)),
                               b.coords(dexp_right_inv(-Y, alpha))[:mp],
                               b.coords(dexp_right_inv(Z, beta))[mp:]])

    def recentred(self, q) -> "ProductChart":
        return ProductChart(self.d, *self.point(q))

    @classmethod
    def at(cls, g, g_plus, g_minus) -> "ProductChart":
        return cls(np.shape(g)[0], np.asarray(g, float), np.asarray(g_plus, float),
                   np.asarray(g_minus, float))


def unreduced_system(chart: ProductChart) -> LagrangianSystem:
    """L = <zeta, zeta>/2 on the product chart; independent of the K+ and K-
    velocities, so those rows of the mass matrix vanish."""
    n = chart.n
    m = chart.sizes[0]
    basis = chart.basis

    def func(t, q, v):
        zeta = chart.velocity(q, v)[0]
        return 0.5 * pairing(zeta, zeta)

    def dv(t, q, v):
        X = chart.split(q)[0]
        zeta = chart.velocity(q, v)[0]
        out = np.zeros(n)
        out[:m] = [pairing(zeta, dexp_right(X, e)) for e in basis.elements]
        return out

    return LagrangianSystem(n, ScalarField(func, n, dv=dv, label="unreduced"),
                            label=f"aks_unreduced_sl{chart.d}", time_dependent=False)


def product_generators(chart: ProductChart, a, b):
    """Tangent (zeta, alpha, beta) of the K+ x K- action
    (h+, h-).(g, g+, g-) = (h+ g h-^-1, g+ h+^-1, h- g-) for (a, b) in k+ x k-."""
    def at(q):
        g = chart.point(q)[0]
        return a - adjoint(g, b), -a, b
    return at


@lru_cache(maxsize=None)
def _product_structure(d: int) -> np.ndarray:
    """c[k, i, j] with [e_i, e_j] = c^k_ij e_k on k+ (+) k-; the two blocks
    commute with each other, so the algebra is a direct sum."""
    elements = sl_basis(d).elements
    basis_flat = elements.reshape(len(elements), -1).T
    m = len(elements)
    c = np.zeros((m, m, m))
    for i in range(m):
        for j in range(m):
            br = bracket(elements[i], elements[j]).ravel()
            c[:, i, j] = np.linalg.lstsq(basis_flat, br, rcond=None)[0]
    mp = sl_basis(d).n_plus
    c[:mp, mp:, :] = 0.0
    c[:mp, :, mp:] = 0.0
    c[mp:, :mp, :] = 0.0
    c[mp:, :, :mp] = 0.0
    c.setflags(write=False)
    return c


def product_action(chart: ProductChart) -> GroupAction:
    """K+ x K- acting on the product chart; generators ordered as the k+
    basis followed by the k- basis."""
    basis = chart.basis
    d = chart.d
    zero = np.zeros((d, d))
    gens = []
    for e in basis.plus:
        gens.append((e, zero))
    for e in basis.minus:
        gens.append((zero, e))

    def make(a, b):
        tangent = product_generators(chart, a, b)
        return lambda q: chart.chart_velocity(q, *tangent(q))

    return GroupAction(basis.dim, tuple(make(a, b) for a, b in gens), _product_structure(d))


def level_vector(d: int, mu, nu) -> np.ndarray:
    """Components of (mu, nu) against the k+ and k- basis."""
    basis = sl_basis(d)
    return np.array([pairing(mu, e) for e in basis.plus] + [pairing(nu, e) for e in basis.minus])


@dataclass
class UnreducedReport:
    residual_zeta: float      # max |g' g^-1 - zeta|
    residual_alpha: float     # max |g+^-1 g+' - alpha|
    residual_beta: float      # max |g-' g-^-1 - beta|
    sigma_drift: float        # max |zeta(t) - zeta(0)| with zeta from the sampled curve
    momentum_drift: float
    momentum: np.ndarray = field(repr=False)

    @property
    def worst_residual(self) -> float:
        return max(self.residual_zeta, self.residual_alpha, self.residual_beta, self.sigma_drift)


def bounded_params(d: int, seed: int = 0, scale: float = 0.5) -> AKSParams:
    """Initial data whose exact unreduced flow stays bounded or grows
    polynomially: antisymmetric zeta0 (elliptic), nilpotent alpha0, beta0."""
    rng = np.random.default_rng(seed)
    base = toda_params(d, seed)
    w = rng.normal(scale=scale, size=(d, d))
    return AKSParams(d, base.mu, base.nu, base.g0, w - w.T,
                     np.tril(rng.normal(scale=scale, size=(d, d)), -1),
                     np.triu(rng.normal(scale=scale, size=(d, d)), 1))


def exact_unreduced_flow(params: AKSParams, g_plus0=None, g_minus0=None):
    """t -> (g, g+, g-) for g = exp(t zeta0) g0, g+ = g+0 exp(t alpha0),
    g- = exp(t beta0) g-0. By default (g+0, g-0) is the factorization of g0."""
    if g_plus0 is None or g_minus0 is None:
        g_plus0, g_minus0 = factorize(params.g0)

    def at(t):
        return (mat_exp(t * params.zeta0) @ params.g0, g_plus0 @ mat_exp(t * params.alpha0),
                mat_exp(t * params.beta0) @ g_minus0)
    return at


def unreduced_check(params: AKSParams, t1: float = 10.0, dt: float = 1e-3,
                    flow=None) -> UnreducedReport:
    """Residuals of the unreduced equations along ``flow`` (default: the exact
    flow), velocities by fourth-order central differences with step ``dt``,
    and the K+ x K- momentum from the generic momentum map on a chart
    centred at each sample."""
    from .integrate import sample_count

    flow = exact_unreduced_flow(params) if flow is None else flow
    count = sample_count(0.0, t1, dt)
    grid = dt * np.arange(-2, count + 2)
    curves = [np.array(c) for c in zip(*(flow(t) for t in grid))]
    # fourth-order central differences on the sample grid
    derivs = [(c[:-4] - 8 * c[1:-3] + 8 * c[3:-1] - c[4:]) / (12 * dt) for c in curves]
    g, gp, gm = (c[2:-2] for c in curves)
    dg, dgp, dgm = derivs
    ginv, gpinv, gminv = (np.linalg.inv(c) for c in (g, gp, gm))
    zeta = dg @ ginv
    alpha = gpinv @ dgp
    beta = dgm @ gminv
    worst = [np.abs(zeta - params.zeta0).max(), np.abs(alpha - params.alpha0).max(),
             np.abs(beta - params.beta0).max(), np.abs(zeta - zeta[0]).max()]
    mu_vec = level_vector(params.d, params.mu, params.nu)
    J = np.empty((count, len(mu_vec)))
    for k in range(count):
        chart = ProductChart.at(g[k], gp[k], gm[k])
        q = np.zeros(chart.n)
        v = chart.chart_velocity(q, params.zeta0, params.alpha0, params.beta0)
        J[k] = momentum_map(unreduced_system(chart), product_action(chart), 0.0, q, v)
    drift = float(np.max(np.abs(J - J[0])))
    return UnreducedReport(*map(float, worst), drift, J)


# --- connection and reduced Routhian ------------------------------------------

@dataclass(frozen=True)
class ConnectionValue:
    omega: tuple           # (-alpha, beta) in k+ x k-
    base_velocity: np.ndarray  # right-trivialized velocity of g' = g+ g g-


def aks_connection_eval(g, g_plus, g_minus, zeta, alpha, beta) -> ConnectionValue:
    """Connection (-alpha, beta) and the projected velocity
    d(g+ g g-)/dt (g+ g g-)^-1 = Ad_{g+}(zeta + alpha + Ad_g beta)."""
    return ConnectionValue((-np.asarray(alpha, float), np.asarray(beta, float)),
                           adjoint(g_plus, zeta + alpha + adjoint(g, beta)))


def horizontal_lift(g_base, zeta_base, g_plus, g_minus):
    """Horizontal lift of (g', zeta') to the fibre point (g+, g-):
    g = g+^-1 g' g-^-1, zeta = Ad_{g+^-1} zeta', alpha = beta = 0."""
    gpinv = np.linalg.inv(g_plus)
    g = gpinv @ g_base @ np.linalg.inv(g_minus)
    z = np.zeros_like(g)
    return g, adjoint(gpinv, zeta_base), z, z


def connection_form(chart: ProductChart) -> PrincipalConnection:
    """(-alpha, beta) as a k+ x k- valued one-form on the product chart."""
    _, mp, _ = chart.sizes
    n = chart.n
    m_total = chart.sizes[0]
    eye = np.eye(n)

    def omega(q):
        cols = []
        for j in range(n):
            _, alpha, beta = chart.velocity(q, eye[j])
            c_a = chart.basis.coords(alpha)[:mp]
            c_b = chart.basis.coords(beta)[mp:]
            cols.append(np.concatenate([-c_a, c_b]))
        return np.array(cols).T
    return PrincipalConnection(omega, n, tuple(range(m_total, n)))


def orbit_point_plus(mu, g_plus) -> np.ndarray:
    """eta+ with <eta+, x> = <mu, Ad_{g+^-1} x> on k+."""
    return dual_plus(coadjoint(np.linalg.inv(g_plus), mu))


def orbit_point_minus(nu, g_minus) -> np.ndarray:
    """eta- with <eta-, x> = <nu, Ad_{g-} x> on k-."""
    return dual_minus(coadjoint(g_minus, nu))


def reduced_routhian(params: AKSParams) -> Callable:
    """Closed form R(g', zeta', eta+, eta-, at, bt) =
    |zeta' + at - Ad_{g'} bt|^2 / 2 - <eta+, at> - <eta-, bt>."""

    last = {}

    def R(g_base, zeta_base, eta_plus, eta_minus, a_t, b_t) -> float:
        g_base = np.asarray(g_base, float)
        key = g_base.tobytes()
        if key not in last:
            last.clear()
            last[key] = np.linalg.inv(g_base)
        k = zeta_base + a_t - g_base @ b_t @ last[key]
        return 0.5 * pairing(k, k) - pairing(eta_plus, a_t) - pairing(eta_minus, b_t)
    return R


def reduced_routhian_generic(params: AKSParams, g_base, zeta_base, g_plus, g_minus, a_t, b_t) -> float:
    """The same value through the generic Routhian L - <(mu, nu), omega(v)>
    on a product chart centred at the horizontal-lift point over g', with
    the velocity whose connection part reproduces (at, bt)."""
    g = np.linalg.inv(g_plus) @ g_base @ np.linalg.inv(g_minus)
    chart = ProductChart.at(g, g_plus, g_minus)
    gpinv = np.linalg.inv(g_plus)
    zeta = adjoint(gpinv, zeta_base + a_t - adjoint(g_base, b_t))
    alpha = -adjoint(gpinv, a_t)
    beta = adjoint(g_minus, b_t)
    q = np.zeros(chart.n)
    v = chart.chart_velocity(q, zeta, alpha, beta)
    R = routhian(unreduced_system(chart), connection_form(chart), level_vector(params.d, params.mu, params.nu))
    return R(0.0, q, v)


def connection_force(params: AKSParams) -> Callable:
    """Two-form <mu, [u1, u2]> - <nu, [v1, v2]> on algebra lifts of orbit
    tangents."""
    mu, nu = params.mu, params.nu

    def F(u1, v1, u2, v2) -> float:
        return pairing(mu, bracket(u1, u2)) - pairing(nu, bracket(v1, v2))
    return F


# --- sections and the map to the Fehér system ---------------------------------

@dataclass(frozen=True)
class ExponentialSection:
    """Local section of the coadjoint orbit through ``level`` by exponentials
    of a slice complementary to the stabilizer.

    plus side: s = exp(xi), eta = orbit_point_plus(level, s^-1), i.e.
    <eta, x> = <level, Ad_s x>; minus side: s = exp(xi),
    eta = orbit_point_minus(level, s^-1), i.e. <eta, x> = <level, Ad_{s^-1} x>.
    """

    level: np.ndarray
    side: str          # "plus" or "minus"
    radius: float = 1.0

    def __post_init__(self):
        if self.side not in ("plus", "minus"):
            raise ValueError("side must be 'plus' or 'minus'")

    @property
    def d(self) -> int:
        return self.level.shape[0]

    @property
    def subalgebra(self) -> np.ndarray:
        b = sl_basis(self.d)
        return b.plus if self.side == "plus" else b.minus

    @property
    def slice(self) -> np.ndarray:
        """Basis of an orthogonal complement of the stabilizer (in
        coefficients of ``subalgebra``)."""
        sub = self.subalgebra
        M = np.array([[pairing(self.level, bracket(a, y)) for a in sub] for y in sub])
        if M.size == 0:
            return np.zeros((0, 0))
        _, s, vt = np.linalg.svd(M)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        return vt[:rank]

    def element(self, c) -> np.ndarray:
        """Slice coordinates -> algebra element xi."""
        c = np.asarray(c, float)
        if not len(c):
            return np.zeros((self.d, self.d))
        return np.tensordot(c @ self.slice, self.subalgebra, axes=1)

    def point(self, c):
        """(eta, s) at slice coordinates c."""
        xi = self.element(c)
        if np.linalg.norm(xi) > self.radius:
            raise SectionDomainError(f"slice point |xi|={np.linalg.norm(xi):.3g} outside radius {self.radius}")
        s = mat_exp(xi)
        if self.side == "plus":
            return orbit_point_plus(self.level, np.linalg.inv(s)), s
        return orbit_point_minus(self.level, np.linalg.inv(s)), s

    def trivialized(self, c, dc) -> np.ndarray:
        """Ts(dc): plus side s' s^-1, minus side -s^-1 s'."""
        xi = self.element(c)
        dxi = self.element(dc)
        if self.side == "plus":
            return dexp_right(xi, dxi)
        return -dexp_left(xi, dxi)

    def tangent(self, c, dc) -> np.ndarray:
        """Orbit tangent d(eta)/dt along c + t dc."""
        xi = self.element(c)
        s = mat_exp(xi)
        dxi = self.element(dc)
        if self.side == "plus":
            a = dexp_left(xi, dxi)
            M = np.linalg.inv(s) @ self.level @ s
            return dual_plus(bracket(M, a))
        b = dexp_left(xi, dxi)
        M = s @ self.level @ np.linalg.inv(s)
        return dual_minus(bracket(s @ b @ np.linalg.inv(s), M))

    def lift(self, eta, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
        """Slice coordinates c with point(c)[0] = eta (Gauss-Newton from 0)."""
        eta = np.asarray(eta, float)
        k = self.slice.shape[0]
        c = np.zeros(k)
        if k == 0:
            if np.abs(eta - self.point(c)[0]).max() > 1e-10:
                raise SectionDomainError("orbit point differs from the base point of a zero-dimensional orbit")
            return c
        for _ in range(max_iter):
            r = self.point(c)[0] - eta
            if np.abs(r).max() <= tol * max(1.0, np.abs(eta).max()):
                return c
            J = np.array([self.tangent(c, e).ravel() for e in np.eye(k)]).T
            c = c - np.linalg.lstsq(J, r.ravel(), rcond=None)[0]
        r = self.point(c)[0] - eta
        if np.abs(r).max() > 1e-9 * max(1.0, np.abs(eta).max()):
            raise SectionDomainError(f"orbit point not reached by the section (residual {np.abs(r).max():.3g})")
        return c


@dataclass(frozen=True)
class ReducedPoint:
    g: np.ndarray        # g' in K
    zeta: np.ndarray     # zeta' = g'' g'^-1
    c_plus: np.ndarray   # slice coordinates of eta+
    c_minus: np.ndarray  # slice coordinates of eta-
    u: np.ndarray        # slice velocity of eta+
    v: np.ndarray        # slice velocity of eta-
    a_t: np.ndarray      # alpha tilde in k+
    b_t: np.ndarray      # beta tilde in k-


def phi_map(plus: ExponentialSection, minus: ExponentialSection, x: ReducedPoint):
    """Fehér state (G, Z, A, B) of a reduced point:
    G = s+ g' s-, Z = Ad_{s+} zeta' + Ts+(u) - Ad_G Ts-(v),
    A = Ad_{s+} at - Ts+(u), B = -Ad_{s-^-1} bt + Ts-(v)."""
    _, sp = plus.point(x.c_plus)
    _, sm = minus.point(x.c_minus)
    tp = plus.trivialized(x.c_plus, x.u)
    tm = minus.trivialized(x.c_minus, x.v)
    G = sp @ x.g @ sm
    Z = adjoint(sp, x.zeta) + tp - adjoint(G, tm)
    A = adjoint(sp, x.a_t) - tp
    B = -adjoint(np.linalg.inv(sm), x.b_t) + tm
    return G, Z, A, B


def pullback_defect(params: AKSParams, plus: ExponentialSection, minus: ExponentialSection,
                    x: ReducedPoint) -> float:
    """L_F(Phi(x)) at levels (mu, -nu) minus [R(x) + <mu, Ts+(u)> + <nu, Ts-(v)>]
    with R the reduced Routhian at levels (mu, nu)."""
    eta_p, _ = plus.point(x.c_plus)
    eta_m, _ = minus.point(x.c_minus)
    R = reduced_routhian(params)(x.g, x.zeta, eta_p, eta_m, x.a_t, x.b_t)
    G, Z, A, B = phi_map(plus, minus, x)
    LF = feher_compact(params.with_levels(params.mu, -params.nu), G, Z, A, B)
    corr = (pairing(params.mu, plus.trivialized(x.c_plus, x.u))
            + pairing(params.nu, minus.trivialized(x.c_minus, x.v)))
    return LF - (R + corr)


def section_form(params: AKSParams, plus: ExponentialSection, minus: ExponentialSection) -> Callable:
    """One-form c -> (<mu, Ts+(e_i)> + <nu, Ts-(e_i)>)_i on the joint slice
    coordinates c = (c+, c-)."""
    kp = plus.slice.shape[0]
    k = kp + minus.slice.shape[0]
    eye = np.eye(k)

    def theta(c):
        c = np.asarray(c, float)
        return np.array([pairing(params.mu, plus.trivialized(c[:kp], e[:kp]))
                         + pairing(params.nu, minus.trivialized(c[kp:], e[kp:])) for e in eye])
    return theta


def flatness_defect(params: AKSParams, plus: ExponentialSection, minus: ExponentialSection, c) -> float:
    """max |d(section form) - connection force| on the slice coordinate
    basis; the force is taken at levels (mu, -nu), matching the level flip
    in :func:`pullback_defect`."""
    from .geomcalc import d_oneform

    kp = plus.slice.shape[0]
    c = np.asarray(c, float)
    D = d_oneform(section_form(params, plus, minus), c)
    force = connection_force(params.with_levels(params.mu, -params.nu))
    lifts = [(plus.trivialized(c[:kp], e[:kp]), minus.trivialized(c[kp:], e[kp:])) for e in np.eye(len(c))]
    F = np.array([[force(u1, v1, u2, v2) for u2, v2 in lifts] for u1, v1 in lifts])
    return float(np.max(np.abs(D - F), initial=0.0))


def polarized_lax(R: Callable, d: int) -> np.ndarray:
    """Stationary point of a function quadratic in (at, bt), returned as
    the combination at - (image of bt) that R depends on. ``R(at, bt)``
    must be exactly quadratic; unit-step central differences then recover
    its gradient and Hessian up to roundoff."""
    basis = sl_basis(d)
    mp = basis.n_plus
    m = basis.dim

    flat = basis.elements.reshape(m, d * d)

    def f(c):
        return R((c[:mp] @ flat[:mp]).reshape(d, d), (c[mp:] @ flat[mp:]).reshape(d, d))

    # exact for quadratics: 1 + 2m + m(m-1)/2 evaluations
    eye = np.eye(m)
    f0 = f(np.zeros(m))
    fp = np.array([f(e) for e in eye])
    fm = np.array([f(-e) for e in eye])
    grad = 0.5 * (fp - fm)
    H = np.diag(fp + fm - 2 * f0)
    for i in range(m):
        for j in range(i + 1, m):
            H[i, j] = H[j, i] = f(eye[i] + eye[j]) - fp[i] - fp[j] + f0
    try:
        c = np.linalg.solve(H, -grad)
    except np.linalg.LinAlgError as exc:
        raise GramSingular("reduced stationarity system is singular") from exc
    return c


@dataclass
class PhiReport:
    max_state_deviation: float   # max |s+ g'(t) s- - G(t)|
    max_lax_deviation: float     # max |Ad_{s+} Lambda'(t) - Lambda(t)|
    feher: GroupTrajectory = field(repr=False)
    mapped: np.ndarray = field(repr=False)


def reduced_flow(params: AKSParams, plus: ExponentialSection, c_plus, g0, t1: float, dt: float):
    """Reduced system at levels (params.mu, params.nu) with the orbit points
    held fixed: at = 0 (so eta+ has zero velocity), eta- = nu on a
    zero-dimensional K- orbit, and bt = -pi_-(Ad_{g'^-1} Lambda'), the gauge
    that Phi carries to the Lax gauge. Lambda' = zeta' + at - Ad_{g'} bt is
    the stationary point of the closed-form Routhian. Returns (times, g',
    Lambda')."""
    minus = ExponentialSection(params.nu, "minus")
    if minus.slice.shape[0]:
        raise SectionDomainError("fixed orbit points need nu to be a character of k-")
    eta_p, _ = plus.point(c_plus)
    eta_m = minus.point(np.zeros(0))[0]
    R = reduced_routhian(params)
    basis = params.basis
    mp = basis.n_plus
    zero = np.zeros((params.d, params.d))

    cache = {}

    def lam_of(g):
        key = g.tobytes()
        if key not in cache:
            c = polarized_lax(lambda a, b: R(g, zero, eta_p, eta_m, a, b), params.d)
            a = np.tensordot(c[:mp], basis.plus, axes=1)
            b = np.tensordot(c[mp:], basis.minus, axes=1)
            cache.clear()
            cache[key] = a - adjoint(g, b)
        return cache[key]

    def velocity(g):
        lam = lam_of(g)
        b_t = -proj_minus(adjoint(np.linalg.inv(g), lam))
        return lam + adjoint(g, b_t)

    from .integrate import sample_count
    count = sample_count(0.0, t1, dt)
    gs = np.empty((count, params.d, params.d))
    lams = np.empty_like(gs)

    def record(k, g):
        gs[k] = g
        lams[k] = lam_of(g)

    chart_flow(velocity, np.asarray(g0, float), t1, dt, record)
    return dt * np.arange(count), gs, lams


def default_slice_point(plus: ExponentialSection, seed: int = 0, size: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = rng.normal(size=plus.slice.shape[0])
    norm = np.linalg.norm(plus.element(c))
    return c * (size / norm) if norm > 0 else c


def phi_equivalence(params: AKSParams, t1: float = 5.0, dt: float = 1e-3, c_plus=None) -> PhiReport:
    """Fehér flow (Lax gauge) at (mu, nu) against the reduced flow at
    (mu, -nu) mapped through Phi with the exponential sections."""
    reduced_params = params.with_levels(params.mu, -params.nu)
    plus = ExponentialSection(params.mu, "plus")
    c_plus = default_slice_point(plus) if c_plus is None else np.asarray(c_plus, float)
    _, sp = plus.point(c_plus)
    sm = ExponentialSection(reduced_params.nu, "minus").point(np.zeros(0))[1]
    g_red0 = np.linalg.inv(sp) @ params.g0 @ np.linalg.inv(sm)
    feher = feher_flow(params, t1, dt, "lax")
    _, gs, lams = reduced_flow(reduced_params, plus, c_plus, g_red0, t1, dt)
    mapped = sp @ gs @ sm
    lam_mapped = sp @ lams @ np.linalg.inv(sp)
    return PhiReport(float(np.max(np.abs(mapped - feher.g))), float(np.max(np.abs(lam_mapped - feher.lam))),
                     feher, mapped)


def as_trajectory(traj: GroupTrajectory):
    """Flatten a group trajectory into the generic (q, v, p) record:
    q = vec(g), v = vec(g'), p = vec((g^-1 Lambda)^T), the fibre derivative
    of <Lambda, g' g^-1>; spectral invariants as diagnostics."""
    from .integrate import Trajectory

    n = len(traj.times)
    g = traj.g
    ginv = np.linalg.inv(g)
    v = traj.zeta @ g
    p = np.swapaxes(ginv @ traj.lam, 1, 2)
    return Trajectory(traj.times, g.reshape(n, -1), v.reshape(n, -1), p.reshape(n, -1),
                      {"lam_tr2": traj.traces(2), "lam_tr3": traj.traces(3)})
