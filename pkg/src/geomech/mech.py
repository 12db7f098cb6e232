"""Lagrangian systems in Cartan form.

A point of the Lepage-equivalent bundle is stored as ``(t, q, v, p)``; the
Cartan form there is ``(L - p.v) dt + p.dq``. On the Legendre submanifold
``p = dL/dv`` the points are produced by :func:`canonical_section`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geomcalc import (
    NumericalEvaluationError,
    ScalarField,
    fd_gradient,
    fd_jacobian,
    fd_partial,
)

DEGENERACY_COND = 1e12
FRAME_COND = 1e12
ZERO_LAGRANGIAN = 1e-10


class DegenerateLagrangian(np.linalg.LinAlgError):
    pass


class FrameError(ValueError):
    pass


ForceField = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LagrangianSystem:
    n: int
    L: ScalarField
    F: Optional[ForceField] = None
    label: str = ""
    time_dependent: bool = True

    def force(self, t, q, v) -> np.ndarray:
        if self.F is None:
            return np.zeros(self.n)
        return np.asarray(self.F(t, q, v), float)


@dataclass(frozen=True)
class CartanPoint:
    t: float
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.t], self.q, self.v, self.p])

    @classmethod
    def from_vector(cls, x, n: int) -> "CartanPoint":
        x = np.asarray(x, float)
        return cls(float(x[0]), x[1:1 + n], x[1 + n:1 + 2 * n], x[1 + 2 * n:1 + 3 * n])


@dataclass(frozen=True)
class Frame:
    """Local basis {Z_i} of vector fields on Q."""

    fields: Sequence[Callable[[np.ndarray], np.ndarray]]
    kind: str = "custom"

    @classmethod
    def coordinate(cls, n: int) -> "Frame":
        eye = np.eye(n)
        return cls(tuple((lambda q, e=eye[i]: e) for i in range(n)), kind="coordinate")

    @classmethod
    def polynomial(cls, n: int, rng, scale: float = 0.1) -> "Frame":
        """Random frame Z_i = (1 + a_i |q|^2) e_i + sum_{j>i} p_ij(q) e_j with
        a_i >= 0 and quadratic polynomials p_ij; upper triangular with a
        positive diagonal, hence a frame everywhere."""
        diag = np.abs(rng.normal(scale=scale, size=n))
        coeffs = []
        for i in range(n):
            for j in range(i + 1, n):
                c0 = rng.normal(scale=scale)
                c1 = rng.normal(scale=scale, size=n)
                c2 = rng.normal(scale=scale, size=(n, n))
                coeffs.append((i, j, c0, c1, 0.5 * (c2 + c2.T)))
        eye = np.eye(n)

        def make(i):
            terms = [c for c in coeffs if c[0] == i]

            def Z(q):
                z = eye[i] * (1.0 + diag[i] * (q @ q))
                for _, j, c0, c1, c2 in terms:
                    z[j] += c0 + c1 @ q + q @ c2 @ q
                return z
            return Z
        return cls(tuple(make(i) for i in range(n)), kind="polynomial")

    def matrix(self, q) -> np.ndarray:
        """Row i holds the components of Z_i at q."""
        q = np.asarray(q, float)
        Z = np.array([np.asarray(f(q), float) for f in self.fields])
        if np.linalg.cond(Z) >= FRAME_COND:
            raise FrameError(f"frame is singular at q={q}")
        return Z


@dataclass(frozen=True)
class ELResiduals:
    r_dyn: np.ndarray
    r_leg: np.ndarray
    r_con: np.ndarray

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.r_dyn)), np.max(np.abs(self.r_leg)),
                         np.max(np.abs(self.r_con))))


def fiber_derivative(sys: LagrangianSystem, t, q, v) -> np.ndarray:
    return sys.L.grad_v(t, q, v)


def energy(sys: LagrangianSystem, t, q, v) -> float:
    """Mechanical energy p.v - L with p = dL/dv."""
    p = fiber_derivative(sys, t, q, v)
    return float(np.dot(p, v) - sys.L(t, q, v))


def mass_matrix(sys: LagrangianSystem, t, q, v, check: bool = True) -> np.ndarray:
    M = sys.L.hess_vv(t, q, v)
    M = 0.5 * (M + M.T)
    if check:
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond >= DEGENERACY_COND:
            raise DegenerateLagrangian(
                f"mass matrix of {sys.label or 'system'} is singular (cond={cond:.3g}) "
                f"at q={np.asarray(q)}, v={np.asarray(v)}")
    return M


def canonical_section(sys: LagrangianSystem, t, q, v) -> CartanPoint:
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    return CartanPoint(float(t), q, v, fiber_derivative(sys, t, q, v))


def is_on_FL(sys: LagrangianSystem, pt: CartanPoint, tol: float = 1e-8) -> bool:
    return bool(np.max(np.abs(pt.p - fiber_derivative(sys, pt.t, pt.q, pt.v)), initial=0.0) <= tol)


def cartan_form_coeffs(sys: LagrangianSystem, pt: CartanPoint) -> tuple[float, np.ndarray]:
    """(dt coefficient, dq coefficients) of L dt + p (dq - v dt)."""
    return float(sys.L(pt.t, pt.q, pt.v) - np.dot(pt.p, pt.v)), np.array(pt.p, float)


def small_inverse(M) -> np.ndarray:
    """Inverse with closed forms for 1x1 and 2x2 blocks, which dominate the
    per-step cost of small systems. Raises LinAlgError when singular."""
    n = M.shape[0]
    if n == 1:
        if M[0, 0] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        return np.array([[1.0 / M[0, 0]]])
    if n == 2:
        a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
        det = a * d - b * c
        if det == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        return np.array([[d, -b], [-c, a]]) / det
    return np.linalg.inv(M)


def solve_accel(sys: LagrangianSystem, t, q, v) -> np.ndarray:
    """Explicit acceleration M a = dL/dq + F - (d2L/dv dq) v - d2L/dv dt."""
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    M = sys.L.hess_vv(t, q, v)
    rhs = sys.L.grad_q(t, q, v) + sys.force(t, q, v) - sys.L.hess_qv(t, q, v) @ v
    if sys.time_dependent:
        rhs = rhs - sys.L.grad_tv(t, q, v)
    # 1-norm condition number from the explicit inverse; cheaper than an SVD
    # for the small matrices met here and within a factor n of the 2-norm one
    try:
        Minv = small_inverse(M)
        cond = np.abs(M).sum(axis=0).max() * np.abs(Minv).sum(axis=0).max()
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond >= DEGENERACY_COND:
        raise DegenerateLagrangian(
            f"mass matrix of {sys.label or 'system'} is singular (cond={cond:.3g}) "
            f"at q={q}, v={v}")
    a = Minv @ rhs
    if not np.all(np.isfinite(a)):
        raise NumericalEvaluationError(f"non-finite acceleration at q={q}, v={v}")
    return a


def _fd4(samples: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central derivative at the middle of five samples."""
    s = samples
    return (s[0] - 8.0 * s[1] + 8.0 * s[3] - s[4]) / (12.0 * dt)


def el_residuals(sys: LagrangianSystem, frame: Frame, t, q, v, p) -> ELResiduals:
    """Quasi-velocity Euler-Lagrange residuals at the centre of a five-sample
    window ``t[k], q[k], v[k], p[k]`` with uniform spacing."""
    t = np.asarray(t, float)
    q = np.atleast_2d(np.asarray(q, float))
    v = np.atleast_2d(np.asarray(v, float))
    p = np.atleast_2d(np.asarray(p, float))
    if t.shape != (5,) or q.shape[0] != 5 or v.shape[0] != 5 or p.shape[0] != 5:
        raise ValueError("el_residuals needs a window of exactly five samples")
    steps = np.diff(t)
    dt = steps.mean()
    if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError("window samples are not uniformly spaced")

    tc, qc, vc, pc = t[2], q[2], v[2], p[2]
    Zc = frame.matrix(qc)
    zbar = np.array([[np.dot(p[k], f(q[k])) for f in frame.fields] for k in range(5)])
    dzbar = _fd4(zbar, dt)

    dLdq = sys.L.grad_q(tc, qc, vc)
    dLdv = sys.L.grad_v(tc, qc, vc)
    F = sys.force(tc, qc, vc)
    r_dyn = np.empty(sys.n)
    for i, Zi in enumerate(frame.fields):
        fiber = fd_jacobian(Zi, qc) @ vc
        zc_L = Zc[i] @ dLdq + fiber @ dLdv
        r_dyn[i] = dzbar[i] - (zc_L + F @ Zc[i])
    r_leg = Zc @ pc - Zc @ dLdv
    qdot = _fd4(q, dt)
    dual = np.linalg.inv(Zc.T)  # rows are the dual one-forms beta^i
    r_con = dual @ (qdot - vc)
    return ELResiduals(r_dyn, r_leg, r_con)


def trajectory_residuals(sys: LagrangianSystem, frame: Frame, times, q, v, p,
                         stride: int = 1) -> float:
    """Largest quasi-EL residual over all interior windows of a sampled curve."""
    worst = 0.0
    for c in range(2, len(times) - 2, stride):
        sl = slice(c - 2, c + 3)
        r = el_residuals(sys, frame, times[sl], q[sl], v[sl], p[sl])
        worst = max(worst, r.max_abs())
    return worst


@dataclass(frozen=True)
class ProjectableField:
    """U d/dt + Z^i d/dq^i + W^i d/dv^i with U, Z independent of v."""

    U: Callable[[float, np.ndarray], float]
    Z: Callable[[float, np.ndarray], np.ndarray]
    W: Callable[[float, np.ndarray, np.ndarray], np.ndarray]

    @classmethod
    def complete_lift_of(cls, X: Callable[[np.ndarray], np.ndarray]) -> "ProjectableField":
        return cls(lambda t, q: 0.0, lambda t, q: np.asarray(X(q), float),
                   lambda t, q, v: fd_jacobian(X, q) @ np.asarray(v, float))

    @classmethod
    def vertical_lift_of(cls, X: Callable[[np.ndarray], np.ndarray]) -> "ProjectableField":
        return cls(lambda t, q: 0.0, lambda t, q: np.zeros_like(np.asarray(q, float)),
                   lambda t, q, v: np.asarray(X(q), float))


def _total_time_derivative(f: Callable, t, q, v):
    """d/dt f(t, q) + v^i d/dq^i f(t, q) along a prolonged curve."""
    q = np.asarray(q, float)
    dt_part = fd_partial(lambda s: np.asarray(f(s[0], q), float), [t], 0)
    J = fd_jacobian(lambda y: np.atleast_1d(np.asarray(f(t, y), float)), q)
    return np.asarray(dt_part) + J @ v


@dataclass(frozen=True)
class LiftCoefficients:
    mu: float
    R: np.ndarray
    shifted: bool


def lift_coefficients(sys: LagrangianSystem, Z: ProjectableField, pt: CartanPoint) -> LiftCoefficients:
    """Scalar ``mu_Z`` and momentum components ``R`` of the lift of ``Z`` that
    is an infinitesimal symmetry of the Cartan form.

    When L vanishes at the point, L + 1 is used instead (same equations of
    motion) and ``shifted`` is set.
    """
    t, q, v, p = pt.t, pt.q, pt.v, pt.p
    L = sys.L(t, q, v)
    shifted = abs(L) <= ZERO_LAGRANGIAN
    if shifted:
        L = L + 1.0
    E = L - np.dot(p, v)
    dLdq = sys.L.grad_q(t, q, v)
    dLdv = sys.L.grad_v(t, q, v)
    Zq = np.asarray(Z.Z(t, q), float)
    W = np.asarray(Z.W(t, q, v), float)
    DtU = float(np.atleast_1d(_total_time_derivative(lambda s, y: Z.U(s, y), t, q, v))[0])
    DtZ = _total_time_derivative(Z.Z, t, q, v)
    U = float(Z.U(t, q))
    Lt = sys.L.partial_t(t, q, v) if (U != 0.0 and sys.time_dependent) else 0.0
    mu = (U * Lt + Zq @ dLdq + W @ (dLdv - p) + E * DtU + p @ DtZ) / L
    gradU = fd_gradient(lambda y: Z.U(t, y), q)
    JZ = fd_jacobian(lambda y: np.asarray(Z.Z(t, y), float), q)  # JZ[k, i] = dZ^k/dq^i
    R = mu * p - E * gradU - JZ.T @ p
    if not (np.isfinite(mu) and np.all(np.isfinite(R))):
        raise NumericalEvaluationError("non-finite lift coefficients")
    return LiftCoefficients(float(mu), R, bool(shifted))


def lifted_field(sys: LagrangianSystem, Z: ProjectableField) -> Callable[[np.ndarray], np.ndarray]:
    """The lift as a vector field on flattened points ``(t, q, v, p)``."""
    n = sys.n

    def Y(x):
        pt = CartanPoint.from_vector(x, n)
        c = lift_coefficients(sys, Z, pt)
        return np.concatenate([[Z.U(pt.t, pt.q)], Z.Z(pt.t, pt.q), Z.W(pt.t, pt.q, pt.v), c.R])
    return Y


def cartan_form_vector(sys: LagrangianSystem, x) -> np.ndarray:
    """Components of the Cartan form on the flattened chart (t, q, v, p)."""
    n = sys.n
    pt = CartanPoint.from_vector(x, n)
    dt_coeff, dq = cartan_form_coeffs(sys, pt)
    return np.concatenate([[dt_coeff], dq, np.zeros(2 * n)])


def lift_law_defect(sys: LagrangianSystem, Z: ProjectableField, pt: CartanPoint,
                    s: float = 1e-3) -> np.ndarray:
    """Componentwise ``d/ds Phi_s^* lambda - mu_Z lambda`` at ``pt``, with the
    flow of the lift advanced by one RK4 step of size ``s`` and the pullback
    taken by finite differences. The s-derivative is a Richardson-extrapolated
    central difference, since its truncation error grows like mu_Z^3."""
    from .integrate import rk4_step

    Y = lifted_field(sys, Z)
    x0 = pt.as_vector()
    flow = lambda x, h: rk4_step(lambda _t, y: Y(y), x, 0.0, h)

    def pulled_back(h):
        J = fd_jacobian(lambda x: flow(x, h), x0)  # J[b, a] = d Phi^b / dx^a
        return J.T @ cartan_form_vector(sys, flow(x0, h))

    central = lambda h: (pulled_back(h) - pulled_back(-h)) / (2.0 * h)
    derivative = (4.0 * central(0.5 * s) - central(s)) / 3.0
    shifted = sys
    if abs(sys.L(pt.t, pt.q, pt.v)) <= ZERO_LAGRANGIAN:
        shifted = LagrangianSystem(sys.n, ScalarField(lambda t, q, v: sys.L(t, q, v) + 1.0, sys.n), sys.F)
    mu = lift_coefficients(sys, Z, pt).mu
    return derivative - mu * cartan_form_vector(shifted, x0)
