"""Finite-difference calculus on a single coordinate chart.

Vector fields and one-forms on Q are plain callables ``q -> R^n``. Lifts to the
velocity phase space return callables ``(q, v) -> (base, fiber)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FD_STEP = 1e-5
FD_STEP2 = 1e-4
PARTIAL_CHECK_TOL = 1e-5


class NumericalEvaluationError(ArithmeticError):
    pass


def _step(x: float, base: float) -> float:
    return base * max(1.0, abs(x))


def _finite(value, what="finite-difference result"):
    if not np.all(np.isfinite(value)):
        raise NumericalEvaluationError(f"non-finite {what}: {value!r}")
    return value


def fd_partial(f: Callable, x, i: int, h: Optional[float] = None) -> float:
    """Central difference of ``f`` along coordinate ``i``; works for scalar or
    array-valued ``f``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = _step(x[i], FD_STEP)
    xp = x.copy()
    xm = x.copy()
    xp[i] += h
    xm[i] -= h
    a, b = f(xp), f(xm)
    if type(a) is float and type(b) is float:
        d = (a - b) / (2.0 * h)
        if not math.isfinite(d):
            raise NumericalEvaluationError(f"non-finite finite-difference result: {d!r}")
        return d
    return _finite((np.asarray(a) - np.asarray(b)) / (2.0 * h))


def fd_gradient(f: Callable, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([fd_partial(f, x, i) for i in range(x.size)])


def fd_jacobian(F: Callable, x) -> np.ndarray:
    """J[j, k] = dF_j / dx_k."""
    x = np.asarray(x, dtype=float)
    cols = [np.atleast_1d(fd_partial(F, x, k)) for k in range(x.size)]
    return np.stack(cols, axis=-1)


def fd_second(f: Callable, x, i: int, j: int) -> float:
    """Mixed second partial by nested central differences with step FD_STEP2."""
    x = np.asarray(x, dtype=float)
    hj = _step(x[j], FD_STEP2)
    hi = _step(x[i], FD_STEP2)
    return fd_partial(lambda y: fd_partial(f, y, i, hi), x, j, hj)


def fd_hessian(f: Callable, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            H[i, j] = H[j, i] = fd_second(f, x, i, j)
    return H


@dataclass(frozen=True)
class ScalarField:
    """Scalar field on R x TQ in a chart of dimension ``n``.

    Optional analytic partials (each ``(t, q, v) -> array``) take precedence
    over finite differences: ``dq``, ``dv`` gradients, ``dvv`` and ``dqv``
    (``dqv[i, j] = d^2 f / dq^j dv^i``) Hessian blocks, ``dtv``.
    """

    func: Callable[[float, np.ndarray, np.ndarray], float]
    n: int
    dq: Optional[Callable] = None
    dv: Optional[Callable] = None
    dvv: Optional[Callable] = None
    dqv: Optional[Callable] = None
    dtv: Optional[Callable] = None
    label: str = field(default="", compare=False)

    def __call__(self, t, q, v) -> float:
        return float(self.func(t, np.asarray(q, float), np.asarray(v, float)))

    def grad_q(self, t, q, v) -> np.ndarray:
        if self.dq is not None:
            return np.asarray(self.dq(t, q, v), float)
        v = np.asarray(v, float)
        return fd_gradient(lambda y: self.func(t, y, v), q)

    def grad_v(self, t, q, v) -> np.ndarray:
        if self.dv is not None:
            return np.asarray(self.dv(t, q, v), float)
        q = np.asarray(q, float)
        return fd_gradient(lambda y: self.func(t, q, y), v)

    def partial_t(self, t, q, v) -> float:
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        return float(fd_partial(lambda s: self.func(s[0], q, v), [t], 0))

    def hess_vv(self, t, q, v) -> np.ndarray:
        if self.dvv is not None:
            return np.asarray(self.dvv(t, q, v), float)
        q = np.asarray(q, float)
        return fd_hessian(lambda y: self.func(t, q, y), v)

    def hess_qv(self, t, q, v) -> np.ndarray:
        """``H[i, j] = d^2 f / dv^i dq^j``."""
        if self.dqv is not None:
            return np.asarray(self.dqv(t, q, v), float)
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        n = q.size
        z = np.concatenate([q, v])
        g = lambda w: self.func(t, w[:n], w[n:])
        H = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                H[i, j] = fd_second(g, z, n + i, j)
        return H

    def grad_tv(self, t, q, v) -> np.ndarray:
        if self.dtv is not None:
            return np.asarray(self.dtv(t, q, v), float)
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        n = q.size
        z = np.concatenate([[t], v])
        g = lambda w: self.func(w[0], q, w[1:])
        return np.array([fd_second(g, z, 1 + i, 0) for i in range(n)])

    def validate(self, points, tol: float = PARTIAL_CHECK_TOL) -> None:
        """Check supplied analytic partials against central differences."""
        plain = ScalarField(self.func, self.n)
        for t, q, v in points:
            for name, fd in (("dq", plain.grad_q), ("dv", plain.grad_v),
                             ("dvv", plain.hess_vv), ("dqv", plain.hess_qv),
                             ("dtv", plain.grad_tv)):
                analytic = getattr(self, name)
                if analytic is None:
                    continue
                a = np.asarray(analytic(t, q, v), float)
                b = fd(t, q, v)
                err = np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))
                if err > tol:
                    raise ValueError(f"analytic partial {name} of {self.label or 'field'} "
                                     f"disagrees with finite differences by {err:.3g}")


VectorFieldSpec = Callable[[np.ndarray], np.ndarray]
OneFormSpec = Callable[[np.ndarray], np.ndarray]


DIRECTIONAL_STEP = 1e-3


def directional_derivative(Y: Callable, q, X) -> np.ndarray:
    """(X . d) Y at q, i.e. sum_k X^k dY/dq^k.

    Five-point stencil along the unit direction of X. The wider step keeps
    the result accurate when Y itself carries finite-difference noise, as
    complete lifts do."""
    q = np.asarray(q, float)
    X = np.asarray(X, float)
    scale = float(np.max(np.abs(X))) if X.size else 0.0
    if scale == 0.0:
        return np.zeros_like(np.asarray(Y(q), float))
    u = X / scale
    h = _step(float(np.max(np.abs(q))) if q.size else 0.0, DIRECTIONAL_STEP)
    f = lambda s: np.asarray(Y(q + s * u), float)
    d = (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)
    return _finite(scale * d)


def lie_bracket(X: VectorFieldSpec, Y: VectorFieldSpec, q) -> np.ndarray:
    q = np.asarray(q, float)
    return directional_derivative(Y, q, X(q)) - directional_derivative(X, q, Y(q))


def complete_lift(X: VectorFieldSpec):
    def lifted(q, v):
        q = np.asarray(q, float)
        return np.asarray(X(q), float), directional_derivative(X, q, v)
    return lifted


def vertical_lift(X: VectorFieldSpec):
    def lifted(q, v):
        q = np.asarray(q, float)
        base = np.asarray(X(q), float)
        return np.zeros_like(base), base
    return lifted


def as_phase_field(lifted, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Flatten a lifted field into a plain vector field on the (q, v) chart."""
    def field_(z):
        base, fiber = lifted(z[:n], z[n:])
        return np.concatenate([base, fiber])
    return field_


def fiber_linear(gamma: OneFormSpec) -> Callable:
    """The function v_q -> gamma_q(v_q)."""
    def f(q, v):
        return float(np.dot(np.asarray(gamma(np.asarray(q, float)), float), np.asarray(v, float)))
    return f


def d_oneform(omega: OneFormSpec, q) -> np.ndarray:
    """Exterior derivative coefficients D[i, j] = d_i omega_j - d_j omega_i."""
    J = fd_jacobian(omega, q)  # J[j, i] = d_i omega_j
    D = J.T - J
    return 0.5 * (D - D.T)
