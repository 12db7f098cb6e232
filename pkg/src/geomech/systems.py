"""Built-in mechanical systems with analytic partials."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geomcalc import ScalarField
from .mech import LagrangianSystem
from .symmetry import GroupAction, PrincipalConnection


@dataclass(frozen=True)
class Model:
    """A system bundled with its default initial data and symmetry."""

    system: LagrangianSystem
    q0: np.ndarray
    v0: np.ndarray
    action: Optional[GroupAction] = None
    connection: Optional[PrincipalConnection] = None
    mu: Optional[np.ndarray] = None
    t1: float = 10.0


def free_particle(n: int = 1) -> Model:
    L = ScalarField(
        lambda t, q, v: 0.5 * float(v @ v), n,
        dq=lambda t, q, v: np.zeros(n),
        dv=lambda t, q, v: np.array(v, float),
        dvv=lambda t, q, v: np.eye(n),
        dqv=lambda t, q, v: np.zeros((n, n)),
        dtv=lambda t, q, v: np.zeros(n),
        label="free_particle")
    sys = LagrangianSystem(n, L, label="free_particle", time_dependent=False)
    return Model(sys, np.zeros(n), np.ones(n))


def harmonic(n: int = 1) -> Model:
    L = ScalarField(
        lambda t, q, v: 0.5 * float(v @ v) - 0.5 * float(q @ q), n,
        dq=lambda t, q, v: -np.array(q, float),
        dv=lambda t, q, v: np.array(v, float),
        dvv=lambda t, q, v: np.eye(n),
        dqv=lambda t, q, v: np.zeros((n, n)),
        dtv=lambda t, q, v: np.zeros(n),
        label="harmonic")
    sys = LagrangianSystem(n, L, label="harmonic", time_dependent=False)
    return Model(sys, np.ones(n), np.zeros(n), t1=2 * np.pi)


def central_force() -> Model:
    """Planar particle in polar coordinates (r, theta) with V = r^2/2."""

    def func(t, q, v):
        r = q[0]
        return 0.5 * v[0] ** 2 + 0.5 * r * r * v[1] ** 2 - 0.5 * r * r

    def dqv(t, q, v):
        H = np.zeros((2, 2))
        H[1, 0] = 2.0 * q[0] * v[1]
        return H

    L = ScalarField(
        func, 2,
        dq=lambda t, q, v: np.array([q[0] * v[1] ** 2 - q[0], 0.0]),
        dv=lambda t, q, v: np.array([v[0], q[0] ** 2 * v[1]]),
        dvv=lambda t, q, v: np.diag([1.0, q[0] ** 2]),
        dqv=dqv,
        dtv=lambda t, q, v: np.zeros(2),
        label="central_force")
    sys = LagrangianSystem(2, L, label="central_force", time_dependent=False)
    return Model(sys, np.array([1.2, 0.0]), np.array([0.1, 1.0 / 1.44]),
                 GroupAction.translations(2, [1]), PrincipalConnection.split(2, [1]), np.array([1.0]))


def _kk_potential(s):
    return np.array([[-0.5 * s[1], 0.5 * s[0]]])


def _kk_potential_jac(s):
    out = np.zeros((1, 2, 2))
    out[0, 0, 1] = -0.5
    out[0, 1, 0] = 0.5
    return out


def magnetic_kk() -> Model:
    """R^2 x S^1 with L = |s'|^2/2 + (theta' + A(s).s')^2/2, A = (-y/2, x/2)."""

    def u_of(q, v):
        return v[2] - 0.5 * q[1] * v[0] + 0.5 * q[0] * v[1]

    def a_of(q):
        return np.array([-0.5 * q[1], 0.5 * q[0], 1.0])

    def func(t, q, v):
        return 0.5 * (v[0] ** 2 + v[1] ** 2) + 0.5 * u_of(q, v) ** 2

    def dq(t, q, v):
        u = u_of(q, v)
        return np.array([0.5 * u * v[1], -0.5 * u * v[0], 0.0])

    def dv(t, q, v):
        return np.array([v[0], v[1], 0.0]) + u_of(q, v) * a_of(q)

    def dvv(t, q, v):
        a = a_of(q)
        return np.diag([1.0, 1.0, 0.0]) + np.outer(a, a)

    def dqv(t, q, v):
        u = u_of(q, v)
        b = np.array([0.5 * v[1], -0.5 * v[0], 0.0])
        Da = np.zeros((3, 3))
        Da[0, 1] = -0.5
        Da[1, 0] = 0.5
        return np.outer(a_of(q), b) + u * Da

    L = ScalarField(func, 3, dq=dq, dv=dv, dvv=dvv, dqv=dqv,
                    dtv=lambda t, q, v: np.zeros(3), label="magnetic_kk")
    sys = LagrangianSystem(3, L, label="magnetic_kk", time_dependent=False)
    # theta' chosen so that J = 1; the reduced orbit is then the unit circle
    q0 = np.array([0.0, 0.0, 0.0])
    v0 = np.array([1.0, 0.0, 1.0])
    return Model(sys, q0, v0, GroupAction.translations(3, [2]),
                 PrincipalConnection.split(3, [2], _kk_potential, _kk_potential_jac), np.array([1.0]))


BUILTINS: dict[str, Callable[[], Model]] = {
    "free_particle": free_particle,
    "harmonic": harmonic,
    "central_force": central_force,
    "magnetic_kk": magnetic_kk,
}

AKS_BUILTINS = {"aks_sl2": 2, "aks_sl3": 3}
