"""Fixed-step RK4 integration with per-sample diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .geomcalc import NumericalEvaluationError
from .mech import LagrangianSystem, fiber_derivative, solve_accel

Diagnostic = Callable[[float, np.ndarray, np.ndarray, np.ndarray], float]


class SimulationError(RuntimeError):
    """Integration aborted; ``partial`` holds the samples computed so far."""

    def __init__(self, message: str, partial: "Trajectory", cause: Optional[BaseException] = None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


def rk4_step(deriv: Callable[[float, np.ndarray], np.ndarray], s, t: float, dt: float) -> np.ndarray:
    s = np.asarray(s, float)
    k1 = np.asarray(deriv(t, s), float)
    k2 = np.asarray(deriv(t + 0.5 * dt, s + 0.5 * dt * k1), float)
    k3 = np.asarray(deriv(t + 0.5 * dt, s + 0.5 * dt * k2), float)
    k4 = np.asarray(deriv(t + dt, s + dt * k3), float)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalEvaluationError(f"non-finite RK4 stage at t={t}")
    return out


def sample_count(t0: float, t1: float, dt: float) -> int:
    """floor((t1 - t0)/dt) + 1, tolerant to the rounding of e.g. 10/1e-3."""
    ratio = (t1 - t0) / dt
    return int(math.floor(ratio + 1e-9 * max(1.0, ratio))) + 1


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def states(self) -> np.ndarray:
        return np.hstack([self.q, self.v])

    def __len__(self) -> int:
        return len(self.times)

    def truncated(self, k: int) -> "Trajectory":
        return Trajectory(self.times[:k], self.q[:k], self.v[:k], self.p[:k],
                          {name: col[:k] for name, col in self.diagnostics.items()})


def integrate_ode(deriv, s0, t0: float, dt: float, count: int, observe=None):
    """Run ``count - 1`` RK4 steps from ``s0``; returns the stacked states.

    ``observe(k, t, s)`` is called after each accepted sample. On failure a
    :class:`SimulationError` is raised with the samples completed so far in
    ``partial`` (as a raw state array).
    """
    s = np.asarray(s0, float)
    states = np.empty((count, s.size))
    states[0] = s
    if observe is not None:
        observe(0, t0, s)
    for k in range(1, count):
        t = t0 + (k - 1) * dt
        try:
            s = rk4_step(deriv, s, t, dt)
        except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            err = SimulationError(f"integration failed at t={t:.6g}: {exc}", states[:k], exc)
            raise err from exc
        states[k] = s
        if observe is not None:
            observe(k, t0 + k * dt, s)
    return states


def simulate(sys: LagrangianSystem, ic, t_span, dt: float,
             diagnostics: Optional[Mapping[str, Diagnostic]] = None,
             accel: Optional[Callable] = None) -> Trajectory:
    """Integrate the explicit Euler-Lagrange equations of ``sys`` with RK4.

    ``ic`` is ``(q0, v0)``. Momenta are recorded on the Legendre section and
    each diagnostic ``f(t, q, v, p)`` is evaluated after the step. ``accel``
    overrides :func:`solve_accel` (used by systems with an algebraic part).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise ValueError("t_span must be increasing")
    q0, v0 = (np.asarray(x, float) for x in ic)
    n = sys.n
    if q0.shape != (n,) or v0.shape != (n,):
        raise ValueError(f"initial condition must have {n} coordinates and {n} velocities")
    accel = accel or (lambda t, q, v: solve_accel(sys, t, q, v))

    def deriv(t, s):
        return np.concatenate([s[n:], accel(t, s[:n], s[n:])])

    count = sample_count(t0, t1, dt)
    times = t0 + dt * np.arange(count)
    try:
        states = integrate_ode(deriv, np.concatenate([q0, v0]), t0, dt, count)
    except SimulationError as exc:
        partial = _assemble(sys, times[:len(exc.partial)], exc.partial, diagnostics)
        raise SimulationError(str(exc), partial, exc.cause) from exc.cause
    return _assemble(sys, times, states, diagnostics)


def _assemble(sys, times, states, diagnostics) -> Trajectory:
    n = sys.n
    q, v = states[:, :n].copy(), states[:, n:].copy()
    p = np.array([fiber_derivative(sys, t, qk, vk) for t, qk, vk in zip(times, q, v)]).reshape(len(times), n)
    diag = {}
    for name, fn in (diagnostics or {}).items():
        diag[name] = np.array([fn(t, qk, vk, pk) for t, qk, vk, pk in zip(times, q, v, p)], float)
    return Trajectory(np.asarray(times, float), q, v, p, diag)
