"""Symmetry data, momentum maps and Routh reduction on trivial bundles
Q = S x G with split coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geomcalc import ScalarField, fd_jacobian, lie_bracket
from .integrate import Trajectory, simulate
from .mech import LagrangianSystem, fiber_derivative, small_inverse

INVARIANCE_TOL = 1e-6
CONNECTION_TOL = 1e-8
BLOCK_COND = 1e12


class InvarianceFailure(ValueError):
    pass


class ConstraintSolveFailure(ArithmeticError):
    pass


class MomentumLevelMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GroupAction:
    m: int
    generators: Sequence[Callable[[np.ndarray], np.ndarray]]
    structure: Optional[np.ndarray] = None  # c[k, a, b]

    def constants(self) -> np.ndarray:
        if self.structure is None:
            return np.zeros((self.m, self.m, self.m))
        return np.asarray(self.structure, float)

    def generator_matrix(self, q) -> np.ndarray:
        """Row a holds xi_a(q)."""
        q = np.asarray(q, float)
        return np.array([np.asarray(xi(q), float) for xi in self.generators])

    def bracket_defect(self, q) -> float:
        """max |[xi_a, xi_b] + c^k_ab xi_k| at q."""
        c = self.constants()
        Xi = self.generator_matrix(q)
        worst = 0.0
        for a in range(self.m):
            for b in range(a + 1, self.m):
                lhs = lie_bracket(self.generators[a], self.generators[b], q)
                worst = max(worst, float(np.max(np.abs(lhs + c[:, a, b] @ Xi), initial=0.0)))
        return worst

    @classmethod
    def translations(cls, n: int, indices: Sequence[int]) -> "GroupAction":
        eye = np.eye(n)
        return cls(len(indices), tuple((lambda q, e=eye[i]: e) for i in indices))


@dataclass(frozen=True)
class PrincipalConnection:
    """omega(q) is the (m, n) coefficient matrix of the g-valued one-form.

    For trivial bundles ``group_indices`` lists the group coordinates; the
    remaining ones are base coordinates."""

    omega: Callable[[np.ndarray], np.ndarray]
    n: int
    group_indices: tuple
    domega: Optional[Callable[[np.ndarray], np.ndarray]] = None  # [a, i, j] = d_j omega^a_i

    @property
    def m(self) -> int:
        return len(self.group_indices)

    @property
    def base_indices(self) -> tuple:
        g = set(self.group_indices)
        return tuple(i for i in range(self.n) if i not in g)

    def __call__(self, q) -> np.ndarray:
        return np.asarray(self.omega(np.asarray(q, float)), float).reshape(self.m, self.n)

    def form(self, mu) -> Callable[[np.ndarray], np.ndarray]:
        """omega_mu = <mu, omega> as a one-form on Q."""
        mu = np.asarray(mu, float)
        return lambda q: mu @ self(q)

    def form_jacobian(self, mu, q) -> np.ndarray:
        """Jw[i, j] = d_j omega_mu_i."""
        q = np.asarray(q, float)
        if self.domega is None:
            return fd_jacobian(self.form(mu), q)
        return (np.asarray(mu, float) @ self.domega(q).reshape(self.m, -1)).reshape(self.n, self.n)

    def reproduces(self, action: GroupAction, q) -> float:
        """max |omega(xi_b) - delta_ab| at q."""
        W = self(q) @ action.generator_matrix(q).T
        return float(np.max(np.abs(W - np.eye(self.m))))

    @classmethod
    def split(cls, n: int, group_indices: Sequence[int],
              A: Optional[Callable[[np.ndarray], np.ndarray]] = None,
              dA: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> "PrincipalConnection":
        """omega^a = d theta^a + A^a_i(s) ds^i, with ``A(s)`` an (m, n - m)
        matrix over the base coordinates ``s``. ``dA(s)[a, i, j]`` is the
        optional derivative of A^a_i along s^j."""
        group = tuple(int(i) for i in group_indices)
        base = tuple(i for i in range(n) if i not in set(group))
        m = len(group)
        nb = len(base)

        block = np.ix_(range(m), base, base)

        def domega(q):
            out = np.zeros((m, n, n))
            if dA is not None and base:
                out[block] = np.asarray(dA(q[list(base)]), float).reshape(m, nb, nb)
            return out

        def omega(q):
            W = np.zeros((m, n))
            W[np.arange(m), list(group)] = 1.0
            if A is not None and base:
                W[:, list(base)] = np.asarray(A(q[list(base)]), float).reshape(m, len(base))
            return W
        return cls(omega, n, group, domega if (A is None or dA is not None) else None)


def momentum_map(sys: LagrangianSystem, action: GroupAction, t, q, v) -> np.ndarray:
    p = fiber_derivative(sys, t, q, v)
    return action.generator_matrix(q) @ p


@dataclass(frozen=True)
class InvarianceReport:
    lagrangian_defect: float
    force_defect: float
    tol: float = INVARIANCE_TOL

    @property
    def passed(self) -> bool:
        return self.lagrangian_defect <= self.tol and self.force_defect <= self.tol


def check_invariance(sys: LagrangianSystem, action: GroupAction, samples,
                     tol: float = INVARIANCE_TOL) -> InvarianceReport:
    """Largest |xi^C . L| and |F . xi| over ``samples`` of (t, q, v)."""
    worst_L = 0.0
    worst_F = 0.0
    for t, q, v in samples:
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        dq = sys.L.grad_q(t, q, v)
        dv = sys.L.grad_v(t, q, v)
        F = sys.force(t, q, v)
        for xi in action.generators:
            fiber = fd_jacobian(xi, q) @ v
            worst_L = max(worst_L, abs(float(dq @ xi(q) + dv @ fiber)))
            worst_F = max(worst_F, abs(float(F @ xi(q))))
    return InvarianceReport(worst_L, worst_F, tol)


def routhian(sys: LagrangianSystem, conn: PrincipalConnection, mu) -> ScalarField:
    """R_mu = L - <mu, omega(v)>; its velocity Hessian is that of L."""
    mu = np.asarray(mu, float)
    w = conn.form(mu)
    L = sys.L

    def func(t, q, v):
        return L.func(t, q, v) - float(w(q) @ v)

    def dq(t, q, v):
        return L.grad_q(t, q, v) - conn.form_jacobian(mu, q).T @ np.asarray(v, float)

    def dv(t, q, v):
        return L.grad_v(t, q, v) - w(np.asarray(q, float))

    def dqv(t, q, v):
        return L.hess_qv(t, q, v) - conn.form_jacobian(mu, q)

    return ScalarField(func, sys.n, dq=dq, dv=dv, dvv=L.hess_vv, dqv=dqv, dtv=L.grad_tv,
                       label=f"routhian({L.label})")


def gyro_force(conn: PrincipalConnection, mu, q, v) -> np.ndarray:
    """G_i = sum_j D_ij v^j with D_ij = d_i omega_mu_j - d_j omega_mu_i."""
    Jw = conn.form_jacobian(mu, q)
    return (Jw.T - Jw) @ np.asarray(v, float)


def routh_decompose(alpha, conn: PrincipalConnection, q) -> tuple[np.ndarray, np.ndarray]:
    """Split ``alpha`` as alpha_hat o (base projection) + sigma . omega(q)."""
    alpha = np.asarray(alpha, float)
    W = conn(q)
    g = list(conn.group_indices)
    b = list(conn.base_indices)
    WG = W[:, g]
    if np.linalg.cond(WG) >= BLOCK_COND:
        raise np.linalg.LinAlgError("connection coefficient matrix is not full rank on group directions")
    sigma = np.linalg.solve(WG.T, alpha[g])
    return alpha[b] - W[:, b].T @ sigma, sigma


def routh_recompose(alpha_hat, sigma, conn: PrincipalConnection, q) -> np.ndarray:
    W = conn(q)
    out = np.asarray(sigma, float) @ W
    out[list(conn.base_indices)] += np.asarray(alpha_hat, float)
    return out


@dataclass
class ReducedSystem:
    """Routh-reduced forced Lagrangian system on the base coordinates."""

    system: LagrangianSystem
    parent: LagrangianSystem
    action: GroupAction
    connection: PrincipalConnection
    mu: np.ndarray
    gyro_sign: float = 1.0
    _solver: Callable = field(default=None, repr=False)

    def group_velocity(self, t, s, sdot) -> np.ndarray:
        return self._solver(t, s, sdot)

    def lift(self, t, s, sdot, theta=None) -> tuple[np.ndarray, np.ndarray]:
        conn = self.connection
        q = np.zeros(conn.n)
        v = np.zeros(conn.n)
        b, g = list(conn.base_indices), list(conn.group_indices)
        q[b] = s
        v[b] = sdot
        if theta is not None:
            q[g] = theta
        v[g] = self.group_velocity(t, s, sdot)
        return q, v

    def project(self, q, v) -> tuple[np.ndarray, np.ndarray]:
        b = list(self.connection.base_indices)
        return np.asarray(q, float)[b], np.asarray(v, float)[b]

    def group_coordinate_defect(self, t, s, sdot, theta) -> float:
        """|R(s, theta) - R(s, 0)| for the parent Routhian on the level set."""
        R = routhian(self.parent, self.connection, self.mu)
        q0, v = self.lift(t, s, sdot)
        q1, _ = self.lift(t, s, sdot, theta)
        return abs(R(t, q1, v) - R(t, q0, v))


def _default_samples(n: int, count: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [(float(rng.uniform(0, 1)), rng.uniform(0.5, 1.5, n), rng.normal(size=n)) for _ in range(count)]


def _index(ix):
    """Contiguous index lists become slices (much cheaper on tiny arrays)."""
    ix = list(ix)
    if ix and ix == list(range(ix[0], ix[-1] + 1)):
        return slice(ix[0], ix[-1] + 1)
    return np.array(ix, dtype=int)


def _block(rows, cols):
    if isinstance(rows, slice) and isinstance(cols, slice):
        return rows, cols
    as_arr = lambda x: np.arange(x.start, x.stop) if isinstance(x, slice) else x
    return np.ix_(as_arr(rows), as_arr(cols))


def _quadratic_in_velocity(L: ScalarField, samples) -> bool:
    """True when the velocity Hessian does not change with the velocity at
    the sample points, so the momentum is affine in the velocities. A
    finite-difference Hessian is only compared up to its noise floor."""
    tol = 1e-12 if L.dvv is not None else 1e-6
    for t, q, v in samples:
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        M0 = L.hess_vv(t, q, v)
        for w in (2.0 * v + 1.0, -v - 0.5):
            if np.max(np.abs(L.hess_vv(t, q, w) - M0)) > tol * max(1.0, np.max(np.abs(M0))):
                return False
    return True


def build_reduced_system(sys: LagrangianSystem, action: GroupAction, conn: PrincipalConnection, mu,
                         gyro_sign: float = 1.0, samples=None) -> ReducedSystem:
    """Eliminate the group velocities through J = mu and return the reduced
    Routhian on the base with force F_reduced + gyro_sign * G."""
    mu = np.atleast_1d(np.asarray(mu, float))
    n = sys.n
    G_idx = list(conn.group_indices)
    B_idx = list(conn.base_indices)
    if mu.shape != (conn.m,) or action.m != conn.m:
        raise ValueError("momentum level, action and connection dimensions disagree")
    samples = samples if samples is not None else _default_samples(n)
    report = check_invariance(sys, action, samples)
    if not report.passed:
        raise InvarianceFailure(
            f"system is not invariant: |xi^C L| = {report.lagrangian_defect:.3g}, "
            f"|F xi| = {report.force_defect:.3g} (tol {report.tol:g})")
    for _, q, _ in samples:
        Xi = action.generator_matrix(q)
        if np.max(np.abs(Xi - np.eye(n)[G_idx])) > CONNECTION_TOL:
            raise ValueError("generators must be the coordinate fields of the group coordinates")
        err = conn.reproduces(action, q)
        if err > CONNECTION_TOL:
            raise ValueError(f"connection does not reproduce generators (error {err:.3g})")

    L = sys.L
    w = conn.form(mu)
    scale = max(1.0, float(np.max(np.abs(mu))))
    Bs, Gs = _index(B_idx), _index(G_idx)
    B_ix, G_ix = _block(Bs, Bs), _block(Gs, Gs)
    BG_ix, GB_ix = _block(Bs, Gs), _block(Gs, Bs)
    nb = len(B_idx)
    last = {"gdot": np.zeros(len(G_idx)), "key": None, "val": None}
    quadratic = _quadratic_in_velocity(L, samples)
    exact_quadratic = quadratic and L.dv is not None and L.dvv is not None

    def embed(s, sdot, gdot):
        q = np.zeros(n)
        v = np.zeros(n)
        q[Bs] = s
        v[Bs] = sdot
        v[Gs] = gdot
        return q, v

    def group_inverse(MGG, s):
        try:
            inv = small_inverse(MGG)
        except np.linalg.LinAlgError:
            inv = None
        if inv is None or (len(G_idx) > 1 and np.abs(MGG).sum(0).max() * np.abs(inv).sum(0).max() >= BLOCK_COND):
            raise ConstraintSolveFailure(f"group block of the mass matrix is singular at s={s}")
        return inv

    def newton(t, s, sdot):
        """Group velocities on J = mu, with the mass matrix, momentum and
        inverse group block at the converged point. Chord iterations keep
        the starting mass matrix and refresh only the momentum. With
        analytic partials of a Lagrangian quadratic in the velocities one
        step is exact and the momentum is updated linearly."""
        gdot = last["gdot"].copy()
        q, v = embed(s, sdot, gdot)
        p = L.grad_v(t, q, v)
        M = L.hess_vv(t, q, v)
        MGG_inv = group_inverse(M[G_ix], s)
        moved = False
        for _ in range(100):
            resid = p[Gs] - mu
            if np.abs(resid).max() <= 1e-14 * scale:
                break
            step = MGG_inv @ resid
            gdot = gdot - step
            v[Gs] = gdot
            moved = True
            if exact_quadratic:
                p = p - M[:, Gs] @ step
                break
            p = L.grad_v(t, q, v)
            # finite-difference partials stall at their noise floor
            if np.abs(step).max() <= 1e-12 * (1.0 + np.abs(gdot).max()):
                break
        if moved and not quadratic:
            M = L.hess_vv(t, q, v)
            MGG_inv = group_inverse(M[G_ix], s)
        resid = np.abs(p[Gs] - mu).max()
        if resid > 1e-9 * scale:
            raise ConstraintSolveFailure(f"momentum constraint residual {resid:.3g} at s={s}")
        last["gdot"] = gdot
        return q, v, p, M, MGG_inv

    def solve_group(t, s, sdot):
        return newton(t, np.asarray(s, float), np.asarray(sdot, float))[1][Gs]

    zeros_b = np.zeros(nb)

    def bundle(t, s, sdot):
        """All reduced partials at one point (envelope identities on the
        level set J = mu); the last point is memoised because the
        acceleration solve asks for each partial in turn."""
        s = np.asarray(s, float)
        sdot = np.asarray(sdot, float)
        key = (float(t), s.tobytes(), sdot.tobytes())
        if last["key"] == key:
            return last["val"]
        q, v, p, M, MGG_inv = newton(t, s, sdot)
        K = M[BG_ix] @ MGG_inv
        Jw = conn.form_jacobian(mu, q)
        H = L.hess_qv(t, q, v)
        wq = w(q)
        if sys.time_dependent:
            tv = L.grad_tv(t, q, v)
            dtv = tv[Bs] - K @ tv[Gs]
        else:
            dtv = zeros_b
        val = {
            "q": q, "v": v, "p": p, "wq": wq, "t": t,
            "dq": L.grad_q(t, q, v)[Bs] - (v @ Jw)[Bs],
            "dv": p[Bs] - wq[Bs],
            "dvv": M[B_ix] - K @ M[GB_ix],
            "dqv": H[B_ix] - K @ H[GB_ix] - Jw[B_ix],
            "gyro": ((Jw.T - Jw) @ v)[Bs],
            "dtv": dtv,
        }
        last["key"], last["val"] = key, val
        return val

    def part(name):
        return lambda t, s, sdot: bundle(t, s, sdot)[name]

    def func(t, s, sdot):
        d = bundle(t, s, sdot)
        return L.func(d["t"], d["q"], d["v"]) - float(d["wq"] @ d["v"])

    R = ScalarField(func, nb, dq=part("dq"), dv=part("dv"), dvv=part("dvv"),
                    dqv=part("dqv"), dtv=part("dtv"), label=f"reduced({L.label}, mu={mu.tolist()})")

    def force(t, s, sdot):
        val = bundle(t, s, sdot)
        if sys.F is None:
            return gyro_sign * val["gyro"]
        q, v = val["q"], val["v"]
        F_hat, _ = routh_decompose(sys.force(t, q, v), conn, q)
        return F_hat + gyro_sign * val["gyro"]

    reduced = LagrangianSystem(len(B_idx), R, force, label=f"{sys.label}/reduced",
                               time_dependent=sys.time_dependent)
    return ReducedSystem(reduced, sys, action, conn, mu, float(gyro_sign), solve_group)


@dataclass
class EquivalenceReport:
    max_base_deviation: float
    momentum_drift: float
    full: Trajectory
    reduced: Trajectory


def equivalence_check(sys: LagrangianSystem, action: GroupAction, conn: PrincipalConnection, mu,
                      ic, T: float, dt: float, gyro_sign: float = 1.0,
                      reduced: Optional[ReducedSystem] = None,
                      level_tol: float = 1e-10) -> EquivalenceReport:
    """Integrate the full and the reduced system from matching data and
    compare base coordinates over [0, T]."""
    mu = np.atleast_1d(np.asarray(mu, float))
    q0, v0 = (np.asarray(x, float) for x in ic)
    J0 = momentum_map(sys, action, 0.0, q0, v0)
    if np.max(np.abs(J0 - mu)) > level_tol:
        raise MomentumLevelMismatch(f"initial momentum {J0.tolist()} is not at level {mu.tolist()}")
    if reduced is None:
        reduced = build_reduced_system(sys, action, conn, mu, gyro_sign=gyro_sign)
    J_diag = {f"J{a + 1}": (lambda t, q, v, p, a=a: float(action.generator_matrix(q)[a] @ p))
              for a in range(action.m)}
    full = simulate(sys, (q0, v0), (0.0, T), dt, diagnostics=J_diag)
    s0, sdot0 = reduced.project(q0, v0)
    red = simulate(reduced.system, (s0, sdot0), (0.0, T), dt)
    base = list(conn.base_indices)
    dev = float(np.max(np.abs(full.q[:, base] - red.q)))
    J = np.column_stack([full.diagnostics[k] for k in J_diag])
    drift = float(np.max(np.abs(J - mu)))
    return EquivalenceReport(dev, drift, full, red)
