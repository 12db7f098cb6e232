"""End-to-end acceptance criteria. Each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from geomech import aks
from geomech.geomcalc import ScalarField, as_phase_field, complete_lift, lie_bracket, vertical_lift
from geomech.integrate import simulate
from geomech.liegroup import FactorizationOutsideBigCell, factorize, mat_exp, proj_minus, proj_plus, random_sl
from geomech.mech import (CartanPoint, DegenerateLagrangian, Frame, LagrangianSystem, ProjectableField,
                          canonical_section, cartan_form_coeffs, energy, lift_coefficients, lift_law_defect,
                          solve_accel, trajectory_residuals)
from geomech.symmetry import build_reduced_system, equivalence_check, routh_decompose, routh_recompose
from geomech.systems import central_force, harmonic, magnetic_kk

T = 10.0
DT = 1e-3
SYSTEMS = {"central_force": central_force, "magnetic_kk": magnetic_kk}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.parts, self.ok = number, title, [], True

    def value(self, label, value, tol, at_least=False):
        good = bool(value >= tol) if at_least else bool(value <= tol)
        self.ok &= good
        self.parts.append(f"{label} {value:.3g} ({'>=' if at_least else '<='} {tol:g})")

    def within(self, label, value, lo, hi):
        good = bool(lo <= value <= hi)
        self.ok &= good
        self.parts.append(f"{label} {value:.3g} (in [{lo:g}, {hi:g}])")

    def runtime(self, label, seconds, limit):
        self.value(f"{label} runtime s", seconds, limit)

    def flag(self, label, good):
        self.ok &= bool(good)
        self.parts.append(f"{label} {'ok' if good else 'failed'}")

    def finish(self, capsys):
        line = f"{'PASS' if self.ok else 'FAIL'} criterion {self.number} ({self.title}): " + "; ".join(self.parts)
        with capsys.disabled():
            print("\n" + line)
        assert self.ok, line


def timed(f, *args, **kwargs):
    t0 = time.perf_counter()
    out = f(*args, **kwargs)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def runs():
    """Full trajectories at dt=1e-3 over [0, 10] with their wall times."""
    out = {}
    for name, make in SYSTEMS.items():
        m = make()
        diag = {f"J{a + 1}": (lambda t, q, v, p, a=a, m=m: float(m.action.generator_matrix(q)[a] @ p))
                for a in range(m.action.m)}
        out[name] = timed(simulate, m.system, (m.q0, m.v0), (0.0, T), DT, diag)
    return out


@pytest.fixture(scope="module")
def comparisons():
    out = {}
    for name, make in SYSTEMS.items():
        m = make()
        for dt in (5e-3, 1e-3):
            out[name, dt] = timed(equivalence_check, m.system, m.action, m.connection, m.mu,
                                  (m.q0, m.v0), T, dt)
    return out


def test_criterion_01_noether_conservation(runs, capsys):
    c = Criterion(1, "Noether conservation, T=10, dt=1e-3")
    for name, (traj, seconds) in runs.items():
        J = np.column_stack([traj.diagnostics[k] for k in traj.diagnostics])
        c.value(f"{name} max|J-J0|", float(np.max(np.abs(J - J[0]))), 1e-6)
        c.runtime(name, seconds, 5.0)
    c.finish(capsys)


def test_criterion_02_routh_equivalence(comparisons, capsys):
    c = Criterion(2, "Routh equivalence over [0,10]")
    total = 0.0
    for name in SYSTEMS:
        for dt in (5e-3, 1e-3):
            rep, seconds = comparisons[name, dt]
            c.value(f"{name} dt={dt:g} base deviation", rep.max_base_deviation, 1e-5)
            if dt == 5e-3:
                total += seconds
    c.runtime("dt=5e-3 comparisons", total, 10.0)
    m = magnetic_kk()
    flipped = equivalence_check(m.system, m.action, m.connection, m.mu, (m.q0, m.v0), T, 5e-3, gyro_sign=-1.0)
    c.value("magnetic_kk flipped-sign deviation", flipped.max_base_deviation, 1e-1, at_least=True)
    c.finish(capsys)


def test_criterion_03_quasi_el_residuals(runs, comparisons, capsys):
    c = Criterion(3, "quasi-EL residuals on acceptance trajectories")
    rng = np.random.default_rng(3)
    curves = [(name, make().system, runs[name][0]) for name, make in SYSTEMS.items()]
    for (name, dt), (rep, _) in comparisons.items():
        m = SYSTEMS[name]()
        red = build_reduced_system(m.system, m.action, m.connection, m.mu).system
        curves.append((f"{name} reduced dt={dt:g}", red, rep.reduced))
        if dt != DT:
            curves.append((f"{name} full dt={dt:g}", SYSTEMS[name]().system, rep.full))
    worst = {"coordinate": 0.0, "polynomial": 0.0}
    for label, sys_, traj in curves:
        stride = max(1, len(traj) // 1000)
        for frame in (Frame.coordinate(sys_.n), Frame.polynomial(sys_.n, rng)):
            r = trajectory_residuals(sys_, frame, traj.times, traj.q, traj.v, traj.p, stride=stride)
            worst[frame.kind] = max(worst[frame.kind], r)
    c.value(f"{len(curves)} trajectories, coordinate frame", worst["coordinate"], 1e-5)
    c.value("polynomial frame", worst["polynomial"], 1e-5)
    c.finish(capsys)


def _random_projectable(n, rng, s=0.3):
    a0, a1 = rng.normal(scale=s), rng.normal(scale=s, size=n)
    b0, b1 = rng.normal(scale=s, size=n), rng.normal(scale=s, size=(n, n))
    C = rng.normal(scale=s, size=(n, 2 * n))
    return ProjectableField(lambda t, q: a0 + a1 @ q + 0.5 * a0 * t,
                            lambda t, q: b0 + b1 @ q + 0.1 * t * b0,
                            lambda t, q, v: C @ np.concatenate([q, v]))


def _cartan_points(sys_, rng, count, min_abs_L=0.1):
    pts = []
    while len(pts) < count:
        t = float(rng.uniform())
        q = np.array([rng.uniform(0.5, 2.0), rng.uniform(-np.pi, np.pi)])
        v, p = rng.normal(size=(2, 2))
        if abs(sys_.L(t, q, v)) >= min_abs_L:
            pts.append(CartanPoint(t, q, v, p))
    return pts


def test_criterion_04_lift_law(capsys):
    c = Criterion(4, "lift law")
    rng = np.random.default_rng(4)
    sys_ = central_force().system
    worst = 0.0
    for _ in range(5):
        Z = _random_projectable(2, rng)
        for pt in _cartan_points(sys_, rng, 100):
            worst = max(worst, float(np.max(np.abs(lift_law_defect(sys_, Z, pt)))))
    c.value("5 fields x 100 points componentwise", worst, 2e-4)
    # rotations are symmetries of the central force Lagrangian in Cartesian form
    cart = LagrangianSystem(2, ScalarField(lambda t, q, v: 0.5 * v @ v - 0.5 * q @ q + 3.0, 2))
    rot = ProjectableField.complete_lift_of(lambda q: np.array([-q[1], q[0]]))
    special = 0.0
    for _ in range(100):
        q, v, p = rng.normal(size=(3, 2))
        lc = lift_coefficients(cart, rot, CartanPoint(float(rng.uniform()), q, v, p))
        cotangent = -np.array([[0.0, -1.0], [1.0, 0.0]]).T @ p
        special = max(special, abs(lc.mu), float(np.max(np.abs(lc.R - cotangent))))
    c.value("symmetry special case", special, 1e-8)
    c.finish(capsys)


def _poly_field(rng, n):
    c0, c1, c2 = rng.normal(size=n), rng.normal(size=(n, n)), rng.normal(size=(n, n, n))
    X = lambda q: c0 + c1 @ q + np.einsum("ijk,j,k->i", c2, q, q)
    DX = lambda q: c1 + np.einsum("ijk,k->ij", c2 + c2.transpose(0, 2, 1), q)
    return X, DX


def test_criterion_05_bracket_tables(capsys):
    c = Criterion(5, "lift bracket tables")
    rng = np.random.default_rng(5)
    n = 3
    worst = {"[XC,YC]": 0.0, "[XC,YV]": 0.0, "[XV,YV]": 0.0}
    for _ in range(100):
        (X, DX), (Y, DY) = _poly_field(rng, n), _poly_field(rng, n)
        XY = lambda q: DY(q) @ X(q) - DX(q) @ Y(q)
        z = rng.uniform(-1, 1, 2 * n)
        XC, YC = as_phase_field(complete_lift(X), n), as_phase_field(complete_lift(Y), n)
        XV, YV = as_phase_field(vertical_lift(X), n), as_phase_field(vertical_lift(Y), n)
        pairs = {"[XC,YC]": (XC, YC, as_phase_field(complete_lift(XY), n)),
                 "[XC,YV]": (XC, YV, as_phase_field(vertical_lift(XY), n)),
                 "[XV,YV]": (XV, YV, lambda z: np.zeros(2 * n))}
        for key, (A, B, expect) in pairs.items():
            worst[key] = max(worst[key], float(np.max(np.abs(lie_bracket(A, B, z) - expect(z)))))
    for key, val in worst.items():
        c.value(key, val, 1e-6)
    c.finish(capsys)


def test_criterion_06_cartan_form(capsys):
    c = Criterion(6, "Cartan form vs classical")
    rng = np.random.default_rng(6)
    for name, make in SYSTEMS.items():
        m = make()
        worst = 0.0
        for _ in range(100):
            t, q, v = float(rng.uniform()), rng.normal(size=m.system.n), rng.normal(size=m.system.n)
            a, b = cartan_form_coeffs(m.system, canonical_section(m.system, t, q, v))
            worst = max(worst, abs(a + energy(m.system, t, q, v)),
                        float(np.max(np.abs(b - m.system.L.grad_v(t, q, v)))))
        c.value(name, worst, 1e-10)
    c.finish(capsys)


def test_criterion_07_routh_decomposition(capsys):
    c = Criterion(7, "Routh decompose/recompose")
    rng = np.random.default_rng(7)
    for name, make in SYSTEMS.items():
        m = make()
        worst = 0.0
        for _ in range(100):
            q, alpha = rng.normal(size=(2, m.system.n))
            a_hat, sigma = routh_decompose(alpha, m.connection, q)
            worst = max(worst, float(np.max(np.abs(routh_recompose(a_hat, sigma, m.connection, q) - alpha))))
        c.value(name, worst, 1e-10)
    c.finish(capsys)


def test_criterion_08_aks_unreduced(capsys):
    c = Criterion(8, "AKS unreduced exact flow, T=10")
    for d in (2, 3):
        rep = aks.unreduced_check(aks.bounded_params(d), T, DT)
        c.value(f"SL({d}) residual", rep.worst_residual, 1e-9)
        c.value(f"SL({d}) momentum drift", rep.momentum_drift, 1e-8)
    c.finish(capsys)


def test_criterion_09_aks_feher(capsys):
    c = Criterion(9, "Feher Lagrangian and isospectrality")
    rng = np.random.default_rng(9)
    worst = 0.0
    for d in (2, 3):
        p = aks.toda_params(d)
        for _ in range(1000):
            g = mat_exp(random_sl(rng, d, 0.4))
            state = (g, random_sl(rng, d), proj_plus(random_sl(rng, d)), proj_minus(rng.normal(size=(d, d))))
            a, b = aks.feher_compact(p, *state), aks.feher_expanded(p, *state)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    c.value("two forms, 1000 states per group", worst, 1e-12)
    t0 = time.perf_counter()
    for d in (2, 3):
        rep = aks.isospectral_check(aks.toda_params(d), T, DT, 1e-5)
        c.value(f"SL({d}) tr2 drift", rep.drift_tr2, 1e-6)
        c.value(f"SL({d}) tr3 drift", rep.drift_tr3, 1e-6)
        c.value(f"SL({d}) trace gap to dt=1e-5", rep.reference_trace_gap, 1e-8)
    c.runtime("isospectral runs", time.perf_counter() - t0, 60.0)
    c.finish(capsys)


def test_criterion_10_phi_equivalence(capsys):
    c = Criterion(10, "Phi-mapped reduced vs Feher on SL(2), T=5")
    rep = aks.phi_equivalence(aks.toda_params(2), 5.0, DT)
    c.value("state deviation", rep.max_state_deviation, 1e-4)
    c.finish(capsys)


def test_criterion_11_convergence_order(capsys):
    c = Criterion(11, "RK4 convergence on the harmonic oscillator")

    def error(dt):
        traj = simulate(harmonic().system, ([1.0], [0.0]), (0.0, 2.0), dt)
        return abs(traj.q[-1, 0] - np.cos(2.0)) + abs(traj.v[-1, 0] + np.sin(2.0))
    for dt in (0.1, 0.05):
        c.within(f"error ratio dt={dt:g} vs dt/2", error(dt) / error(dt / 2), 12.0, 20.0)
    c.finish(capsys)


def test_criterion_12_degenerate_inputs(capsys):
    c = Criterion(12, "degenerate inputs")
    sys_ = LagrangianSystem(1, ScalarField(lambda t, q, v: v[0], 1))
    with pytest.raises(DegenerateLagrangian):
        solve_accel(sys_, 0.0, np.zeros(1), np.ones(1))
    c.flag("L=v1 raises DegenerateLagrangian", True)
    with pytest.raises(FactorizationOutsideBigCell):
        factorize(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    c.flag("factorize outside big cell raises", True)
    c.finish(capsys)
