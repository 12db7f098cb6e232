import numpy as np
import pytest
from hypothesis import given, strategies as st

from geomech.geomcalc import NumericalEvaluationError, ScalarField
from geomech.integrate import SimulationError, rk4_step, sample_count, simulate
from geomech.mech import DegenerateLagrangian, LagrangianSystem, energy
from geomech.symmetry import momentum_map
from geomech.systems import central_force, free_particle, harmonic


def test_rk4_step_examples():
    s = np.array([1.0, 2.0])
    assert np.array_equal(rk4_step(lambda t, y: np.zeros(2), s, 0.0, 0.1), s)
    assert rk4_step(lambda t, y: np.ones(1), [0.0], 0.0, 0.1)[0] == pytest.approx(0.1, abs=1e-15)
    y = rk4_step(lambda t, y: y, [1.0], 0.0, 0.1)[0]
    # RK4 reproduces the Taylor series of e^0.1 through the h^4 term
    assert abs(y - (1 + 0.1 + 0.1 ** 2 / 2 + 0.1 ** 3 / 6 + 0.1 ** 4 / 24)) <= 1e-8
    assert abs(y - np.exp(0.1)) <= 0.1 ** 5 / 100


def test_rk4_step_rejects_non_finite():
    with pytest.raises(NumericalEvaluationError):
        rk4_step(lambda t, y: np.array([np.inf]), [0.0], 0.0, 0.1)


@given(st.floats(0, 100), st.floats(0.01, 50), st.floats(1e-4, 1.0))
def test_sample_count(t0, T, dt):
    n = sample_count(t0, t0 + T, dt)
    assert n == np.floor(T / dt * (1 + 1e-12)) + 1 or n == np.floor(T / dt) + 1
    assert sample_count(0.0, 10.0, 1e-3) == 10001


def test_harmonic_returns_after_one_period():
    m = harmonic()
    traj = simulate(m.system, ([1.0], [0.0]), (0.0, 2 * np.pi), 2 * np.pi / 6000)
    assert abs(traj.q[-1, 0] - 1.0) <= 1e-7
    times = np.diff(traj.times)
    assert np.max(np.abs(times - times[0])) <= 1e-12


def test_free_particle_exact():
    sys = free_particle(2).system
    q0, v0 = np.array([1.0, -2.0]), np.array([0.5, 0.25])
    traj = simulate(sys, (q0, v0), (0.0, 3.0), 0.01)
    assert np.allclose(traj.q, q0 + traj.times[:, None] * v0, atol=1e-12)
    assert np.allclose(traj.p, v0)


def test_momentum_channel_drift_is_tiny():
    m = central_force()
    J = lambda t, q, v, p: float(momentum_map(m.system, m.action, t, q, v)[0])
    traj = simulate(m.system, ([2.0, 0.0], [0.1, 0.25]), (0.0, 5.0), 1e-3, {"J": J})
    assert np.max(np.abs(traj.diagnostics["J"] - 1.0)) <= 1e-8
    assert traj.diagnostics["J"].shape == traj.times.shape


def _terminal_error(dt):
    traj = simulate(harmonic().system, ([1.0], [0.0]), (0.0, 2.0), dt)
    return abs(traj.q[-1, 0] - np.cos(2.0)) + abs(traj.v[-1, 0] + np.sin(2.0))


@pytest.mark.parametrize("dt", [0.1, 0.05])
def test_fourth_order_convergence(dt):
    ratio = _terminal_error(dt) / _terminal_error(dt / 2)
    assert 12 <= ratio <= 20


def test_bit_identical_reruns():
    m = central_force()
    diag = {"E": lambda t, q, v, p: energy(m.system, t, q, v)}
    a = simulate(m.system, (m.q0, m.v0), (0.0, 1.0), 1e-2, diag)
    b = simulate(m.system, (m.q0, m.v0), (0.0, 1.0), 1e-2, diag)
    for x, y in ((a.q, b.q), (a.v, b.v), (a.p, b.p), (a.diagnostics["E"], b.diagnostics["E"])):
        assert np.array_equal(x, y)


def test_degenerate_lagrangian_aborts_with_partial():
    sys = LagrangianSystem(1, ScalarField(lambda t, q, v: v[0], 1))
    with pytest.raises(SimulationError) as info:
        simulate(sys, ([0.0], [1.0]), (0.0, 1.0), 0.1)
    assert isinstance(info.value.cause, DegenerateLagrangian)
    assert len(info.value.partial) == 1


@pytest.mark.filterwarnings("ignore:overflow")
def test_blow_up_aborts_with_partial():
    # q'' = q^2 escapes to infinity in finite time
    sys = LagrangianSystem(1, ScalarField(lambda t, q, v: 0.5 * v[0] ** 2 + q[0] ** 3 / 3, 1,
                                          dq=lambda t, q, v: np.array([q[0] ** 2]),
                                          dv=lambda t, q, v: np.array(v, float),
                                          dvv=lambda t, q, v: np.eye(1),
                                          dqv=lambda t, q, v: np.zeros((1, 1)),
                                          dtv=lambda t, q, v: np.zeros(1)), time_dependent=False)
    with pytest.raises(SimulationError) as info:
        simulate(sys, ([10.0], [0.0]), (0.0, 50.0), 0.05)
    partial = info.value.partial
    assert 1 < len(partial) < sample_count(0.0, 50.0, 0.05)
    assert np.all(np.isfinite(partial.q))


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(dt=-1.0), dict(t_span=(1.0, 1.0))])
def test_invalid_arguments(bad):
    kw = dict(dt=0.1, t_span=(0.0, 1.0)) | bad
    with pytest.raises(ValueError):
        simulate(harmonic().system, ([1.0], [0.0]), kw["t_span"], kw["dt"])


def test_initial_condition_shape_checked():
    with pytest.raises(ValueError):
        simulate(harmonic().system, ([1.0, 2.0], [0.0]), (0.0, 1.0), 0.1)
