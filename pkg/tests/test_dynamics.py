import copy
import math

import numpy as np
import pytest

from tiltwing.aero import ForceMoment
from tiltwing.dynamics import (IntegrationFault, RigidBodyState,
                               integrate_step, state_derivative)
from tiltwing.vehicle import actuation_from_commands


def _fm(force=(0.0, 0.0, 0.0), moment=(0.0, 0.0, 0.0)):
    return ForceMoment(force=np.asarray(force, dtype=float),
                       moment=np.asarray(moment, dtype=float))


def _airless(vp, gravity=None):
    """Variant whose air forces underflow to exactly zero."""
    vp2 = copy.deepcopy(vp)
    vp2.rho = 1e-300
    if gravity is not None:
        vp2.gravity = np.asarray(gravity, dtype=float)
    vp2.__post_init__()
    return vp2


def test_free_fall(vp):
    d = state_derivative(RigidBodyState(), _fm(), vp)
    assert np.allclose(d.v_dot, vp.gravity)
    assert np.allclose(d.omega_dot, 0.0)
    assert np.allclose(d.x_dot, 0.0)


def test_spherical_inertia_no_gyroscopic_term(vp):
    vp2 = copy.deepcopy(vp)
    vp2.inertia = 0.05 * np.eye(3)
    vp2.__post_init__()
    s = RigidBodyState(omega=np.array([3.0, -2.0, 1.0]))
    d = state_derivative(s, _fm(), vp2)
    assert np.allclose(d.omega_dot, 0.0, atol=1e-14)


def test_euler_term_hand_evaluated(vp):
    # I = diag(1,2,3), w = (1,1,0): I^-1 (-w x Iw) = (0, 0, -1/3)
    vp2 = copy.deepcopy(vp)
    vp2.inertia = np.diag([1.0, 2.0, 3.0])
    vp2.__post_init__()
    s = RigidBodyState(omega=np.array([1.0, 1.0, 0.0]))
    d = state_derivative(s, _fm(), vp2)
    assert np.allclose(d.omega_dot, [0.0, 0.0, -1.0 / 3.0], atol=1e-14)


def test_rotation_kinematics(vp):
    s = RigidBodyState(omega=np.array([0.0, 0.0, 1.0]))
    d = state_derivative(s, _fm(), vp)
    assert np.allclose(d.R_dot, s.R_IB @ np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]]))


def test_zero_wrench_drift_exact(vp):
    vp2 = _airless(vp, gravity=[0.0, 0.0, 0.0])
    act = actuation_from_commands(vp2)
    v = np.array([3.0, -1.0, 0.5])
    s = RigidBodyState(v=v.copy())
    out = integrate_step(s, act, vp2, dt=0.01)
    assert np.allclose(out.x, v * 0.01, rtol=1e-15)
    assert np.array_equal(out.v, v)


def test_conservation_torque_free(vp):
    vp2 = _airless(vp, gravity=[0.0, 0.0, 0.0])
    act = actuation_from_commands(vp2)
    s = RigidBodyState(v=np.array([1.0, 2.0, 3.0]),
                       omega=np.array([2.0, -1.0, 3.0]))
    h0 = s.R_IB @ (vp2.inertia @ s.omega)
    v0 = np.linalg.norm(s.v)
    for _ in range(1000):
        s = integrate_step(s, act, vp2, dt=0.004)
    assert np.linalg.norm(s.v) == pytest.approx(v0, rel=1e-12)
    h1 = s.R_IB @ (vp2.inertia @ s.omega)
    assert np.allclose(h1, h0, rtol=1e-7)


def test_orthonormality_maintained(vp):
    vp2 = _airless(vp, gravity=[0.0, 0.0, 0.0])
    act = actuation_from_commands(vp2)
    s = RigidBodyState(omega=np.array([3.0, -2.0, 1.5]))
    for _ in range(10_000):
        s = integrate_step(s, act, vp2, dt=0.004)
    assert np.abs(s.R_IB.T @ s.R_IB - np.eye(3)).max() < 1e-8
    assert np.linalg.det(s.R_IB) == pytest.approx(1.0, abs=1e-9)


def test_rk4_convergence_order(vp):
    """Step halving on a torque-free asymmetric spin: observed order >= 3.9."""
    vp2 = _airless(vp, gravity=[0.0, 0.0, 0.0])
    vp2.inertia = np.diag([0.04, 0.06, 0.09])
    vp2.__post_init__()
    act = actuation_from_commands(vp2)

    def run(dt, steps):
        s = RigidBodyState(omega=np.array([4.0, 1.0, -2.5]))
        for _ in range(steps):
            s = integrate_step(s, act, vp2, dt=dt)
        return np.concatenate([s.omega, s.R_IB.ravel()])

    base, n = 0.016, 50
    y1 = run(base, n)
    y2 = run(base / 2.0, 2 * n)
    y4 = run(base / 4.0, 4 * n)
    e1 = np.linalg.norm(y1 - y4)
    e2 = np.linalg.norm(y2 - y4)
    order = math.log2(e1 / e2)
    assert order >= 3.9


def test_determinism(vp):
    act = actuation_from_commands(vp, delta_w=0.6, delta_plr=0.7, delta_pt=0.2)

    def run():
        s = RigidBodyState(v=np.array([5.0, 0.2, -0.5]),
                           omega=np.array([0.3, -0.2, 0.1]))
        for _ in range(200):
            s = integrate_step(s, act, vp, dt=0.004)
        return s

    a, b = run(), run()
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.R_IB, b.R_IB)
    assert np.array_equal(a.omega, b.omega)


def test_dt_bounds(vp):
    act = actuation_from_commands(vp)
    with pytest.raises(ValueError):
        integrate_step(RigidBodyState(), act, vp, dt=0.0)
    with pytest.raises(ValueError):
        integrate_step(RigidBodyState(), act, vp, dt=0.05)


def test_nonfinite_state_faults(vp):
    act = actuation_from_commands(vp)
    s = RigidBodyState(v=np.array([1e200, 0.0, 0.0]))
    with pytest.raises(IntegrationFault):
        integrate_step(s, act, vp, dt=0.004)
