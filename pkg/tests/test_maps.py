"""Tests for the robot flatness maps against independent oracles."""

import math

import numpy as np
import pytest

from flatplan.lqmt import CostWeights, FlatDims, FlatState, solve_bvp_fixed_time
from flatplan.maps import (
    GRAVITY,
    ManipulatorLimits,
    PlanarQuadrotorLimits,
    SpeedSingularity,
    ThrustSingularity,
    TwoLinkArmDynamics,
    UnicycleLimits,
    diagonal_dynamics,
    identity_dynamics,
    integrate_rk4,
    manipulator_alpha_beta,
    manipulator_map,
    planar_quadrotor_alpha_beta,
    planar_quadrotor_map,
    quadrotor_alpha,
    quadrotor_beta,
    quadrotor_map,
    unicycle_alpha_beta,
    unicycle_map,
)


def flat(*blocks):
    return FlatState.from_blocks(blocks)


# --- unicycle ---------------------------------------------------------------


def test_unicycle_straight_heading():
    state, v, omega = unicycle_alpha_beta(flat([0.0, 0.0], [1.0, 0.0]), np.array([0.0, 1.0]), 0)
    assert state.theta == pytest.approx(0.0)
    assert v == pytest.approx(1.0)
    assert omega == pytest.approx(1.0)


def test_unicycle_reversing():
    state, v, omega = unicycle_alpha_beta(flat([0.0, 0.0], [-1.0, 0.0]), np.zeros(2), 1)
    assert state.theta == pytest.approx(0.0)
    assert v == pytest.approx(-1.0)
    assert omega == pytest.approx(0.0)


def test_unicycle_zero_speed_singularity():
    with pytest.raises(SpeedSingularity):
        unicycle_alpha_beta(flat([0.0, 0.0], [0.0, 0.0]), np.zeros(2), 0)


def test_unicycle_flat_output_roundtrip():
    m = unicycle_map()
    jets = np.array([[0.3, -0.7], [0.5, 0.2], [0.1, 0.0]])
    x = m.alpha(jets)
    np.testing.assert_allclose(m.h(x), jets[0], atol=1e-12)


# --- 3D quadrotor -----------------------------------------------------------


def test_quadrotor_hover():
    p_jets = np.zeros((4, 3))
    state = quadrotor_alpha(p_jets, (0.0, 0.0), mass=1.0)
    np.testing.assert_allclose(state.Rmat, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(state.omega, np.zeros(3), atol=1e-12)
    f, tau = quadrotor_beta(np.zeros((5, 3)), mass=1.0)
    assert f == pytest.approx(GRAVITY)
    np.testing.assert_allclose(tau, np.zeros(3), atol=1e-12)


def test_quadrotor_free_fall_singularity():
    p_jets = np.zeros((4, 3))
    p_jets[2] = [0.0, 0.0, -GRAVITY]
    with pytest.raises(ThrustSingularity):
        quadrotor_alpha(p_jets, mass=1.0)


def random_position_polys(rng):
    """Smooth degree-5 position curves plus a degree-3 yaw curve."""
    import numpy.polynomial.polynomial as P

    coeffs = rng.uniform(-0.4, 0.4, size=(3, 6))
    coeffs[:, 2] *= 0.3  # keep accelerations well away from free fall
    return coeffs


def jets_at(coeffs, t, orders):
    import numpy.polynomial.polynomial as P

    out = []
    c = coeffs.copy()
    for k in range(orders + 1):
        out.append(P.polyval(t, c.T))
        c = c[:, 1:] * np.arange(1, c.shape[1]) if c.shape[1] > 1 else np.zeros((c.shape[0], 1))
    return np.array(out)


def test_quadrotor_body_rates_match_finite_difference():
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(10):
        coeffs = random_position_polys(rng)
        t0 = rng.uniform(0.2, 0.8)
        state = quadrotor_alpha(jets_at(coeffs, t0, 3), (0.0, 0.0), mass=1.0)
        Rp = quadrotor_alpha(jets_at(coeffs, t0 + h, 3), (0.0, 0.0), mass=1.0).Rmat
        Rm = quadrotor_alpha(jets_at(coeffs, t0 - h, 3), (0.0, 0.0), mass=1.0).Rmat
        dR = (Rp - Rm) / (2 * h)
        skew = state.Rmat.T @ dR
        omega_fd = np.array([skew[2, 1], skew[0, 2], skew[1, 0]])
        np.testing.assert_allclose(state.omega, omega_fd, atol=1e-5)


def test_quadrotor_torque_matches_finite_difference():
    rng = np.random.default_rng(9)
    h = 1e-4
    J = np.array([0.1, 0.1, 0.2])
    for _ in range(10):
        coeffs = random_position_polys(rng)
        t0 = rng.uniform(0.2, 0.8)
        f, tau = quadrotor_beta(jets_at(coeffs, t0, 4), (0.0, 0.0, 0.0), 1.0, J)
        omega = lambda t: quadrotor_alpha(jets_at(coeffs, t, 3), (0.0, 0.0), mass=1.0).omega
        w0 = omega(t0)
        domega_fd = (omega(t0 + h) - omega(t0 - h)) / (2 * h)
        tau_fd = J * domega_fd + np.cross(w0, J * w0)
        np.testing.assert_allclose(tau, tau_fd, rtol=1e-4, atol=1e-6)


def test_quadrotor_rotation_orthonormal():
    rng = np.random.default_rng(13)
    for _ in range(20):
        coeffs = random_position_polys(rng)
        state = quadrotor_alpha(jets_at(coeffs, rng.uniform(0, 1), 3), (0.0, 0.0), mass=1.0)
        np.testing.assert_allclose(state.Rmat.T @ state.Rmat, np.eye(3), atol=1e-9)
        assert np.linalg.det(state.Rmat) == pytest.approx(1.0, abs=1e-9)


# --- planar quadrotor -------------------------------------------------------


def test_planar_quadrotor_hover_split():
    jets = np.zeros((5, 2))
    state, f1, f2 = planar_quadrotor_alpha_beta(jets, mass=0.034, inertia=1e-4, arm_length=0.1)
    assert f1 == pytest.approx(0.034 * GRAVITY / 2, rel=1e-12)
    assert f2 == pytest.approx(f1, rel=1e-12)
    assert state.phi == pytest.approx(0.0)
    assert f1 <= 0.65 * 0.034 * GRAVITY


def test_planar_quadrotor_thrust_limit_flags_violation():
    m = planar_quadrotor_map(limits=PlanarQuadrotorLimits(f_min=0.0, f_max=0.65 * 0.034 * GRAVITY))
    jets = np.zeros((5, 2, 1))
    jets[2, 1, 0] = 9.0  # strong upward acceleration, thrust beyond the cap
    bs = m.batch_eval(jets)
    assert not m.limits.check_batch(bs)[0]
    jets[2, 1, 0] = 0.0
    bs = m.batch_eval(jets)
    assert m.limits.check_batch(bs)[0]


def test_planar_matches_3d_restriction():
    rng = np.random.default_rng(17)
    mass, inertia, arm = 0.034, 1e-4, 0.1
    J3 = np.array([inertia, 1.0, 1.0])  # only the x-axis entry matters here
    for _ in range(10):
        c2 = rng.uniform(-0.5, 0.5, size=(2, 6))
        t0 = rng.uniform(0.2, 0.8)
        jets2 = jets_at(c2, t0, 4)
        state, f1, f2 = planar_quadrotor_alpha_beta(jets2, mass, inertia, arm)
        coeffs3 = np.zeros((3, 6))
        coeffs3[1:] = c2
        jets3 = jets_at(coeffs3, t0, 4)
        st3 = quadrotor_alpha(jets3[:4], (0.0, 0.0), mass)
        f3, tau3 = quadrotor_beta(jets3, (0.0, 0.0, 0.0), mass, J3)
        assert f1 + f2 == pytest.approx(f3, abs=1e-9)
        assert arm * (f1 - f2) == pytest.approx(tau3[0], abs=1e-9)
        assert st3.omega[0] == pytest.approx(state.phidot, abs=1e-9)
        np.testing.assert_allclose(tau3[1:], 0.0, atol=1e-9)
        # Pitch angle against the rotation matrix restricted to the y-z plane.
        np.testing.assert_allclose(
            st3.Rmat[1:, 1:],
            [[math.cos(state.phi), -math.sin(state.phi)],
             [math.sin(state.phi), math.cos(state.phi)]],
            atol=1e-9,
        )


# --- manipulator ------------------------------------------------------------


def test_manipulator_identity_dynamics():
    state, u = manipulator_alpha_beta(flat([0.1, 0.2], [0.0, 0.0]), np.array([1.5, -0.5]), identity_dynamics)
    np.testing.assert_allclose(u, [1.5, -0.5])
    np.testing.assert_allclose(state.q, [0.1, 0.2])


def test_manipulator_diagonal_mass():
    _, u = manipulator_alpha_beta(
        flat([0.0, 0.0], [0.0, 0.0]), np.array([1.0, 1.0]), diagonal_dynamics([2.0, 3.0])
    )
    np.testing.assert_allclose(u, [2.0, 3.0])


def point_mass_inverse_dynamics(dyn, q, qdot, qddot):
    """Independent inverse dynamics: sum of m_i (acc_i + g e_y) . dp_i/dq_j."""
    m1, m2, l1, l2, g = dyn.m1, dyn.m2, dyn.l1, dyn.l2, dyn.gravity
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    dp1_dq = np.array([[-l1 * s1, 0.0], [l1 * c1, 0.0]])
    dp2_dq = dp1_dq + np.array([[-l2 * s12, -l2 * s12], [l2 * c12, l2 * c12]])
    acc1 = l1 * qddot[0] * np.array([-s1, c1]) + l1 * qdot[0] ** 2 * np.array([-c1, -s1])
    w12 = qdot[0] + qdot[1]
    a12 = qddot[0] + qddot[1]
    acc2 = acc1 + l2 * a12 * np.array([-s12, c12]) + l2 * w12**2 * np.array([-c12, -s12])
    grav = np.array([0.0, g])
    return dp1_dq.T @ (m1 * (acc1 + grav)) + dp2_dq.T @ (m2 * (acc2 + grav))


def test_two_link_arm_matches_point_mass_recursion():
    rng = np.random.default_rng(21)
    dyn = TwoLinkArmDynamics(m1=1.3, m2=0.8, l1=0.5, l2=0.4, gravity=9.81)
    for _ in range(100):
        q = rng.uniform(-math.pi, math.pi, 2)
        qdot = rng.uniform(-2, 2, 2)
        qddot = rng.uniform(-4, 4, 2)
        _, u = manipulator_alpha_beta(FlatState.from_blocks([q, qdot]), qddot, dyn)
        oracle = point_mass_inverse_dynamics(dyn, q, qdot, qddot)
        np.testing.assert_allclose(u, oracle, rtol=1e-8, atol=1e-10)


# --- batched kernels agree with scalar maps ---------------------------------


@pytest.mark.parametrize(
    "make_map",
    [
        lambda: unicycle_map(),
        lambda: planar_quadrotor_map(),
        lambda: quadrotor_map(),
        lambda: manipulator_map(TwoLinkArmDynamics(), joints=2),
    ],
)
def test_batch_eval_matches_scalar(make_map):
    m = make_map()
    rng = np.random.default_rng(hash(m.name) % 2**32)
    n = m.dims.n
    jets = rng.uniform(-1.0, 1.0, size=(m.jet_order + 1, n, 6))
    jets[1] += 1.1  # keep unicycle lanes away from the speed singularity
    bs = m.batch_eval(jets)
    assert not bs.singular.any()
    for b in range(6):
        _, row, u = m.scalar_eval(jets[:, :, b])
        np.testing.assert_allclose(bs.state_rows[b], row, atol=1e-12)
        np.testing.assert_allclose(bs.controls[b], u, atol=1e-12)


def test_batch_eval_flags_singular_lanes():
    m = unicycle_map()
    jets = np.zeros((3, 2, 2))
    jets[1, :, 1] = [1.0, 0.0]
    bs = m.batch_eval(jets)
    assert bs.singular[0] and not bs.singular[1]


# --- dynamics round trip ----------------------------------------------------


@pytest.mark.parametrize(
    "make_map,z0,zf",
    [
        (lambda: unicycle_map(), [0.0, 0.0, 0.6, 0.2], [1.0, 0.5, 0.5, -0.2]),
        (lambda: planar_quadrotor_map(), [0.0, 1.0, 0.0, 0.0], [0.6, 1.4, 0.2, 0.1]),
        (
            lambda: manipulator_map(TwoLinkArmDynamics(gravity=9.81), joints=2),
            [0.2, 0.4, 0.0, 0.0],
            [0.9, -0.3, 0.3, 0.1],
        ),
    ],
)
def test_rk4_round_trip_single_segment(make_map, z0, zf):
    m = make_map()
    dims = m.dims
    path = solve_bvp_fixed_time(
        FlatState(dims, np.array(z0)), FlatState(dims, np.array(zf)), 1.0,
        CostWeights.identity(dims.n),
    )
    jets0 = path.jets(np.array([0.0]), m.jet_order)[:, :, 0]
    _, row0, _ = m.scalar_eval(jets0)

    def u_of_t(t):
        jets = path.jets(np.array([min(t, path.T)]), m.jet_order)[:, :, 0]
        return m.scalar_eval(jets)[2]

    row_T = integrate_rk4(m.ode, row0, u_of_t, path.T, dt=1e-4)
    jets_T = path.jets(np.array([path.T]), m.jet_order)[:, :, 0]
    _, row_ref, _ = m.scalar_eval(jets_T)
    err = np.linalg.norm(row_T - row_ref)
    assert err <= 1e-4 * (1.0 + np.linalg.norm(row_ref))


def test_rk4_round_trip_quadrotor():
    m = quadrotor_map()
    dims = m.dims
    z0 = FlatState(dims, np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
    zf = FlatState(dims, np.array([0.8, 0.4, 1.5, 0.2, 0.0, 0.1]))
    path = solve_bvp_fixed_time(z0, zf, 1.2, CostWeights.identity(3))
    jets0 = path.jets(np.array([0.0]), m.jet_order)[:, :, 0]
    _, row0, _ = m.scalar_eval(jets0)

    def u_of_t(t):
        jets = path.jets(np.array([min(t, path.T)]), m.jet_order)[:, :, 0]
        return m.scalar_eval(jets)[2]

    row_T = integrate_rk4(m.ode, row0, u_of_t, path.T, dt=1e-4)
    jets_T = path.jets(np.array([path.T]), m.jet_order)[:, :, 0]
    _, row_ref, _ = m.scalar_eval(jets_T)
    err = np.linalg.norm(row_T - row_ref)
    assert err <= 1e-4 * (1.0 + np.linalg.norm(row_ref)) * max(1.0, path.T)


def test_limit_checks():
    from flatplan.maps import BatchStates

    lim = UnicycleLimits(v_max=1.0, omega_max=1.5)
    m = unicycle_map(limits=lim)
    assert m.state_limit_check(np.zeros(3), np.array([0.9, 1.4]))
    assert not m.state_limit_check(np.zeros(3), np.array([1.1, 0.0]))
    bs = BatchStates(np.zeros((1, 4)), np.array([[1.0, -2.5]]), np.zeros((1, 2)), np.zeros(1, bool))
    assert not ManipulatorLimits(tau_max=2.0).check_batch(bs)[0]
