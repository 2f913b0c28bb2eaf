"""Tests for the flat-state local path algebra."""

import math

import numpy as np
import pytest

from flatplan.lqmt import (
    CostWeights,
    FlatDims,
    FlatState,
    InvalidBracket,
    NonPositiveDuration,
    OutOfDomain,
    bvp_cost,
    cost_derivative,
    depressed_quartic_real_roots,
    eval_path,
    gramian,
    gramian_core,
    gramian_core_inverse,
    min_time_general,
    min_time_quartic_r2,
    phi,
    propagate,
    solve_bvp_fixed_time,
)


def state(*blocks):
    return FlatState.from_blocks(blocks)


def gramian_quadrature(r, n, R, T, num=10_000):
    """Trapezoid-rule integral of exp(At) B R^-1 B' exp(A't)."""
    ts = np.linspace(0.0, T, num)
    R_inv = np.linalg.inv(R)
    G = np.zeros((r * n, r * n))
    vals = []
    for t in ts:
        eAtB = np.zeros((r * n, n))
        for k in range(r):
            eAtB[k * n : (k + 1) * n] = t ** (r - 1 - k) / math.factorial(r - 1 - k) * np.eye(n)
        vals.append(eAtB @ R_inv @ eAtB.T)
    vals = np.array(vals)
    return np.trapezoid(vals, ts, axis=0)


def gramian_gauss(r, n, R, T, nodes=24):
    """Gauss-Legendre integral of the same integrand (exact for polynomials)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = 0.5 * T * (x + 1.0)
    R_inv = np.linalg.inv(R)
    G = np.zeros((r * n, r * n))
    for t, wt in zip(ts, w):
        eAtB = np.zeros((r * n, n))
        for k in range(r):
            eAtB[k * n : (k + 1) * n] = t ** (r - 1 - k) / math.factorial(r - 1 - k) * np.eye(n)
        G += wt * (eAtB @ R_inv @ eAtB.T)
    return 0.5 * T * G


def path_cost_quadrature(path, weights, num=10_000):
    ts = np.linspace(0.0, path.T, num)
    jets = path.jets(ts, path.dims.r)
    w = jets[path.dims.r]  # (n, num)
    integrand = np.einsum("it,ij,jt->t", w, weights.effort_weight, w)
    return np.trapezoid(integrand, ts) + weights.time_weight * path.T


def test_phi_examples():
    z = phi(state([1.0], [2.0]), 0.5)
    np.testing.assert_allclose(z.data, [2.0, 2.0])
    z0 = state([0.3, -0.2], [1.0, 0.5])
    np.testing.assert_allclose(phi(z0, 0.0).data, z0.data)
    z = phi(state([0.0], [0.0], [6.0]), 1.0)
    np.testing.assert_allclose(z.data, [3.0, 6.0, 6.0])


def test_gramian_r2_unit_time():
    core = gramian_core(2, 1.0)
    np.testing.assert_allclose(core, [[1 / 3, 1 / 2], [1 / 2, 1.0]], rtol=1e-15)


def test_gramian_matches_trapezoid_quadrature_t2():
    G = gramian(FlatDims(n=1, r=2), CostWeights.identity(1), 2.0)
    oracle = gramian_quadrature(2, 1, np.eye(1), 2.0)
    np.testing.assert_allclose(G.as_matrix(), oracle, rtol=1e-7)
    np.testing.assert_allclose(G.as_matrix(), [[8 / 3, 2.0], [2.0, 2.0]], rtol=1e-12)


def test_gramian_r1():
    core = gramian_core(1, 3.0)
    np.testing.assert_allclose(core, [[3.0]])


def test_gramian_rejects_nonpositive_duration():
    with pytest.raises(NonPositiveDuration):
        gramian_core(2, 0.0)
    with pytest.raises(NonPositiveDuration):
        gramian(FlatDims(1, 2), CostWeights.identity(1), -1.0)


def test_gramian_quadrature_random_instances():
    rng = np.random.default_rng(3)
    for _ in range(40):
        r = int(rng.integers(1, 5))
        n = int(rng.integers(1, 5))
        T = float(rng.uniform(0.1, 10.0))
        M = rng.normal(size=(n, n))
        R = M @ M.T + n * np.eye(n)
        G = gramian(FlatDims(n=n, r=r), CostWeights(R), T).as_matrix()
        oracle = gramian_gauss(r, n, R, T)
        assert np.linalg.norm(G - oracle) <= 1e-8 * np.linalg.norm(oracle)


def test_core_inverse_consistency():
    # The core's dynamic range grows like T^(2r-1), so the identity-product
    # residual scales with its condition number; compare balanced residuals.
    for r in (1, 2, 3, 4):
        for T in (0.1, 1.0, 7.3):
            core = gramian_core(r, T)
            inv = gramian_core_inverse(r, T)
            d = np.sqrt(np.diag(core))
            balanced = (core / d[:, None] / d[None, :]) @ (inv * d[:, None] * d[None, :])
            np.testing.assert_allclose(balanced, np.eye(r), atol=1e-9)


def test_bvp_rest_to_rest_example():
    # Oracle: minimize the integral of w^2 over all cubics meeting the four
    # boundary conditions, set up as a direct linear solve on the monomial
    # coefficients (computed once, frozen below); quadrature confirms 12.
    w = CostWeights.identity(1, time_weight=0.0)
    path = solve_bvp_fixed_time(state([0.0], [0.0]), state([1.0], [0.0]), 1.0, w)
    np.testing.assert_allclose(path.y_coeffs[0], [0.0, 0.0, 3.0, -2.0], atol=1e-12)
    np.testing.assert_allclose(path.w_coeffs[0], [6.0, -12.0], atol=1e-12)
    assert math.isclose(path.cost, 12.0, rel_tol=1e-12)
    assert math.isclose(path_cost_quadrature(path, w), 12.0, rel_tol=1e-7)


def test_bvp_stationary_case():
    w = CostWeights.identity(2, time_weight=0.0)
    z = state([0.4, -1.0], [0.0, 0.0])
    path = solve_bvp_fixed_time(z, z, 2.5, w)
    assert np.allclose(path.w_coeffs, 0.0)
    assert np.allclose(path.y_coeffs[:, 1:], 0.0)
    assert path.cost == pytest.approx(0.0, abs=1e-15)


def test_bvp_constant_velocity_line():
    w = CostWeights.identity(1, time_weight=0.0)
    path = solve_bvp_fixed_time(state([0.0], [1.0]), state([1.0], [1.0]), 1.0, w)
    np.testing.assert_allclose(path.y_coeffs[0], [0.0, 1.0, 0.0, 0.0], atol=1e-12)
    assert path.cost == pytest.approx(0.0, abs=1e-12)


def test_bvp_boundary_exactness_random():
    rng = np.random.default_rng(7)
    for _ in range(250):
        r = int(rng.integers(1, 5))
        n = int(rng.integers(1, 9))
        dims = FlatDims(n=n, r=r)
        z0 = FlatState(dims, rng.uniform(-10, 10, dims.size))
        zf = FlatState(dims, rng.uniform(-10, 10, dims.size))
        T = float(rng.uniform(0.1, 10.0))
        path = solve_bvp_fixed_time(z0, zf, T, CostWeights.identity(n))
        np.testing.assert_allclose(path.state_at(0.0).data, z0.data, atol=1e-9)
        np.testing.assert_allclose(path.state_at(T).data, zf.data, atol=1e-9)


def test_bvp_cost_matches_quadrature_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        r = int(rng.integers(1, 5))
        n = int(rng.integers(1, 4))
        dims = FlatDims(n=n, r=r)
        M = rng.normal(size=(n, n))
        weights = CostWeights(M @ M.T + n * np.eye(n), time_weight=float(rng.uniform(0, 2)))
        z0 = FlatState(dims, rng.uniform(-5, 5, dims.size))
        zf = FlatState(dims, rng.uniform(-5, 5, dims.size))
        T = float(rng.uniform(0.1, 10.0))
        path = solve_bvp_fixed_time(z0, zf, T, weights)
        oracle = path_cost_quadrature(path, weights)
        assert math.isclose(path.cost, oracle, rel_tol=1e-6)
        assert path.cost >= weights.time_weight * T - 1e-12
        assert math.isclose(path.cost, bvp_cost(z0, zf, T, weights), rel_tol=1e-12)


def test_bvp_degree_contract():
    rng = np.random.default_rng(13)
    for r in (1, 2, 3, 4):
        dims = FlatDims(n=2, r=r)
        z0 = FlatState(dims, rng.uniform(-3, 3, dims.size))
        zf = FlatState(dims, rng.uniform(-3, 3, dims.size))
        path = solve_bvp_fixed_time(z0, zf, 1.7, CostWeights.identity(2))
        assert path.y_coeffs.shape == (2, 2 * r)
        assert path.w_coeffs.shape == (2, r)
        # w is the r-th derivative of y, coefficient-wise.
        for m in range(r):
            fall = math.factorial(m + r) / math.factorial(m)
            np.testing.assert_allclose(
                path.w_coeffs[:, m], path.y_coeffs[:, m + r] * fall, rtol=1e-9, atol=1e-12
            )


def test_time_reversal_cost_symmetry():
    rng = np.random.default_rng(17)
    w = CostWeights.identity(3, time_weight=0.0)
    for _ in range(30):
        dims = FlatDims(n=3, r=2)
        z0 = FlatState(dims, rng.uniform(-5, 5, dims.size))
        zf = FlatState(dims, rng.uniform(-5, 5, dims.size))
        T = float(rng.uniform(0.2, 5.0))
        fwd = solve_bvp_fixed_time(z0, zf, T, w)
        bwd = solve_bvp_fixed_time(zf.reversed(), z0.reversed(), T, w)
        assert math.isclose(fwd.cost, bwd.cost, rel_tol=1e-9, abs_tol=1e-9)


def test_path_reversal_traces_same_outputs():
    rng = np.random.default_rng(19)
    dims = FlatDims(n=2, r=3)
    z0 = FlatState(dims, rng.uniform(-2, 2, dims.size))
    zf = FlatState(dims, rng.uniform(-2, 2, dims.size))
    path = solve_bvp_fixed_time(z0, zf, 1.3, CostWeights.identity(2))
    rev = path.reversed()
    np.testing.assert_allclose(rev.state_at(0.0).data, path.zf.reversed().data, atol=1e-9)
    np.testing.assert_allclose(rev.state_at(rev.T).data, path.z0.reversed().data, atol=1e-9)
    for t in np.linspace(0, 1.3, 7):
        a = path.jets(np.array([t]), 0)[0, :, 0]
        b = rev.jets(np.array([1.3 - t]), 0)[0, :, 0]
        np.testing.assert_allclose(a, b, atol=1e-9)


def quartic_grid_oracle(z0, zf, rho, t_hi=10.0, step=1e-5):
    """Dense grid search of the r=2 cost over (0, t_hi]."""
    dy = zf.block(0) - z0.block(0)
    v0, vf = z0.block(1), zf.block(1)
    c0 = float(dy @ dy)
    c1 = float((v0 + vf) @ dy)
    c2 = float(v0 @ v0 + v0 @ vf + vf @ vf)
    ts = np.arange(step, t_hi, step)
    costs = 12 * c0 / ts**3 - 12 * c1 / ts**2 + 4 * c2 / ts + rho * ts
    return float(ts[np.argmin(costs)])


def test_min_time_quartic_rest_to_rest():
    w = CostWeights.identity(1, time_weight=1.0)
    t = min_time_quartic_r2(state([0.0], [0.0]), state([1.0], [0.0]), w)
    assert math.isclose(t, 36.0**0.25, rel_tol=1e-10)
    oracle = quartic_grid_oracle(state([0.0], [0.0]), state([1.0], [0.0]), 1.0)
    assert math.isclose(t, oracle, rel_tol=1e-4)
    c = bvp_cost(state([0.0], [0.0]), state([1.0], [0.0]), t, w)
    assert math.isclose(c, 8.0 / math.sqrt(6.0), rel_tol=1e-10)


def test_min_time_quartic_degenerate_clamps():
    w = CostWeights.identity(1, time_weight=1.0)
    t = min_time_quartic_r2(state([0.0], [0.0]), state([0.0], [0.0]), w)
    assert t == pytest.approx(1e-3)


def test_min_time_quartic_longer_displacement():
    w = CostWeights.identity(1, time_weight=1.0)
    z0, zf = state([0.0], [0.0]), state([2.0], [0.0])
    t = min_time_quartic_r2(z0, zf, w)
    oracle = quartic_grid_oracle(z0, zf, 1.0)
    assert math.isclose(t, oracle, rel_tol=1e-4)
    assert math.isclose(t, 144.0**0.25, rel_tol=1e-10)


def test_min_time_quartic_random_vs_grid():
    rng = np.random.default_rng(23)
    for _ in range(25):
        n = int(rng.integers(1, 4))
        dims = FlatDims(n=n, r=2)
        z0 = FlatState(dims, rng.uniform(-2, 2, dims.size))
        zf = FlatState(dims, rng.uniform(-2, 2, dims.size))
        rho = float(rng.uniform(0.5, 2.0))
        w = CostWeights.identity(n, time_weight=rho)
        t = min_time_quartic_r2(z0, zf, w)
        oracle = quartic_grid_oracle(z0, zf, rho, t_hi=16.0)
        assert math.isclose(t, oracle, rel_tol=1e-4)


def test_min_time_stationarity():
    rng = np.random.default_rng(27)
    for _ in range(20):
        dims = FlatDims(n=2, r=2)
        z0 = FlatState(dims, rng.uniform(-3, 3, dims.size))
        zf = FlatState(dims, rng.uniform(-3, 3, dims.size))
        w = CostWeights.identity(2, time_weight=1.0)
        t = min_time_quartic_r2(z0, zf, w)
        if t <= 1e-3:  # degenerate clamp has no stationarity claim
            continue
        c = bvp_cost(z0, zf, t, w)
        h = 1e-5 * t
        dfd = (bvp_cost(z0, zf, t + h, w) - bvp_cost(z0, zf, t - h, w)) / (2 * h)
        assert abs(dfd) <= 1e-5 * max(1.0, c)
        assert bvp_cost(z0, zf, 1.01 * t, w) >= c - 1e-12
        assert bvp_cost(z0, zf, 0.99 * t, w) >= c - 1e-12


def test_min_time_general_matches_quartic():
    rng = np.random.default_rng(29)
    for _ in range(25):
        n = int(rng.integers(1, 4))
        dims = FlatDims(n=n, r=2)
        z0 = FlatState(dims, rng.uniform(-2, 2, dims.size))
        zf = FlatState(dims, rng.uniform(-2, 2, dims.size))
        w = CostWeights.identity(n, time_weight=float(rng.uniform(0.5, 2.0)))
        t_q = min_time_quartic_r2(z0, zf, w)
        res = min_time_general(z0, zf, w, bracket=(1e-3, 60.0))
        assert math.isclose(res.duration, t_q, rel_tol=1e-6)


def test_min_time_general_r1_analytic():
    # C(T) = 1/T + T has its minimum at T = 1.
    w = CostWeights.identity(1, time_weight=1.0)
    res = min_time_general(state([0.0]), state([1.0]), w, bracket=(1e-3, 60.0))
    assert math.isclose(res.duration, 1.0, rel_tol=1e-8)
    assert not res.on_boundary


def test_min_time_general_r3_vs_grid():
    z0, zf = state([0.0], [0.0], [0.0]), state([1.0], [0.0], [0.0])
    w = CostWeights.identity(1, time_weight=1.0)
    res = min_time_general(z0, zf, w, bracket=(1e-3, 60.0))
    ts = np.arange(1e-4, 20.0, 1e-4)
    costs = np.array([bvp_cost(z0, zf, t, w) for t in ts[:: len(ts) // 4000]])
    coarse = ts[:: len(ts) // 4000][np.argmin(costs)]
    fine = np.arange(max(coarse - 0.01, 1e-4), coarse + 0.01, 1e-6)
    fine_costs = np.array([bvp_cost(z0, zf, t, w) for t in fine])
    oracle = fine[np.argmin(fine_costs)]
    assert math.isclose(res.duration, oracle, rel_tol=1e-4)
    # Analytic derivative agrees with a central difference.
    h = 1e-6
    dfd = (bvp_cost(z0, zf, res.duration + h, w) - bvp_cost(z0, zf, res.duration - h, w)) / (2 * h)
    assert abs(cost_derivative(z0, zf, res.duration, w) - dfd) < 1e-5


def test_min_time_general_invalid_bracket():
    w = CostWeights.identity(1, time_weight=1.0)
    with pytest.raises(InvalidBracket):
        min_time_general(state([0.0]), state([1.0]), w, bracket=(1.0, 0.5))


def test_propagate_examples():
    w = CostWeights.identity(1, time_weight=0.0)
    path = propagate(state([1.0], [2.0]), np.array([-4.0]), 0.5, w)
    np.testing.assert_allclose(path.y_coeffs[0], [1.0, 2.0, -2.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(path.zf.data, [1.5, 0.0], atol=1e-12)
    assert math.isclose(path.cost, 16.0 * 0.5, rel_tol=1e-12)

    z0 = state([0.3, 0.1], [0.7, -0.2], [0.0, 0.0])
    drift = propagate(z0, np.zeros(2), 0.8, CostWeights.identity(2))
    np.testing.assert_allclose(drift.zf.data, phi(z0, 0.8).data, atol=1e-12)

    z0 = FlatState(FlatDims(n=2, r=3), np.zeros(6))
    path = propagate(z0, np.array([6.0, -6.0]), 1.0, CostWeights.identity(2))
    np.testing.assert_allclose(path.zf.blocks(), [[1, -1], [3, -3], [6, -6]], atol=1e-12)


def test_eval_path():
    w = CostWeights.identity(1, time_weight=0.0)
    path = solve_bvp_fixed_time(state([0.0], [0.0]), state([1.0], [0.0]), 1.0, w)
    z, u = eval_path(path, 0.0)
    np.testing.assert_allclose(z.data, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(u, [6.0], atol=1e-12)
    z, u = eval_path(path, 0.5)
    np.testing.assert_allclose(z.data, [0.5, 1.5], atol=1e-12)
    np.testing.assert_allclose(u, [0.0], atol=1e-12)
    prop = propagate(state([1.0], [2.0]), np.array([-4.0]), 0.5, w)
    z, _ = eval_path(prop, 0.25)
    np.testing.assert_allclose(z.data, [1.375, 1.0], atol=1e-12)
    with pytest.raises(OutOfDomain):
        eval_path(path, 1.1)
    # Tolerance just past the end clamps instead of raising.
    z_end, _ = eval_path(path, 1.0 + 5e-13)
    np.testing.assert_allclose(z_end.data, [1.0, 0.0], atol=1e-9)


def test_quartic_solver_against_numpy_roots():
    rng = np.random.default_rng(31)
    for _ in range(300):
        p, q, s = rng.uniform(-10, 10, 3)
        mine = sorted(depressed_quartic_real_roots(p, q, s))
        ref = np.roots([1.0, 0.0, p, q, s])
        ref = sorted(float(np.real(z)) for z in ref if abs(np.imag(z)) < 1e-7)
        assert len(mine) == len(ref), (p, q, s)
        for a, b in zip(mine, ref):
            assert math.isclose(a, b, rel_tol=1e-5, abs_tol=1e-6), (p, q, s)


def test_cost_weights_validation():
    with pytest.raises(np.linalg.LinAlgError):
        CostWeights(np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), time_weight=-0.5)
    assert CostWeights(2.5 * np.eye(3)).isotropic_scale == 2.5
    assert CostWeights(np.diag([1.0, 2.0])).isotropic_scale is None
