"""Exact and entropic transport solvers against independent references."""

import numpy as np
import pytest
from scipy.optimize import linprog

from flowot import simplex
from flowot.diffusion import ScalarField, zonal_bump_density
from flowot.errors import UnderResolvedError
from flowot.geometry import Model, ScaleFlow, cloud_for, distance, sphere_cloud
from flowot.transport import (
    DiscreteMeasure,
    brute_force_uniform_value,
    cost_table_to_csv,
    dirac,
    duality_gap,
    solve_entropic,
    solve_exact,
    transport_cost,
    uniform_measure,
    verify_competitive_preservation,
    wasserstein_p,
)
from flowot.costs import power_cost


def linprog_value(C, a, b):
    m, n = C.shape
    A_eq = []
    for i in range(m):
        row = np.zeros((m, n))
        row[i, :] = 1.0
        A_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((m, n))
        col[:, j] = 1.0
        A_eq.append(col.ravel())
    res = linprog(
        C.ravel(),
        A_eq=np.array(A_eq)[:-1],  # drop one redundant constraint
        b_eq=np.concatenate([a, b])[:-1],
        bounds=(0, None),
        method="highs",
    )
    assert res.status == 0
    return res.fun


def test_permutation_instance():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    a = np.array([0.5, 0.5])
    plan, pots, value = solve_exact(C, a, a)
    assert abs(value) < 1e-15
    dense = plan.dense()
    assert np.allclose(dense, np.diag(a))
    assert abs(pots.dual_value(a, a) - value) < 1e-12


def test_single_row_instance():
    C = np.array([[3.0, 1.0, 2.0]])
    a = np.array([1.0])
    b = np.array([0.2, 0.5, 0.3])
    plan, pots, value = solve_exact(C, a, b)
    assert abs(value - (0.6 + 0.5 + 0.6)) < 1e-12
    assert np.allclose(plan.dense(), b[None, :])


def test_random_instances_match_linprog():
    rng = np.random.default_rng(31)
    for _ in range(15):
        m = int(rng.integers(2, 25))
        n = int(rng.integers(2, 25))
        C = rng.random((m, n))
        a = rng.random(m) + 0.05
        a /= a.sum()
        b = rng.random(n) + 0.05
        b /= b.sum()
        plan, pots, value = solve_exact(C, a, b)
        want = linprog_value(C, a, b)
        assert abs(value - want) < 1e-8 * (1.0 + abs(want))
        gap = duality_gap(C, plan, pots, a, b)
        assert gap <= 1e-9 * (1.0 + abs(value))


def test_plan_marginals_and_potential_normalization():
    rng = np.random.default_rng(32)
    C = rng.random((30, 17))
    a = rng.random(30)
    a /= a.sum()
    b = rng.random(17)
    b /= b.sum()
    plan, pots, value = solve_exact(C, a, b)
    dense = plan.dense()
    assert np.abs(dense.sum(axis=1) - a).max() < 1e-12
    assert np.abs(dense.sum(axis=0) - b).max() < 1e-12
    assert abs(pots.phi.max()) < 1e-12
    # competitive everywhere, tight on the support
    slack = C - pots.phi[:, None] - pots.psi[None, :]
    assert slack.min() > -1e-9
    assert np.all(slack[plan.rows, plan.cols] < 1e-9)


def test_zero_weight_rows_solved_on_support():
    C = np.array([[0.0, 2.0], [5.0, 5.0], [2.0, 0.0]])
    a = np.array([0.5, 0.0, 0.5])
    b = np.array([0.5, 0.5])
    plan, pots, value = solve_exact(C, a, b)
    assert abs(value) < 1e-14
    assert not np.any(plan.rows == 1)
    slack = C - pots.phi[:, None] - pots.psi[None, :]
    assert slack.min() > -1e-9


def test_brute_force_agreement_small_uniform():
    rng = np.random.default_rng(33)
    for n in (2, 3, 4, 5, 6):
        C = rng.random((n, n))
        want = brute_force_uniform_value(C)
        u = np.full(n, 1.0 / n)
        _, _, value = solve_exact(C, u, u)
        assert abs(value - want) < 1e-12


def test_negative_marginals_rejected():
    C = np.zeros((2, 2))
    with pytest.raises(ValueError):
        solve_exact(C, np.array([-0.1, 1.1]), np.array([0.5, 0.5]))


def test_dense_cap_enforced():
    C = np.zeros((401, 2))
    a = np.full(401, 1.0 / 401)
    b = np.array([0.5, 0.5])
    with pytest.raises(Exception):
        solve_exact(C, a, b)


def test_solver_lanes_agree_exactly():
    if simplex.solve_dense_numba is None:
        pytest.skip("compiled lane unavailable")
    rng = np.random.default_rng(34)
    for _ in range(10):
        m = int(rng.integers(3, 40))
        n = int(rng.integers(3, 40))
        C = rng.random((m, n))
        a = rng.random(m) + 0.1
        a /= a.sum()
        b = rng.random(n) + 0.1
        b /= b.sum()
        out_np = simplex.solve_dense(C, a, b, force_lane="numpy")
        out_nb = simplex.solve_dense(C, a, b, force_lane="numba")
        for lhs, rhs in zip(out_np, out_nb):
            assert np.array_equal(np.asarray(lhs), np.asarray(rhs))


def test_entropic_solver_approaches_exact_value():
    rng = np.random.default_rng(35)
    C = rng.random((10, 8))
    a = rng.random(10) + 0.2
    a /= a.sum()
    b = rng.random(8) + 0.2
    b /= b.sum()
    _, _, exact = solve_exact(C, a, b)
    plan, value, err = solve_entropic(C, a, b, eps=1e-3)
    assert err <= 1e-7
    assert abs(value - exact) < 2e-2 * (1.0 + abs(exact))
    dense = plan.dense()
    assert np.abs(dense.sum(axis=1) - a).max() < 1e-6


def test_entropic_parameter_validation():
    C = np.zeros((2, 2))
    u = np.array([0.5, 0.5])
    with pytest.raises(ValueError):
        solve_entropic(C, u, u, eps=0.0)
    with pytest.raises(ValueError):
        solve_entropic(C, u, u, eps=0.1, max_iters=0)
    # a single sweep may stop before the marginal tolerance; reported honestly
    _, _, err = solve_entropic(np.array([[0.0, 5.0], [5.0, 0.0]]),
                               np.array([0.9, 0.1]), np.array([0.1, 0.9]),
                               eps=0.5, max_iters=1)
    assert err > 0.0


def test_measure_validation():
    cloud = cloud_for(Model.TORUS2, 16)
    w = np.full(cloud.size, 1.0 / cloud.size)
    m = DiscreteMeasure(cloud, np.arange(cloud.size), w)
    assert m.points.shape == (cloud.size, 2)
    with pytest.raises(ValueError):
        DiscreteMeasure(cloud, np.arange(cloud.size), w * 2.0)
    bad = w.copy()
    bad[0] = -bad[0]
    with pytest.raises(ValueError):
        DiscreteMeasure(cloud, np.arange(cloud.size), bad)


def test_wasserstein_between_diracs_is_distance():
    flow = ScaleFlow(model=Model.SPHERE2)
    cloud = cloud_for(Model.SPHERE2, 60)
    mu = dirac(cloud, 3)
    nu = dirac(cloud, 40)
    d = distance(flow, 0.5, cloud.points[3], cloud.points[40])
    for p in (1.0, 2.0):
        assert abs(wasserstein_p(flow, 0.5, mu, nu, p) - d) < 1e-12


def test_wasserstein_split_target_closed_form():
    flow = ScaleFlow(model=Model.TORUS2, c0=1.0)
    cloud = cloud_for(Model.TORUS2, 36)
    mu = dirac(cloud, 0)
    idx = np.array([0, 7, 11])
    w = np.array([0.0, 0.5, 0.5])
    nu = DiscreteMeasure(cloud, idx, w)
    d1 = distance(flow, 0.2, cloud.points[0], cloud.points[7])
    d2 = distance(flow, 0.2, cloud.points[0], cloud.points[11])
    for p in (1.0, 2.0):
        want = (0.5 * d1 ** p + 0.5 * d2 ** p) ** (1.0 / p)
        assert abs(wasserstein_p(flow, 0.2, mu, nu, p) - want) < 1e-12


def test_transport_cost_matches_wasserstein_power():
    flow = ScaleFlow(model=Model.SPHERE2)
    cloud = cloud_for(Model.SPHERE2, 80)
    rng = np.random.default_rng(36)
    w1 = rng.random(cloud.size)
    w1 /= w1.sum()
    w2 = rng.random(cloud.size)
    w2 /= w2.sum()
    mu = DiscreteMeasure(cloud, np.arange(cloud.size), w1)
    nu = DiscreteMeasure(cloud, np.arange(cloud.size), w2)
    tau = 0.4
    w2_val = wasserstein_p(flow, tau, mu, nu, 2.0)
    cost = power_cost(2.0, K=-0.5)
    want = np.exp(2.0 * (-0.5) * tau) * w2_val ** 2
    assert abs(transport_cost(flow, tau, cost, mu, nu) - want) < 1e-10 * (1.0 + want)


def test_csv_writers(tmp_path):
    rng = np.random.default_rng(37)
    C = rng.random((5, 4))
    a = np.full(5, 0.2)
    b = np.full(4, 0.25)
    plan, _, _ = solve_exact(C, a, b)
    p1 = tmp_path / "plan.csv"
    plan.to_csv(str(p1))
    lines = p1.read_text().strip().splitlines()
    assert len(lines) == plan.rows.size + 1
    p2 = tmp_path / "table.csv"
    cost_table_to_csv(str(p2), C)
    assert len(p2.read_text().strip().splitlines()) == 5 * 4 + 1


def test_preservation_audit_accepts_competitive_pair():
    flow = ScaleFlow(model=Model.SPHERE2, tau_domain=(0.0, 1.0))
    cost = power_cost(2.0)
    band = 6
    b = 1.0
    eps = 0.05
    coeffs = np.zeros(band + 1)
    coeffs[0] = -eps
    coeffs[1] = eps  # eps (P1(cos theta) - 1) <= 0 everywhere
    alpha = ScalarField(Model.SPHERE2, coeffs, band, b)
    beta = ScalarField(Model.SPHERE2, np.zeros(band + 1), band, b)
    cloud = sphere_cloud(10, 6)
    rep = verify_competitive_preservation(
        flow, cost, b, np.linspace(0.0, 1.0, 5), alpha, beta, (cloud, cloud)
    )
    assert rep.passed
    assert rep.min_slacks.size == 5
    assert np.all(rep.min_slacks >= -1e-12)


def test_preservation_audit_rejects_violating_pair():
    flow = ScaleFlow(model=Model.SPHERE2, tau_domain=(0.0, 1.0))
    cost = power_cost(2.0)
    band = 4
    coeffs = np.zeros(band + 1)
    coeffs[0] = 1e-3  # positive constant exceeds zero diagonal cost
    alpha = ScalarField(Model.SPHERE2, coeffs, band, 1.0)
    beta = ScalarField(Model.SPHERE2, np.zeros(band + 1), band, 1.0)
    cloud = sphere_cloud(8, 4)
    with pytest.raises(UnderResolvedError):
        verify_competitive_preservation(
            flow, cost, 1.0, np.array([0.5]), alpha, beta, (cloud, cloud)
        )


def test_uniform_measure_and_density_measures_feed_solver():
    flow = ScaleFlow(model=Model.SPHERE2)
    cloud = cloud_for(Model.SPHERE2, 120)
    from flowot.diffusion import density_values

    dens = zonal_bump_density(flow, 0.0, [(0.4, 3.0, 0.7), (1.3, 1.8, 0.3)],
                              band_limit=12)
    mu = density_values(dens, cloud, flow, 0.0)
    nu = uniform_measure(cloud)
    w1 = wasserstein_p(flow, 0.0, mu, nu, 1.0)
    assert w1 > 0.0
