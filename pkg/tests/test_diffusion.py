"""Spectral densities, heat evolution in both directions, fits, functionals."""

import numpy as np
import pytest

from flowot.diffusion import (
    ScalarField,
    SpectralDensity,
    density_values,
    duality_functional,
    evaluate,
    evolve_conjugate,
    evolve_dual,
    field_extrema,
    fit_torus_field,
    fit_zonal_field,
    laplace_eigenvalues,
    mass,
    periodic_gaussian_density,
    rate_integral,
    torus_grid_values,
    uniform_density,
    zonal_bump_density,
)
from flowot.errors import FlowDomainError, UnderResolvedError
from flowot.geometry import (
    Model,
    ScaleFlow,
    ScaleLaw,
    cloud_for,
    metric_scale,
    sphere_cloud,
    torus_cloud,
)

MIX_A = [(0.4, 3.0, 0.7), (1.3, 1.8, 0.3)]


def sphere_flow(domain=(0.0, 1.0)):
    return ScaleFlow(model=Model.SPHERE2, tau_domain=domain)


def torus_flow(c0=1.0):
    return ScaleFlow(model=Model.TORUS2, c0=c0)


def test_laplace_eigenvalues_layout():
    lam = laplace_eigenvalues(Model.SPHERE2, 5)
    assert np.allclose(lam, np.arange(6) * (np.arange(6) + 1.0))
    lam_t = laplace_eigenvalues(Model.TORUS2, 2)
    assert lam_t.shape == (5, 5)
    k = np.arange(-2, 3, dtype=float)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    assert np.allclose(lam_t, 4.0 * np.pi ** 2 * (k1 ** 2 + k2 ** 2))


def test_uniform_density_has_unit_mass():
    for flow, tau in ((sphere_flow(), 0.3), (torus_flow(1.8), 0.5)):
        u = uniform_density(flow, tau)
        assert isinstance(u, SpectralDensity)
        assert abs(mass(flow, u) - 1.0) < 1e-13


def test_evolve_conjugate_conserves_mass_and_damps_modes():
    flow = sphere_flow()
    u = zonal_bump_density(flow, 0.0, MIX_A, band_limit=12)
    assert abs(mass(flow, u) - 1.0) < 1e-12
    v = evolve_conjugate(flow, u, 0.0, 0.8)
    assert abs(mass(flow, v) - 1.0) < 1e-12
    assert v.clock == 0.8
    # closed form: c = 1 + 2 tau, I = log(c_b/c_a)/2, volume factor c_a/c_b
    big_i = 0.5 * np.log(2.6)
    ells = np.arange(13, dtype=float)
    factors = np.exp(-ells * (ells + 1.0) * big_i) * (1.0 / 2.6)
    assert np.allclose(v.coeffs, u.coeffs * factors, rtol=1e-12, atol=1e-15)


def test_evolve_dual_damps_modes_and_keeps_mean():
    flow = torus_flow(2.0)
    rng = np.random.default_rng(21)
    L = 3
    coeffs = rng.normal(size=(2 * L + 1, 2 * L + 1)) + 1j * rng.normal(size=(2 * L + 1, 2 * L + 1))
    coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1, ::-1]))
    f = ScalarField(Model.TORUS2, coeffs, L, 0.9)
    g = evolve_dual(flow, f, 0.9, 0.2)
    assert g.clock == 0.2
    lam = laplace_eigenvalues(Model.TORUS2, L)
    factors = np.exp(-lam * (0.9 - 0.2) / 2.0)  # static flow: I = dtau / c0
    assert np.allclose(g.coeffs, coeffs * factors, rtol=1e-12)
    assert g.coeffs[L, L] == coeffs[L, L]  # zero mode untouched


def test_evolution_direction_and_clock_guards():
    flow = sphere_flow()
    u = uniform_density(flow, 0.5, band_limit=4)
    with pytest.raises(FlowDomainError):
        evolve_conjugate(flow, u, 0.5, 0.2)
    f = ScalarField(Model.SPHERE2, np.ones(5), 4, 0.5)
    with pytest.raises(FlowDomainError):
        evolve_dual(flow, f, 0.5, 0.9)
    with pytest.raises(ValueError):
        evolve_conjugate(flow, u, 0.6, 0.9)  # clock says 0.5
    with pytest.raises(FlowDomainError):
        evolve_dual(flow, f, 0.5, -0.1)


def test_rate_integral_closed_forms():
    flow = sphere_flow()
    want = 0.5 * np.log((1.0 + 2.0 * 0.9) / (1.0 + 2.0 * 0.1))
    assert abs(rate_integral(flow, 0.1, 0.9) - want) < 1e-13
    taus = np.linspace(0.0, 1.0, 5)
    user = ScaleFlow(
        model=Model.TORUS2,
        law=ScaleLaw.USER_SCALE,
        tau_domain=(0.0, 1.0),
        tau_samples=taus,
        c_samples=1.0 - 0.3 * taus,
    )
    want_u = -np.log(1.0 - 0.3 * 0.8) / 0.3
    assert abs(rate_integral(user, 0.0, 0.8) - want_u) < 1e-9
    with pytest.raises(FlowDomainError):
        rate_integral(flow, 0.9, 0.1)


def test_evaluate_matches_direct_series():
    coeffs = np.array([0.3, -0.2, 0.5])
    f = ScalarField(Model.SPHERE2, coeffs, 2, 0.0)
    thetas = np.linspace(0.1, 3.0, 7)
    pts = np.stack([thetas, np.linspace(0.0, 5.0, 7)], axis=1)
    want = np.polynomial.legendre.legval(np.cos(thetas), coeffs)
    assert np.allclose(evaluate(f, pts), want, atol=1e-13)

    L = 2
    c = np.zeros((5, 5), dtype=complex)
    c[L + 1, L] = 0.5
    c[L - 1, L] = 0.5  # cos(2 pi x1)
    g = ScalarField(Model.TORUS2, c, L, 0.0)
    pts_t = np.array([[0.0, 0.3], [0.25, 0.8], [0.4, 0.1]])
    want_t = np.cos(2.0 * np.pi * pts_t[:, 0])
    assert np.allclose(evaluate(g, pts_t), want_t, atol=1e-13)


def test_torus_grid_values_match_pointwise_evaluation():
    rng = np.random.default_rng(22)
    L = 3
    c = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    c = 0.5 * (c + np.conj(c[::-1, ::-1]))
    f = ScalarField(Model.TORUS2, c, L, 0.0)
    n = 16
    grid = torus_grid_values(f, n)
    j = np.arange(n) / n
    pts = np.stack(np.meshgrid(j, j, indexing="ij"), axis=-1).reshape(-1, 2)
    want = evaluate(f, pts).reshape(n, n)
    assert np.allclose(grid, want, atol=1e-11)
    with pytest.raises(ValueError):
        torus_grid_values(f, 2 * L)


def test_field_extrema():
    f = ScalarField(Model.SPHERE2, np.array([0.0, 1.0]), 1, 0.0)
    lo, hi = field_extrema(f)
    assert abs(lo + 1.0) < 1e-3 and abs(hi - 1.0) < 1e-3
    c = np.zeros((3, 3), dtype=complex)
    c[2, 1] = 0.5
    c[0, 1] = 0.5
    g = ScalarField(Model.TORUS2, c, 1, 0.0)
    lo_t, hi_t = field_extrema(g)
    assert abs(lo_t + 1.0) < 1e-3 and abs(hi_t - 1.0) < 1e-3


def test_zonal_bump_density_mass_and_positivity():
    flow = sphere_flow()
    dens = zonal_bump_density(flow, 0.0, MIX_A, band_limit=16)
    assert abs(mass(flow, dens) - 1.0) < 1e-12
    assert field_extrema(dens)[0] > 0.0
    meas = density_values(dens, cloud_for(Model.SPHERE2, 300), flow, 0.0)
    assert meas.mass_defect < 1e-5
    assert abs(meas.weights.sum() - 1.0) < 1e-12


def test_zonal_bump_without_mollifier_is_under_resolved():
    # off-pole ring bumps have algebraically decaying zonal modes; without
    # smoothing the fixed quadrature cloud cannot integrate the default band
    flow = sphere_flow()
    dens = zonal_bump_density(flow, 0.0, MIX_A, smoothing=0.0)
    with pytest.raises(UnderResolvedError):
        density_values(dens, cloud_for(Model.SPHERE2, 100), flow, 0.0)


def test_periodic_gaussian_density_mass_and_discretization():
    flow = torus_flow()
    comps = [([0.25, 0.3], 0.1, 0.6), ([0.7, 0.8], 0.12, 0.4)]
    dens = periodic_gaussian_density(flow, 0.0, comps, band_limit=16)
    assert abs(mass(flow, dens) - 1.0) < 1e-12
    meas = density_values(dens, cloud_for(Model.TORUS2, 300), flow, 0.0)
    assert meas.mass_defect < 1e-6


def test_duality_functional_matches_quadrature():
    flow = sphere_flow()
    tau = 0.4
    rng = np.random.default_rng(23)
    band = 4
    phi = ScalarField(Model.SPHERE2, rng.normal(size=band + 1), band, tau)
    psi = ScalarField(Model.SPHERE2, rng.normal(size=band + 1), band, tau)
    mu = zonal_bump_density(flow, 0.0, MIX_A, band_limit=band)
    mu = evolve_conjugate(flow, mu, 0.0, tau)
    nu = uniform_density(flow, tau, band_limit=band)
    j = duality_functional(phi, psi, mu, nu, flow, tau)

    cloud = sphere_cloud(12, 8)
    c = metric_scale(flow, tau)
    term1 = np.sum(cloud.weights * evaluate(phi, cloud.points) * evaluate(mu, cloud.points)) * c
    term2 = np.sum(cloud.weights * evaluate(psi, cloud.points) * evaluate(nu, cloud.points)) * c
    assert abs(j - (term1 + term2)) < 1e-10 * (1.0 + abs(j))


def test_duality_functional_matches_quadrature_torus():
    flow = torus_flow(1.5)
    tau = 0.2
    rng = np.random.default_rng(24)
    L = 3
    def herm():
        c = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
        return 0.5 * (c + np.conj(c[::-1, ::-1]))

    phi = ScalarField(Model.TORUS2, herm(), L, tau)
    psi = ScalarField(Model.TORUS2, herm(), L, tau)
    mu = uniform_density(flow, tau, band_limit=L)
    comps = [([0.3, 0.6], 0.2, 1.0)]
    nu = periodic_gaussian_density(flow, 0.0, comps, band_limit=L)
    nu = evolve_conjugate(flow, nu, 0.0, tau)
    j = duality_functional(phi, psi, mu, nu, flow, tau)

    cloud = torus_cloud(16)
    c = metric_scale(flow, tau)
    term1 = np.sum(cloud.weights * evaluate(phi, cloud.points) * evaluate(mu, cloud.points)) * c
    term2 = np.sum(cloud.weights * evaluate(psi, cloud.points) * evaluate(nu, cloud.points)) * c
    assert abs(j - (term1 + term2)) < 1e-10 * (1.0 + abs(j))


def test_fit_zonal_field_recovers_coefficients():
    rng = np.random.default_rng(25)
    band = 6
    true = rng.normal(size=band + 1)
    nodes, weights = np.polynomial.legendre.leggauss(band + 3)
    thetas = np.arccos(nodes)
    values = np.polynomial.legendre.legval(nodes, true)
    fit = fit_zonal_field(thetas, values, band, clock=0.3, weights=weights)
    assert fit.clock == 0.3
    assert np.allclose(fit.coeffs, true, atol=1e-6)


def test_fit_torus_field_recovers_coefficients():
    rng = np.random.default_rng(26)
    L = 2
    true = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    true = 0.5 * (true + np.conj(true[::-1, ::-1]))
    f = ScalarField(Model.TORUS2, true, L, 0.0)
    cloud = torus_cloud(9)
    values = evaluate(f, cloud.points)
    fit = fit_torus_field(cloud.points, values, L, clock=0.0, weights=cloud.weights)
    assert np.allclose(fit.coeffs, true, atol=1e-6)
