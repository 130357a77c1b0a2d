"""Spectral heat flows on scale-factor geometries.

Densities and potentials are band-limited: zonal Legendre series on the
sphere, Fourier series on the torus.  Under g_tau = c(tau) * g_std the
Laplacian is Delta_std / c(tau), so each mode evolves by an exact scalar
factor and both heat flows reduce to quadrature of 1/c.

Forward flow (densities): a' = -(lambda/c) a - (n c' / (2 c)) a, solved as
    a(t1) = a(t0) * exp(-lambda * I(t0, t1)) * (c(t0)/c(t1))^(n/2),
with I the integral of 1/c.  Backward flow (potentials): the same modal
factor without the volume term, solved only toward smaller tau (the
well-posed direction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import FlowDomainError, UnderResolvedError
from .geometry import (
    Model,
    N_DIM,
    ScaleLaw,
    metric_scale,
    ricci_coefficient,
    std_volume,
)
from .numerics import adaptive_simpson
from .transport import DiscreteMeasure

DEFAULT_BAND = {Model.SPHERE2: 48, Model.TORUS2: 16}
EPS_TRUNC = 1e-6
_CLOCK_TOL = 1e-10


@dataclass
class ScalarField:
    """Band-limited function: zonal Legendre (sphere) or Fourier (torus).

    Sphere coefficients are a real (L+1,) array over degrees 0..L; torus
    coefficients are a complex (2L+1, 2L+1) array indexed by wave numbers
    k1, k2 in [-L, L] at offsets k+L, Hermitian for real fields.  ``clock``
    is the tau at which the coefficients are current.
    """

    model: Model
    coeffs: np.ndarray
    band_limit: int
    clock: float

    def __post_init__(self):
        L = int(self.band_limit)
        if self.model is Model.SPHERE2:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
            if self.coeffs.shape != (L + 1,):
                raise ValueError(f"sphere coefficients must have shape ({L + 1},)")
        else:
            self.coeffs = np.asarray(self.coeffs, dtype=complex)
            if self.coeffs.shape != (2 * L + 1, 2 * L + 1):
                raise ValueError("torus coefficients must be (2L+1, 2L+1)")
        if not np.all(np.isfinite(np.abs(self.coeffs))):
            raise ValueError("coefficients must be finite")


@dataclass
class SpectralDensity(ScalarField):
    """A ScalarField carrying a probability density against dV_tau."""


def laplace_eigenvalues(model, band_limit):
    """Eigenvalues of -Delta_std per mode, matching the coefficient layout."""
    L = int(band_limit)
    if model is Model.SPHERE2:
        ell = np.arange(L + 1, dtype=float)
        return ell * (ell + 1.0)
    k = np.arange(-L, L + 1, dtype=float)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return 4.0 * np.pi**2 * (k1 * k1 + k2 * k2)


def rate_integral(flow, tau_a, tau_b):
    """Integral of 1/c over [tau_a, tau_b], exact for the linear scale laws."""
    if tau_b < tau_a:
        raise FlowDomainError("rate integral needs tau_a <= tau_b")
    key = ("rate", float(tau_a), float(tau_b))
    if key in flow._cache:
        return flow._cache[key]
    if flow.law is ScaleLaw.EXACT_BACKWARD_RICCI:
        slope = 2.0 * ricci_coefficient(flow.model)
        ca = metric_scale(flow, tau_a)
        if slope == 0.0:
            out = (tau_b - tau_a) / ca
        else:
            out = np.log(metric_scale(flow, tau_b) / ca) / slope
    else:
        out = adaptive_simpson(
            lambda t: 1.0 / metric_scale(flow, t), tau_a, tau_b, tol=1e-12
        )
    flow._cache[key] = out
    return out


def _check_clock(field, tau):
    if abs(field.clock - tau) > _CLOCK_TOL * (1.0 + abs(tau)):
        raise ValueError(f"field clock {field.clock} does not match tau {tau}")


def evolve_conjugate(flow, u, tau_from, tau_to):
    """Evolve a density forward from tau_from to tau_to, conserving mass."""
    if tau_to < tau_from:
        raise FlowDomainError("densities evolve toward larger tau only")
    for t in (tau_from, tau_to):
        if not flow.contains(t):
            raise FlowDomainError(f"tau={t} outside flow domain {flow.tau_domain}")
    if u.model is not flow.model:
        raise ValueError("field/flow model mismatch")
    _check_clock(u, tau_from)
    lam = laplace_eigenvalues(u.model, u.band_limit)
    vol = (metric_scale(flow, tau_from) / metric_scale(flow, tau_to)) ** (N_DIM / 2.0)
    factors = np.exp(-lam * rate_integral(flow, tau_from, tau_to)) * vol
    return type(u)(u.model, u.coeffs * factors, u.band_limit, float(tau_to))


def evolve_dual(flow, f, tau_from, tau_to):
    """Evolve a potential backward from tau_from down to tau_to.

    Solving toward larger tau is the ill-posed direction and is rejected.
    The mean mode is untouched (zero eigenvalue).
    """
    if tau_to > tau_from:
        raise FlowDomainError("potentials evolve toward smaller tau only")
    for t in (tau_from, tau_to):
        if not flow.contains(t):
            raise FlowDomainError(f"tau={t} outside flow domain {flow.tau_domain}")
    if f.model is not flow.model:
        raise ValueError("field/flow model mismatch")
    _check_clock(f, tau_from)
    lam = laplace_eigenvalues(f.model, f.band_limit)
    factors = np.exp(-lam * rate_integral(flow, tau_to, tau_from))
    return type(f)(f.model, f.coeffs * factors, f.band_limit, float(tau_to))


# ---------------------------------------------------------------------------
# evaluation


def evaluate(field, points):
    """Evaluate a field at intrinsic points; (N, 2) -> (N,), (2,) -> scalar."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if field.model is Model.SPHERE2:
        vals = np.polynomial.legendre.legval(np.cos(pts[:, 0]), field.coeffs)
    else:
        L = field.band_limit
        k = np.arange(-L, L + 1, dtype=float)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        kvec = np.stack([k1.ravel(), k2.ravel()], axis=-1)
        phase = np.exp(2j * np.pi * (pts @ kvec.T))
        vals = np.real(phase @ field.coeffs.ravel())
    return float(vals[0]) if single else vals


def torus_grid_values(field, n):
    """Field values on the uniform n x n lattice j/n via zero-padded FFT."""
    L = field.band_limit
    if n <= 2 * L:
        raise ValueError("grid must exceed twice the band limit")
    spec = np.zeros((n, n), dtype=complex)
    idx = np.arange(-L, L + 1) % n
    spec[np.ix_(idx, idx)] = field.coeffs
    return np.real(np.fft.ifft2(spec)) * n * n


def field_extrema(field, n=512):
    """(min, max) of the field on a dense evaluation grid."""
    if field.model is Model.SPHERE2:
        x = np.cos(np.linspace(0.0, np.pi, n))
        vals = np.polynomial.legendre.legval(x, field.coeffs)
    else:
        vals = torus_grid_values(field, max(n, 4 * field.band_limit + 4))
    return float(np.min(vals)), float(np.max(vals))


def mass(flow, u):
    """Total measure of u against dV_tau at the field's clock."""
    c = metric_scale(flow, u.clock)
    vol = std_volume(u.model) * c ** (N_DIM / 2.0)
    if u.model is Model.SPHERE2:
        return float(u.coeffs[0] * vol)
    L = u.band_limit
    return float(np.real(u.coeffs[L, L]) * vol)


def density_values(u, cloud, flow, tau):
    """Discretize dmu = u dV_tau onto a cloud as a probability measure.

    Weights are u(x_i) * c^(n/2) * w_i, clipped at zero and renormalized to
    sum one.  The recorded mass defect combines the quadrature error of the
    raw weights against unit mass and any clipped-away negative mass; a
    defect above 1e-4 signals under-resolution and raises.
    """
    _check_clock(u, tau)
    if cloud.model is not u.model or cloud.model is not flow.model:
        raise ValueError("cloud/field/flow model mismatch")
    vals = evaluate(u, cloud.points)
    raw = vals * metric_scale(flow, tau) ** (N_DIM / 2.0) * cloud.weights
    negative = float(np.sum(np.minimum(raw, 0.0)))
    defect = abs(float(raw.sum()) - 1.0) - negative
    if defect > 1e-4:
        raise UnderResolvedError(
            f"discretized density mass defect {defect:.3e} exceeds 1e-4"
        )
    clipped = np.maximum(raw, 0.0)
    return DiscreteMeasure(
        cloud=cloud,
        indices=np.arange(cloud.size),
        weights=clipped / clipped.sum(),
        mass_defect=defect,
    )


def duality_functional(phi, psi, mu, nu, flow, tau):
    """J = integral of phi dmu + integral of psi dnu, computed spectrally.

    Exact for band-limited integrands: mode orthogonality reduces each term
    to a weighted coefficient inner product times the volume factor.
    """
    for f in (phi, psi, mu, nu):
        _check_clock(f, tau)
        if f.model is not flow.model:
            raise ValueError("field/flow model mismatch")
        if f.band_limit != phi.band_limit:
            raise ValueError("band limit mismatch in duality functional")
    c = metric_scale(flow, tau)
    vol = c ** (N_DIM / 2.0)
    if flow.model is Model.SPHERE2:
        L = phi.band_limit
        norms = 4.0 * np.pi / (2.0 * np.arange(L + 1) + 1.0)
        term1 = np.sum(phi.coeffs * mu.coeffs * norms)
        term2 = np.sum(psi.coeffs * nu.coeffs * norms)
    else:
        term1 = np.real(np.sum(phi.coeffs * np.conj(mu.coeffs)))
        term2 = np.real(np.sum(psi.coeffs * np.conj(nu.coeffs)))
    return float(vol * (term1 + term2))


# ---------------------------------------------------------------------------
# builders


def uniform_density(flow, tau, band_limit=None):
    """The uniform probability density at clock tau."""
    L = DEFAULT_BAND[flow.model] if band_limit is None else int(band_limit)
    c = metric_scale(flow, tau)
    if flow.model is Model.SPHERE2:
        coeffs = np.zeros(L + 1)
        coeffs[0] = 1.0 / (4.0 * np.pi * c ** (N_DIM / 2.0))
        return SpectralDensity(Model.SPHERE2, coeffs, L, float(tau))
    coeffs = np.zeros((2 * L + 1, 2 * L + 1), dtype=complex)
    coeffs[L, L] = 1.0 / c ** (N_DIM / 2.0)
    return SpectralDensity(Model.TORUS2, coeffs, L, float(tau))


def zonal_bump_density(flow, tau, components, band_limit=None, check_positive=True,
                       smoothing=0.01):
    """Probability density from mollified zonal ring bumps on the sphere.

    Each component is (center_colatitude, concentration, weight); the profile
    is the weighted sum of exp(concentration * (cos(theta - center) - 1)),
    projected onto Legendre modes by Gauss-Legendre quadrature, mollified by
    the heat factor exp(-smoothing * l (l+1)) (off-pole rings have only
    algebraically decaying mode amplitudes, which quadrature on coarse clouds
    cannot integrate to tolerance), and normalized to unit mass at clock tau.
    """
    if flow.model is not Model.SPHERE2:
        raise ValueError("zonal bumps are sphere densities")
    L = DEFAULT_BAND[Model.SPHERE2] if band_limit is None else int(band_limit)
    nodes, wq = roots_legendre(4 * (L + 1))
    theta = np.arccos(nodes)
    prof = np.zeros_like(theta)
    for center, conc, weight in components:
        if conc < 0 or weight <= 0:
            raise ValueError("bump concentration must be >= 0, weight > 0")
        prof += weight * np.exp(conc * (np.cos(theta - center) - 1.0))
    van = np.polynomial.legendre.legvander(nodes, L)
    coeffs = (van * (prof * wq)[:, None]).sum(axis=0)
    ells = np.arange(L + 1)
    coeffs *= (2.0 * ells + 1.0) / 2.0
    coeffs *= np.exp(-smoothing * ells * (ells + 1.0))
    total = 4.0 * np.pi * metric_scale(flow, tau) ** (N_DIM / 2.0) * coeffs[0]
    u = SpectralDensity(Model.SPHERE2, coeffs / total, L, float(tau))
    if check_positive:
        lo, _ = field_extrema(u)
        if lo < -EPS_TRUNC:
            raise UnderResolvedError(
                f"band limit {L} leaves density minimum {lo:.2e} below -1e-6"
            )
    return u


def periodic_gaussian_density(flow, tau, components, band_limit=None,
                              check_positive=True):
    """Probability density from periodic Gaussian bumps on the torus.

    Each component is (center (2,), width sigma, weight); coefficients are
    the exact heat-kernel factors exp(-2 pi^2 sigma^2 |k|^2) with the center
    phase, normalized to unit mass at clock tau.
    """
    if flow.model is not Model.TORUS2:
        raise ValueError("periodic Gaussians are torus densities")
    L = DEFAULT_BAND[Model.TORUS2] if band_limit is None else int(band_limit)
    k = np.arange(-L, L + 1, dtype=float)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    coeffs = np.zeros((2 * L + 1, 2 * L + 1), dtype=complex)
    for center, sigma, weight in components:
        if sigma <= 0 or weight <= 0:
            raise ValueError("bump width and weight must be positive")
        cx, cy = float(center[0]), float(center[1])
        damp = np.exp(-2.0 * np.pi**2 * sigma**2 * (k1 * k1 + k2 * k2))
        coeffs += weight * damp * np.exp(-2j * np.pi * (k1 * cx + k2 * cy))
    total = metric_scale(flow, tau) ** (N_DIM / 2.0) * np.real(coeffs[L, L])
    u = SpectralDensity(Model.TORUS2, coeffs / total, L, float(tau))
    if check_positive:
        lo, _ = field_extrema(u)
        if lo < -EPS_TRUNC:
            raise UnderResolvedError(
                f"band limit {L} leaves density minimum {lo:.2e} below -1e-6"
            )
    return u


# ---------------------------------------------------------------------------
# least-squares spectral fits (potentials sampled on clouds)


def fit_zonal_field(thetas, values, band_limit, clock, weights=None, ridge=1e-9):
    """Weighted ridge fit of a zonal Legendre series to sampled values."""
    x = np.cos(np.asarray(thetas, dtype=float))
    v = np.asarray(values, dtype=float)
    van = np.polynomial.legendre.legvander(x, int(band_limit))
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    A = van * sw[:, None]
    b = v * sw
    reg = np.sqrt(ridge) * np.eye(van.shape[1])
    A_aug = np.vstack([A, reg])
    b_aug = np.concatenate([b, np.zeros(van.shape[1])])
    coeffs, *_ = np.linalg.lstsq(A_aug, b_aug, rcond=None)
    return ScalarField(Model.SPHERE2, coeffs, int(band_limit), float(clock))


def fit_torus_field(points, values, band_limit, clock, weights=None, ridge=1e-9):
    """Weighted ridge fit of a Hermitian Fourier series to sampled values."""
    pts = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float).astype(complex)
    L = int(band_limit)
    k = np.arange(-L, L + 1, dtype=float)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    kvec = np.stack([k1.ravel(), k2.ravel()], axis=-1)
    E = np.exp(2j * np.pi * (pts @ kvec.T))
    w = np.ones(len(v)) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    A = E * sw[:, None]
    b = v * sw
    reg = np.sqrt(ridge) * np.eye(E.shape[1], dtype=complex)
    A_aug = np.vstack([A, reg])
    b_aug = np.concatenate([b, np.zeros(E.shape[1], dtype=complex)])
    coeffs, *_ = np.linalg.lstsq(A_aug, b_aug, rcond=None)
    coeffs = coeffs.reshape(2 * L + 1, 2 * L + 1)
    coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1, ::-1]))
    return ScalarField(Model.TORUS2, coeffs, L, float(clock))
