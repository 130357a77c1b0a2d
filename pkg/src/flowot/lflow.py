"""Space-time length functional machinery on exact backward scale flows.

All operations here assume the exact backward law c(tau) = c0 + 2*kappa*tau;
under it the weighted length integrand sqrt(tau)(R + |X|^2) has spatially
constant curvature term, so minimizers run along minimizing standard
geodesics with speed profile a'(tau) = k / (sqrt(tau) c(tau)) (first integral
of the reduced Euler-Lagrange equation).  The induced distance is

    Q(x, tau1; y, tau2) = C_R(tau1, tau2) + d_std(x, y)^2 / I(tau1, tau2),

with I = int dtau / (sqrt(tau) c) and C_R = int sqrt(tau) R dtau.  The
constrained minimizer is global: the curvature term is path independent and
Cauchy-Schwarz gives int sqrt(tau) c |g'|^2 dtau >= d_std^2 / I with equality
exactly on the profile above.

Sign convention: the normalized distance uses (sqrt(tau2) - sqrt(tau1)),
which is positive for tau2 > tau1; see README.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from . import geometry
from .errors import ConvergenceError, FlowDomainError
from .geometry import (
    Model,
    ScaleLaw,
    canonical_frame,
    cloud_for,
    frames_along,
    metric_scale,
    ricci_coefficient,
    scalar_curvature,
    scalar_curvature_rate,
    std_distance,
    step_along,
)
from .numerics import adaptive_simpson, second_difference
from .transport import DiscreteMeasure, duality_gap, solve_exact

GRID_M = 64  # nodes of the geometric tau-grid used for path quadrature
EQ_RESIDUAL_TOL = 1e-6


def _require_backward_ricci(flow):
    if flow.law is not ScaleLaw.EXACT_BACKWARD_RICCI:
        raise FlowDomainError(
            "space-time length operations require the exact backward scale law"
        )


def _check_times(flow, tau1, tau2):
    if tau1 <= 0.0:
        raise FlowDomainError(f"start time {tau1} must be positive")
    if not tau1 < tau2:
        raise FlowDomainError(f"need tau1 < tau2, got {tau1} >= {tau2}")
    if not (flow.contains(tau1) and flow.contains(tau2)):
        raise FlowDomainError(f"[{tau1}, {tau2}] outside flow domain {flow.tau_domain}")


def geometric_grid(tau1, tau2, m=GRID_M):
    """Geometric tau-grid clustered near tau1 (where the 1/tau term is stiff)."""
    return tau1 * (tau2 / tau1) ** np.linspace(0.0, 1.0, m)


def scale_integral_inv_sqrt(flow, tau_a, tau_b):
    """I(a, b) = int_a^b dtau / (sqrt(tau) c(tau)), cached on the flow."""
    key = ("linv", float(tau_a), float(tau_b))
    if key not in flow._cache:
        flow._cache[key] = adaptive_simpson(
            lambda t: 1.0 / (np.sqrt(t) * metric_scale(flow, t)), tau_a, tau_b
        )
    return flow._cache[key]


def curvature_integral(flow, tau_a, tau_b):
    """C_R(a, b) = int_a^b sqrt(tau) R(tau) dtau, cached on the flow."""
    key = ("lcr", float(tau_a), float(tau_b))
    if key not in flow._cache:
        flow._cache[key] = adaptive_simpson(
            lambda t: np.sqrt(t) * scalar_curvature(flow, t), tau_a, tau_b
        )
    return flow._cache[key]


@dataclass
class LPath:
    """Sampled space-time curve: tau-grid, intrinsic points, ambient velocities.

    ``params`` stores the fraction along the spatial geodesic from the first
    to the last point (zeros for a constant path); ``velocities`` holds
    dP/dtau in embedding coordinates (R^3 sphere, R^2 torus).
    """

    taus: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    params: np.ndarray
    length: Optional[float] = None
    eq_residual: Optional[float] = None

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        if self.taus[0] <= 0.0:
            raise FlowDomainError("path start time must be positive")
        if np.any(np.diff(self.taus) <= 0.0):
            raise FlowDomainError("path tau-grid must be strictly increasing")
        if len(self.points) != self.taus.size or len(self.velocities) != self.taus.size:
            raise FlowDomainError("path sample arrays must share the tau-grid length")


def l_length(flow, path):
    """Weighted length int sqrt(tau) (R + c |dP/dtau|^2_std) dtau of a path.

    Composite quadrature over the stored grid (scipy simpson); the integrand
    uses the standard-metric speed scaled by c(tau), i.e. the g_tau norm.
    """
    taus = path.taus
    if taus[0] <= 0.0:
        raise FlowDomainError("path start time must be positive")
    speed_sq = np.einsum("ij,ij->i", path.velocities, path.velocities)
    integrand = np.sqrt(taus) * (
        scalar_curvature(flow, taus) + metric_scale(flow, taus) * speed_sq
    )
    return float(integrate.simpson(integrand, x=taus))


def l_geodesic(flow, x, tau1, y, tau2, m=GRID_M):
    """Minimizing space-time path from (x, tau1) to (y, tau2).

    Spatial trace is the minimizing standard geodesic; the arc-length profile
    integrates a'(tau) = k / (sqrt(tau) c(tau)) with k = d_std / I.  The
    returned path carries the residual of the critical-curve equation
    2 a'' + (4 kappa / c + 1/tau) a' = 0 evaluated on the grid; residuals
    above EQ_RESIDUAL_TOL raise ConvergenceError.
    """
    _require_backward_ricci(flow)
    _check_times(flow, tau1, tau2)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    geometry.check_pair(flow, x, y)
    taus = geometric_grid(tau1, tau2, m)
    d0 = std_distance(flow.model, x, y)
    dim = 3 if flow.model is Model.SPHERE2 else 2

    if d0 < 1e-14:
        pts = np.tile(x, (m, 1))
        path = LPath(
            taus=taus,
            points=pts,
            velocities=np.zeros((m, dim)),
            params=np.zeros(m),
            eq_residual=0.0,
        )
        path.length = l_length(flow, path)
        return path

    big_i = scale_integral_inv_sqrt(flow, tau1, tau2)
    k = d0 / big_i
    cum = np.empty(m)
    cum[0] = 0.0
    for j in range(1, m):
        cum[j] = cum[j - 1] + scale_integral_inv_sqrt(flow, taus[j - 1], taus[j])
    params = cum / big_i
    params[-1] = 1.0

    c = metric_scale(flow, taus)
    a1 = k / (np.sqrt(taus) * c)
    kappa = ricci_coefficient(flow.model)
    # profile derivatives come from differentiating a'(tau) = k tau^{-1/2} c^{-1}
    a2 = -a1 * (0.5 / taus + 2.0 * kappa / c)
    residual = np.sqrt(c) * np.abs(2.0 * a2 + (4.0 * kappa / c + 1.0 / taus) * a1)
    eq_residual = float(residual.max())
    if eq_residual > EQ_RESIDUAL_TOL:
        raise ConvergenceError(
            f"critical-curve residual {eq_residual:.3e} exceeds {EQ_RESIDUAL_TOL}"
        )

    if flow.model is Model.SPHERE2:
        u, w, _, _ = geometry._sphere_axes(x, y, flow.delta_cut)
        s = params[:, None] * d0
        pts_xyz = np.cos(s) * u + np.sin(s) * w
        tang = -np.sin(s) * u + np.cos(s) * w
        pts = geometry.xyz_to_sphere(pts_xyz)
        vel = a1[:, None] * tang
    else:
        disp = geometry.torus_displacement(x, y)
        what = disp / d0
        pts = geometry.torus_wrap(x[None, :] + params[:, None] * disp)
        vel = a1[:, None] * what[None, :]

    path = LPath(
        taus=taus, points=pts, velocities=vel, params=params, eq_residual=eq_residual
    )
    path.length = l_length(flow, path)
    return path


def l_distance(flow, x, tau1, y, tau2):
    """Induced space-time distance Q = C_R + d_std^2 / I (see module docstring).

    Defined for every endpoint pair, including coincident points; pairs at
    the cut locus take the continuous-limit value even though path
    construction rejects them.
    """
    _require_backward_ricci(flow)
    _check_times(flow, tau1, tau2)
    d0 = std_distance(flow.model, x, y)
    cr = curvature_integral(flow, tau1, tau2)
    big_i = scale_integral_inv_sqrt(flow, tau1, tau2)
    return float(cr + d0 * d0 / big_i)


def l_distance_table(flow, tau1, tau2, xs, ys):
    """Matrix of l_distance values between two point sets (vectorized)."""
    _require_backward_ricci(flow)
    _check_times(flow, tau1, tau2)
    cr = curvature_integral(flow, tau1, tau2)
    big_i = scale_integral_inv_sqrt(flow, tau1, tau2)
    d2 = _std_dist_sq(flow, xs, ys)
    return cr + d2 / big_i


def _std_dist_sq(flow, xs, ys):
    key = ("d2", xs.tobytes(), ys.tobytes())
    if key not in flow._cache:
        d = geometry.std_distance_matrix(flow.model, xs, ys)
        flow._cache[key] = d * d
    return flow._cache[key]


def harnack_K(flow, path):
    """Weighted integral int tau^{3/2} H dtau of the trace differential quantity.

    H = -dR/dtau - R/tau + 2 kappa |dP/dtau|^2_std (the gradient term drops:
    R is spatially constant on both models).
    """
    taus = path.taus
    speed_sq = np.einsum("ij,ij->i", path.velocities, path.velocities)
    kappa = ricci_coefficient(flow.model)
    h_vals = (
        -scalar_curvature_rate(flow, taus)
        - scalar_curvature(flow, taus) / taus
        + 2.0 * kappa * speed_sq
    )
    return float(integrate.simpson(taus ** 1.5 * h_vals, x=taus))


def partl_residual(flow, x, tau1, y, tau2, h=1e-3):
    """|LHS - RHS| of the endpoint-time derivative identity.

    LHS: tau1 d/dtau1 Q + tau2 d/dtau2 Q by central differences with
    logarithmic step h (i.e. steps h*tau_i).  RHS: 2 tau2^{3/2} R(tau2)
    - 2 tau1^{3/2} R(tau1) + harnack integral - Q/2 along the minimizer.
    """
    _require_backward_ricci(flow)
    _check_times(flow, tau1, tau2)
    if tau1 * (1.0 + h) >= tau2 * (1.0 - h):
        raise FlowDomainError("time step too large for the central stencil")
    lhs = (
        l_distance(flow, x, tau1 * (1.0 + h), y, tau2)
        - l_distance(flow, x, tau1 * (1.0 - h), y, tau2)
        + l_distance(flow, x, tau1, y, tau2 * (1.0 + h))
        - l_distance(flow, x, tau1, y, tau2 * (1.0 - h))
    ) / (2.0 * h)
    path = l_geodesic(flow, x, tau1, y, tau2)
    q = l_distance(flow, x, tau1, y, tau2)
    rhs = (
        2.0 * tau2 ** 1.5 * scalar_curvature(flow, tau2)
        - 2.0 * tau1 ** 1.5 * scalar_curvature(flow, tau1)
        + harnack_K(flow, path)
        - 0.5 * q
    )
    return abs(lhs - rhs)


def frame_transport(flow, path):
    """Frames Y_i(tau) along a path solving dY/dtau = -Ric(Y,.) + Y/(2 tau).

    Directions stay parallel along the spatial geodesic while the magnitude
    integrates exactly to |Y_i(tau)|_std = sqrt(tau / c(tau)) under the exact
    backward law (the Ricci term contributes exp(-kappa int dtau/c)
    = sqrt(c(tau1)/c(tau)) and the 1/(2 tau) term sqrt(tau/tau1)).  The
    normalisation <Y_i, Y_j>_{g_tau} = tau delta_ij then holds identically.

    Returns an array (m, 2, dim), normal direction first, tangent last.
    """
    _require_backward_ricci(flow)
    taus = path.taus
    dirs = _std_directions(flow, path)
    mag = np.sqrt(taus / metric_scale(flow, taus))
    return mag[:, None, None] * dirs


def _std_directions(flow, path):
    """Unit standard-metric frame directions at every path node (m, 2, dim)."""
    x = path.points[0]
    y = path.points[-1]
    tau1 = path.taus[0]
    c1 = metric_scale(flow, tau1)
    if std_distance(flow.model, x, y) < 1e-14:
        base = canonical_frame(flow, tau1, x) * np.sqrt(c1)
        return np.tile(base, (path.taus.size, 1, 1))
    _, frames = frames_along(flow, tau1, x, y, path.params)
    return frames * np.sqrt(c1)


def frame_invariant_defect(flow, path, frames):
    """Max deviation of <Y_i, Y_j>_{g_tau} from tau * identity along the path."""
    gram = np.einsum("mik,mjk->mij", frames, frames)
    gram *= metric_scale(flow, path.taus)[:, None, None]
    target = path.taus[:, None, None] * np.eye(frames.shape[1])[None, :, :]
    return float(np.abs(gram - target).max())


@dataclass
class SummedVariationReport:
    lhs: float
    rhs: float
    per_direction: np.ndarray
    tol_fd: float
    passed: bool


def summed_variation_check(flow, x, tau1, y, tau2, h=1e-3, tol_fd=1e-4):
    """Coupled second difference of Q along transported frames vs its bound.

    Endpoints move along Y_i(tau1) and Y_i(tau2) (the same transported
    direction, magnitudes sqrt(tau_i / c(tau_i))); the summed second
    difference must stay below n (sqrt(tau2) - sqrt(tau1)) minus the
    curvature boundary terms minus the harnack integral, up to FD slack.
    """
    _require_backward_ricci(flow)
    path = l_geodesic(flow, x, tau1, y, tau2)
    frames = frame_transport(flow, path)
    dir1 = frames[0] / np.linalg.norm(frames[0], axis=1, keepdims=True)
    dir2 = frames[-1] / np.linalg.norm(frames[-1], axis=1, keepdims=True)
    arc1 = np.sqrt(tau1 / metric_scale(flow, tau1))
    arc2 = np.sqrt(tau2 / metric_scale(flow, tau2))

    terms = np.empty(geometry.N_DIM)
    for i in range(geometry.N_DIM):

        def f(r):
            xr = step_along(flow.model, x, dir1[i], r * arc1)
            yr = step_along(flow.model, y, dir2[i], r * arc2)
            return l_distance(flow, xr, tau1, yr, tau2)

        terms[i] = second_difference(f, 0.0, h)

    lhs = float(terms.sum())
    rhs = float(
        geometry.N_DIM * (np.sqrt(tau2) - np.sqrt(tau1))
        - (
            2.0 * tau2 ** 1.5 * scalar_curvature(flow, tau2)
            - 2.0 * tau1 ** 1.5 * scalar_curvature(flow, tau1)
        )
        - harnack_K(flow, path)
    )
    return SummedVariationReport(
        lhs=lhs, rhs=rhs, per_direction=terms, tol_fd=tol_fd,
        passed=bool(lhs <= rhs + tol_fd),
    )


# ---------------------------------------------------------------------------
# measure-level distance and the normalized clock


@dataclass
class LClock:
    """Exponential reparametrization of a pair of base times.

    tau_i(s) = tau_i_base * exp(s); base times must satisfy
    0 < tau1_base < tau2_base.
    """

    tau1_base: float
    tau2_base: float
    s_range: tuple = (0.0, 0.7)

    def __post_init__(self):
        if not 0.0 < self.tau1_base < self.tau2_base:
            raise FlowDomainError(
                f"need 0 < tau1_base < tau2_base, got "
                f"({self.tau1_base}, {self.tau2_base})"
            )

    def tau1(self, s):
        return self.tau1_base * np.exp(s)

    def tau2(self, s):
        return self.tau2_base * np.exp(s)

    def delta_sqrt(self, s):
        return (np.sqrt(self.tau2_base) - np.sqrt(self.tau1_base)) * np.exp(0.5 * s)


def _l_transport(flow, nu1, tau1, nu2, tau2):
    table = l_distance_table(flow, tau1, tau2, nu1.points, nu2.points)
    plan, pots, value = solve_exact(table, nu1.weights, nu2.weights)
    gap = duality_gap(table, plan, pots, nu1.weights, nu2.weights)
    return plan, pots, value, gap


def l_wasserstein(flow, nu1, tau1, nu2, tau2):
    """Optimal expected l_distance between measures at two times."""
    return _l_transport(flow, nu1, tau1, nu2, tau2)[2]


@dataclass
class ThetaRecord:
    s: float
    tau1: float
    tau2: float
    v: float
    theta: float
    delta_sqrt: float
    solver_gap: float


def _measure_at(flow, spec, tau_base, tau_target, cloud):
    from .diffusion import density_values, evolve_conjugate

    if isinstance(spec, DiscreteMeasure):
        return spec
    if abs(spec.clock - tau_base) > 1e-10 * (1.0 + abs(tau_base)):
        raise FlowDomainError(
            f"density clock {spec.clock} does not match base time {tau_base}"
        )
    evolved = evolve_conjugate(flow, spec, tau_base, tau_target)
    return density_values(evolved, cloud, flow, tau_target)


def theta_record(flow, clock, nu1_spec, nu2_spec, s, cloud=None, n_points=200):
    """Normalized measure distance at clock position s, with solver details.

    Theta(s) = 2 (sqrt(tau2) - sqrt(tau1)) V - 2 n (sqrt(tau2) - sqrt(tau1))^2
    with V the optimal expected l_distance between the two diffusions read at
    tau_i(s).  Spectral inputs are evolved forward from the base times, so
    s >= 0 is required for them; DiscreteMeasure inputs are used as given.
    """
    _require_backward_ricci(flow)
    tau1 = float(clock.tau1(s))
    tau2 = float(clock.tau2(s))
    if not (flow.contains(tau1) and flow.contains(tau2)):
        raise FlowDomainError(f"clock times ({tau1}, {tau2}) outside flow domain")
    if cloud is None:
        cloud = cloud_for(flow.model, n_points)
    nu1 = _measure_at(flow, nu1_spec, clock.tau1_base, tau1, cloud)
    nu2 = _measure_at(flow, nu2_spec, clock.tau2_base, tau2, cloud)
    _, _, v, gap = _l_transport(flow, nu1, tau1, nu2, tau2)
    dsq = float(clock.delta_sqrt(s))
    theta_val = 2.0 * dsq * v - 2.0 * geometry.N_DIM * dsq * dsq
    return ThetaRecord(
        s=float(s), tau1=tau1, tau2=tau2, v=v, theta=theta_val,
        delta_sqrt=dsq, solver_gap=gap,
    )


def theta(flow, clock, nu1_spec, nu2_spec, s, cloud=None, n_points=200):
    """Normalized measure distance Theta(s); see theta_record."""
    return theta_record(flow, clock, nu1_spec, nu2_spec, s, cloud, n_points).theta


def evolve_dual_lclock(flow, f, clock, s_from, s_to):
    """Evolve a potential backward in the clock variable s.

    The potential satisfies -df/ds = tau(s) Lap_{tau(s)} f, i.e. mode-wise
    decay exp(-lambda int dtau / c) over the traversed time interval.  The
    side (tau1 vs tau2 curve) is inferred from f.clock at s_from.
    """
    from .diffusion import _CLOCK_TOL, laplace_eigenvalues, rate_integral

    if s_to > s_from:
        raise FlowDomainError(
            f"potentials evolve backward in s: s_to {s_to} > s_from {s_from}"
        )
    t1f, t2f = float(clock.tau1(s_from)), float(clock.tau2(s_from))
    if abs(f.clock - t1f) <= _CLOCK_TOL * (1.0 + abs(t1f)):
        tau_from, tau_to = t1f, float(clock.tau1(s_to))
    elif abs(f.clock - t2f) <= _CLOCK_TOL * (1.0 + abs(t2f)):
        tau_from, tau_to = t2f, float(clock.tau2(s_to))
    else:
        raise FlowDomainError(
            f"field clock {f.clock} matches neither clock time at s={s_from}"
        )
    lam = laplace_eigenvalues(flow.model, f.band_limit)
    factors = np.exp(-lam * rate_integral(flow, tau_to, tau_from))
    return type(f)(
        model=f.model,
        coeffs=f.coeffs * factors,
        band_limit=f.band_limit,
        clock=tau_to,
    )
