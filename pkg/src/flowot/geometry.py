"""Scale-factor geometries on the round 2-sphere and the flat unit 2-torus.

Points on the sphere are (colatitude, longitude) pairs in radians; points on
the torus live in [0, 1)^2 with periodic wrap.  A ScaleFlow carries a family
of metrics g_tau = c(tau) * g_std: distances scale by sqrt(c(tau)) while
standard-coordinate geodesics are shared across the whole family, which keeps
midpoints, frames and exponential steps cheap and exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import roots_legendre

from .errors import (
    CutLocusError,
    FlowConstructionError,
    FlowDomainError,
    SuperRicciViolationError,
)

N_DIM = 2  # intrinsic dimension of both model surfaces

SPHERE_CUT_GUARD = 0.05  # radians short of the antipode
TORUS_CUT_GUARD = 0.005  # per-axis margin around the wrap midpoint 0.5

_MARGIN_TOL = 1e-12
_MARGIN_GRID = 513


class Model(enum.Enum):
    SPHERE2 = "sphere2"
    TORUS2 = "torus2"


class ScaleLaw(enum.Enum):
    EXACT_BACKWARD_RICCI = "exact_backward_ricci"
    USER_SCALE = "user_scale"


def ricci_coefficient(model):
    """Coefficient kappa with Ric = kappa * g_std (1 on the sphere, 0 flat)."""
    return 1.0 if model is Model.SPHERE2 else 0.0


def std_volume(model):
    """Total measure of the standard metric (4*pi sphere, 1 torus)."""
    return 4.0 * np.pi if model is Model.SPHERE2 else 1.0


@dataclass
class ScaleFlow:
    """A one-parameter family g_tau = c(tau) * g_std on a fixed model space.

    law EXACT_BACKWARD_RICCI evolves the scale at the model's Ricci rate
    (c(tau) = c0 + 2*tau on the sphere, c == c0 on the torus).  USER_SCALE
    interpolates (tau_samples, c_samples) with a monotone cubic and is clipped
    to the sampled range.  K is the rate constant of the lower bound
    -dg/dtau + 2*Ric >= 2*K*g; construction fails when the bound is violated
    anywhere on tau_domain unless enforce_margin=False.
    """

    model: Model
    c0: float = 1.0
    K: float = 0.0
    law: ScaleLaw = ScaleLaw.EXACT_BACKWARD_RICCI
    tau_domain: tuple = (0.0, 1.0)
    tau_samples: np.ndarray | None = None
    c_samples: np.ndarray | None = None
    delta_cut: float | None = None
    enforce_margin: bool = True
    _interp: object = field(default=None, init=False, repr=False, compare=False)
    _interp_rate: object = field(default=None, init=False, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = float(self.tau_domain[0]), float(self.tau_domain[1])
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi or lo < 0.0:
            raise FlowConstructionError(
                f"tau_domain must satisfy 0 <= lo < hi, got ({lo}, {hi})"
            )
        self.tau_domain = (lo, hi)
        if self.delta_cut is None:
            self.delta_cut = (
                SPHERE_CUT_GUARD if self.model is Model.SPHERE2 else TORUS_CUT_GUARD
            )
        if self.law is ScaleLaw.USER_SCALE:
            if self.tau_samples is None or self.c_samples is None:
                raise FlowConstructionError("USER_SCALE needs tau_samples/c_samples")
            ts = np.asarray(self.tau_samples, dtype=float)
            cs = np.asarray(self.c_samples, dtype=float)
            if ts.ndim != 1 or ts.shape != cs.shape or ts.size < 2:
                raise FlowConstructionError("scale samples must be 1-d, same length")
            if np.any(np.diff(ts) <= 0):
                raise FlowConstructionError("tau_samples must be strictly increasing")
            if ts[0] > lo + 1e-15 or ts[-1] < hi - 1e-15:
                raise FlowConstructionError("scale samples must cover tau_domain")
            if np.any(cs <= 0):
                raise FlowConstructionError("scale samples must be positive")
            self.tau_samples, self.c_samples = ts, cs
            self._interp = PchipInterpolator(ts, cs, extrapolate=False)
            self._interp_rate = self._interp.derivative()
        else:
            if self.c0 <= 0:
                raise FlowConstructionError("c0 must be positive")
        grid = np.linspace(lo, hi, _MARGIN_GRID)
        cg = metric_scale(self, grid)
        if np.any(cg <= 0):
            raise FlowConstructionError("metric scale must stay positive on domain")
        if self.enforce_margin:
            m = super_ricci_margin(self, grid)
            worst = float(np.min(m))
            if worst < -_MARGIN_TOL:
                raise SuperRicciViolationError(
                    f"rate bound violated: min margin {worst:.3e} at "
                    f"tau={grid[int(np.argmin(m))]:.6f}"
                )

    def contains(self, tau):
        lo, hi = self.tau_domain
        t = np.asarray(tau, dtype=float)
        return bool(np.all((t >= lo) & (t <= hi)))


def _check_domain(flow, tau):
    if not flow.contains(tau):
        raise FlowDomainError(
            f"tau={tau} outside flow domain {flow.tau_domain}"
        )


def metric_scale(flow, tau):
    """Scale factor c(tau); scalar in, scalar out; array in, array out."""
    _check_domain(flow, tau)
    t = np.asarray(tau, dtype=float)
    if flow.law is ScaleLaw.EXACT_BACKWARD_RICCI:
        rate = 2.0 * ricci_coefficient(flow.model)
        out = flow.c0 + rate * t
    else:
        out = flow._interp(t)
    return float(out) if np.isscalar(tau) else np.asarray(out)


def metric_scale_rate(flow, tau):
    """d/dtau of the scale factor."""
    _check_domain(flow, tau)
    t = np.asarray(tau, dtype=float)
    if flow.law is ScaleLaw.EXACT_BACKWARD_RICCI:
        out = np.full_like(t, 2.0 * ricci_coefficient(flow.model))
    else:
        out = flow._interp_rate(t)
    return float(out) if np.isscalar(tau) else np.asarray(out)


def super_ricci_margin(flow, tau):
    """Pointwise margin of -dg/dtau + 2*Ric - 2*K*g against zero.

    On scale-factor families the three tensors are multiples of g_std, so the
    margin is the scalar -c'(tau) + 2*kappa - 2*K*c(tau) with kappa the Ricci
    coefficient of the model.  Nonnegative margin on the domain is the
    condition the constructor enforces.
    """
    c = metric_scale(flow, tau)
    cdot = metric_scale_rate(flow, tau)
    return -cdot + 2.0 * ricci_coefficient(flow.model) - 2.0 * flow.K * c


def scalar_curvature(flow, tau):
    """Scalar curvature of g_tau (2/c on the sphere, 0 on the torus)."""
    if flow.model is Model.TORUS2:
        _check_domain(flow, tau)
        return 0.0 if np.isscalar(tau) else np.zeros_like(np.asarray(tau, float))
    return 2.0 / metric_scale(flow, tau)


def scalar_curvature_rate(flow, tau):
    """d/dtau of the scalar curvature."""
    if flow.model is Model.TORUS2:
        _check_domain(flow, tau)
        return 0.0 if np.isscalar(tau) else np.zeros_like(np.asarray(tau, float))
    c = metric_scale(flow, tau)
    return -2.0 * metric_scale_rate(flow, tau) / (c * c)


# ---------------------------------------------------------------------------
# points, distances, geodesics


def sphere_to_xyz(points):
    """(colatitude, longitude) -> unit vectors in R^3; shape (..., 2)->(..., 3)."""
    p = np.asarray(points, dtype=float)
    theta, phi = p[..., 0], p[..., 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def xyz_to_sphere(vecs):
    """Unit vectors in R^3 -> (colatitude, longitude)."""
    v = np.asarray(vecs, dtype=float)
    theta = np.arctan2(np.hypot(v[..., 0], v[..., 1]), v[..., 2])
    phi = np.arctan2(v[..., 1], v[..., 0])
    return np.stack([theta, phi], axis=-1)


def torus_wrap(points):
    """Map coordinates into the fundamental square [0, 1)^2."""
    return np.mod(np.asarray(points, dtype=float), 1.0)


def torus_displacement(x, y):
    """Shortest wrapped displacement y - x, componentwise in [-0.5, 0.5]."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return d - np.round(d)


def _sphere_angle(u, v):
    dot = np.sum(u * v, axis=-1)
    cr = np.cross(u, v)
    return np.arctan2(np.linalg.norm(cr, axis=-1), dot)


def std_distance(model, x, y):
    """Distance in the standard metric (great-circle angle / wrapped euclid)."""
    if model is Model.SPHERE2:
        a = _sphere_angle(sphere_to_xyz(x), sphere_to_xyz(y))
    else:
        a = np.linalg.norm(torus_displacement(x, y), axis=-1)
    return float(a) if np.ndim(a) == 0 else a


def distance(flow, tau, x, y):
    """Geodesic distance in g_tau: sqrt(c(tau)) times the standard distance."""
    return np.sqrt(metric_scale(flow, tau)) * std_distance(flow.model, x, y)


def std_distance_matrix(model, X, Y):
    """Pairwise standard-metric distances between point sets (m, 2) and (n, 2)."""
    if model is Model.SPHERE2:
        A = sphere_to_xyz(np.asarray(X, dtype=float))
        B = sphere_to_xyz(np.asarray(Y, dtype=float))
        dot = A @ B.T
        cr = np.cross(A[:, None, :], B[None, :, :])
        return np.arctan2(np.linalg.norm(cr, axis=-1), dot)
    dx = np.asarray(X, dtype=float)[:, None, :] - np.asarray(Y, dtype=float)[None, :, :]
    dx -= np.round(dx)
    return np.linalg.norm(dx, axis=-1)


def distance_matrix(flow, tau, X, Y):
    """Pairwise g_tau distances between point sets X (m, 2) and Y (n, 2)."""
    return np.sqrt(metric_scale(flow, tau)) * std_distance_matrix(flow.model, X, Y)


def check_pair(flow, x, y):
    """Raise CutLocusError when (x, y) is within the guard of the cut locus."""
    if flow.model is Model.SPHERE2:
        ang = std_distance(Model.SPHERE2, x, y)
        if ang > np.pi - flow.delta_cut:
            raise CutLocusError(
                f"pair separation {ang:.4f} within {flow.delta_cut} of antipode"
            )
    else:
        w = torus_displacement(x, y)
        if np.any(np.abs(np.abs(w) - 0.5) < flow.delta_cut):
            raise CutLocusError(
                f"wrapped displacement {w} within {flow.delta_cut} of the cut value 0.5"
            )


def _sphere_axes(x, y, delta_cut):
    """Base point, unit tangent toward y, angle and the normal of the pair."""
    u = sphere_to_xyz(x)
    v = sphere_to_xyz(y)
    d = _sphere_angle(u, v)
    if d > np.pi - delta_cut:
        raise CutLocusError(f"pair separation {d:.4f} too close to antipode")
    cr = np.cross(u, v)
    ncr = np.linalg.norm(cr)
    if ncr < 1e-14:
        raise CutLocusError("coincident points have no unique geodesic direction")
    b = cr / ncr
    w = v - np.dot(u, v) * u
    w /= np.linalg.norm(w)
    return u, w, d, b


def geodesic_point(flow, tau, x, y, t):
    """Point at parameter t along the g_tau geodesic from x (t=0) to y (t=1).

    The parameter may run outside [0, 1]; the curve is extended along the same
    standard geodesic.  Coincident endpoints return x for every t.
    """
    _check_domain(flow, tau)
    check_pair(flow, x, y)
    if flow.model is Model.SPHERE2:
        d0 = std_distance(Model.SPHERE2, x, y)
        if d0 < 1e-15:
            return np.asarray(x, dtype=float).copy()
        u, w, d, _ = _sphere_axes(x, y, flow.delta_cut)
        s = t * d
        return xyz_to_sphere(np.cos(s) * u + np.sin(s) * w)
    w = torus_displacement(x, y)
    return torus_wrap(np.asarray(x, dtype=float) + t * w)


def step_along(model, point, direction, arc):
    """Exponential step: move ``arc`` standard-arc-length from ``point``.

    ``direction`` is a unit tangent vector in embedding coordinates (R^3 on
    the sphere, R^2 on the torus).
    """
    if model is Model.SPHERE2:
        p = sphere_to_xyz(point)
        return xyz_to_sphere(np.cos(arc) * p + np.sin(arc) * np.asarray(direction))
    return torus_wrap(np.asarray(point, dtype=float) + arc * np.asarray(direction))


def canonical_frame(flow, tau, x):
    """Coordinate frame at a single point, g_tau-orthonormal, rows (2, dim).

    Used where a point pair degenerates (coincident endpoints) and no
    transported frame is distinguished.
    """
    _check_domain(flow, tau)
    r = 1.0 / np.sqrt(metric_scale(flow, tau))
    if flow.model is Model.SPHERE2:
        theta, phi = float(x[0]), float(x[1])
        e_theta = np.array(
            [np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)]
        )
        e_phi = np.array([-np.sin(phi), np.cos(phi), 0.0])
        return np.stack([e_phi, e_theta]) * r
    return np.eye(2) * r


def frames_along(flow, tau, x, y, ts):
    """Transported g_tau-orthonormal frames along the geodesic from x to y.

    Returns (points, frames): points has shape (m, 2) in intrinsic
    coordinates, frames has shape (m, 2, dim) in embedding coordinates with
    the normal direction first and the geodesic tangent last.  Transport is
    parallel: the frame at each node is the parallel translate of the frame
    at x along the curve.
    """
    _check_domain(flow, tau)
    check_pair(flow, x, y)
    ts = np.asarray(ts, dtype=float)
    r = 1.0 / np.sqrt(metric_scale(flow, tau))
    if flow.model is Model.SPHERE2:
        u, w, d, b = _sphere_axes(x, y, flow.delta_cut)
        s = ts[:, None] * d
        pts_xyz = np.cos(s) * u + np.sin(s) * w
        tang = -np.sin(s) * u + np.cos(s) * w
        frames = np.empty((ts.size, 2, 3))
        frames[:, 0, :] = b * r
        frames[:, 1, :] = tang * r
        return xyz_to_sphere(pts_xyz), frames
    w = torus_displacement(x, y)
    d = np.linalg.norm(w)
    if d < 1e-14:
        raise CutLocusError("coincident points have no unique geodesic direction")
    what = w / d
    nhat = np.array([-what[1], what[0]])
    pts = torus_wrap(np.asarray(x, dtype=float)[None, :] + ts[:, None] * w)
    frames = np.empty((ts.size, 2, 2))
    frames[:, 0, :] = nhat * r
    frames[:, 1, :] = what * r
    return pts, frames


def parallel_frame(flow, tau, x, y):
    """Transported frames at the two endpoints: (frame_at_x, frame_at_y).

    Each frame is a (2, dim) array of embedding vectors, g_tau-orthonormal,
    normal direction first and the unit tangent (pointing from x toward y)
    last.  The frame at y is the parallel translate of the frame at x.
    """
    pts, frames = frames_along(flow, tau, x, y, np.array([0.0, 1.0]))
    return frames[0], frames[1]


# ---------------------------------------------------------------------------
# point clouds


@dataclass
class PointCloud:
    """Quadrature support: intrinsic points with standard-measure weights."""

    model: Model
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise FlowConstructionError("cloud points must have shape (N, 2)")
        if self.weights.shape != (self.points.shape[0],):
            raise FlowConstructionError("cloud weights must have shape (N,)")
        if np.any(self.weights <= 0):
            raise FlowConstructionError("cloud weights must be positive")
        vol = std_volume(self.model)
        if abs(float(self.weights.sum()) - vol) > 1e-8 * vol:
            raise FlowConstructionError("cloud weights must sum to the model volume")

    @property
    def size(self):
        return self.points.shape[0]


def sphere_cloud(n_theta, n_phi):
    """Gauss-Legendre colatitude rings times a uniform longitude grid.

    Exactly integrates zonal polynomials of degree < 2*n_theta in cos(theta);
    weights sum to 4*pi.
    """
    nodes, wq = roots_legendre(n_theta)
    theta = np.arccos(nodes)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    points = np.stack([tt.ravel(), pp.ravel()], axis=-1)
    weights = np.repeat(wq * (2.0 * np.pi / n_phi), n_phi)
    return PointCloud(Model.SPHERE2, points, weights)


def torus_cloud(n):
    """Uniform n x n midpoint grid on the unit square; weights sum to 1."""
    g = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(g, g, indexing="ij")
    points = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    weights = np.full(n * n, 1.0 / (n * n))
    return PointCloud(Model.TORUS2, points, weights)


def cloud_for(model, n_points):
    """Model-appropriate cloud with at most n_points support points."""
    if model is Model.SPHERE2:
        n_theta = max(2, int(round(np.sqrt(n_points / 2.0))))
        n_phi = max(4, n_points // n_theta)
        return sphere_cloud(n_theta, n_phi)
    n = max(2, int(round(np.sqrt(n_points))))
    return torus_cloud(n)
