"""Discrete Monge-Kantorovich solver layer.

Exact plans and dual potentials come from the in-package network simplex
(`simplex.py`); this module adds the measure/plan types, Wasserstein and
general-cost distances on scale-factor geometries, the entropic approximate
solver, duality-gap certification, a permutation brute-force oracle, and the
competitive-pair preservation probe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .costs import eval_cost_matrix
from .errors import UnderResolvedError
from .geometry import distance_matrix
from .simplex import solve_dense

DENSE_CAP = 400
_FEAS_TOL = 1e-9
_GAP_TOL = 1e-9


@dataclass
class DiscreteMeasure:
    """Probability measure supported on points of a cloud.

    ``indices`` select support points from ``cloud``; ``weights`` are the
    probabilities (nonnegative, summing to one within 1e-10).  A mass defect
    recorded by the discretizer travels with the measure.
    """

    cloud: object
    indices: np.ndarray
    weights: np.ndarray
    mass_defect: float = 0.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.indices.shape != self.weights.shape or self.indices.ndim != 1:
            raise ValueError("indices and weights must be matching 1-d arrays")
        if np.any(self.weights < 0):
            raise ValueError("measure weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-10:
            raise ValueError("measure weights must sum to 1 within 1e-10")

    @property
    def points(self):
        return self.cloud.points[self.indices]


def dirac(cloud, index):
    """Unit mass at a single cloud point."""
    return DiscreteMeasure(cloud, np.array([index]), np.array([1.0]))


def uniform_measure(cloud):
    """Equal weights on every cloud point."""
    n = cloud.size
    return DiscreteMeasure(cloud, np.arange(n), np.full(n, 1.0 / n))


@dataclass
class TransportPlan:
    """Sparse coupling (i, j, mass) with recorded marginal residuals."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    shape: tuple
    source_residual: float
    target_residual: float

    def primal_value(self, C):
        return float(np.dot(self.mass, C[self.rows, self.cols]))

    def dense(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def to_csv(self, path):
        data = np.column_stack([self.rows, self.cols, self.mass])
        np.savetxt(path, data, fmt=("%d", "%d", "%.17e"), delimiter=",",
                   header="i,j,mass", comments="")


@dataclass
class DualPotentials:
    """Competitive pair on the supports: phi_i + psi_j <= C_ij + 1e-9."""

    phi: np.ndarray
    psi: np.ndarray

    def dual_value(self, mu_w, nu_w):
        return float(np.dot(self.phi, mu_w) + np.dot(self.psi, nu_w))


def cost_table_to_csv(path, C):
    """Write a dense cost table as CSV rows (i, j, value)."""
    m, n = C.shape
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    data = np.column_stack([ii.ravel(), jj.ravel(), C.ravel()])
    np.savetxt(path, data, fmt=("%d", "%d", "%.17e"), delimiter=",",
               header="i,j,value", comments="")


def _marginal_residuals(plan_rows, plan_cols, plan_mass, a, b):
    row_sums = np.bincount(plan_rows, weights=plan_mass, minlength=a.size)
    col_sums = np.bincount(plan_cols, weights=plan_mass, minlength=b.size)
    return (
        float(np.max(np.abs(row_sums - a))),
        float(np.max(np.abs(col_sums - b))),
    )


def solve_exact(C, mu, nu, tol=None):
    """Exact optimal transport: (TransportPlan, DualPotentials, value).

    ``mu`` and ``nu`` may be DiscreteMeasures or plain weight arrays matching
    the cost table.  Zero-weight rows and columns are solved on the reduced
    support and the potentials extended competitively afterwards.  Potentials
    are normalized so max(phi) = 0; primal and dual values agree within
    1e-9 * (1 + |value|).
    """
    C = np.asarray(C, dtype=float)
    a = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
    b = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
    m, n = C.shape
    if a.shape != (m,) or b.shape != (n,):
        raise ValueError("marginal sizes must match the cost table")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost table must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginal weights must be nonnegative")
    if max(m, n) > DENSE_CAP:
        raise ValueError(
            f"dense exact solves are capped at {DENSE_CAP}; use solve_entropic"
        )
    if abs(float(a.sum()) - float(b.sum())) > 1e-10 * (1.0 + float(a.sum())):
        raise ValueError("marginals must carry equal total mass")

    ridx = np.flatnonzero(a > 0)
    cidx = np.flatnonzero(b > 0)
    Cr = np.ascontiguousarray(C[np.ix_(ridx, cidx)])
    rows_r, cols_r, mass_r, u_r, v_r, _ = solve_dense(
        Cr, a[ridx], b[cidx], tol=tol
    )

    phi = np.empty(m)
    psi = np.empty(n)
    phi[ridx] = u_r
    psi[cidx] = v_r
    zc = np.flatnonzero(b <= 0)
    if zc.size:
        psi[zc] = np.min(C[np.ix_(ridx, zc)] - u_r[:, None], axis=0)
    zr = np.flatnonzero(a <= 0)
    if zr.size:
        phi[zr] = np.min(C[zr] - psi[None, :], axis=1)
    shift = float(np.max(phi))
    phi -= shift
    psi += shift

    rows = ridx[rows_r]
    cols = cidx[cols_r]
    keep = mass_r > 0
    rows, cols, mass = rows[keep], cols[keep], mass_r[keep]
    src_res, tgt_res = _marginal_residuals(rows, cols, mass, a, b)
    if max(src_res, tgt_res) > _FEAS_TOL:
        raise UnderResolvedError(
            f"plan marginals off by {max(src_res, tgt_res):.3e}"
        )
    plan = TransportPlan(rows, cols, mass, (m, n), src_res, tgt_res)
    pots = DualPotentials(phi, psi)
    value = plan.primal_value(C)
    return plan, pots, value


def duality_gap(C, plan, potentials, mu, nu):
    """Primal value minus J(phi, psi); tiny for solve_exact outputs."""
    a = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
    b = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
    return plan.primal_value(np.asarray(C, float)) - potentials.dual_value(a, b)


def brute_force_uniform_value(C):
    """Exact value for uniform marginals by permutation enumeration (n <= 8)."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n) or n > 8:
        raise ValueError("brute force oracle handles square tables up to n=8")
    best = np.inf
    idx = np.arange(n)
    for perm in itertools.permutations(range(n)):
        val = float(C[idx, list(perm)].sum())
        if val < best:
            best = val
    return best / n


def solve_entropic(C, mu, nu, eps, max_iters=5000, tol=1e-7):
    """Log-domain Sinkhorn scaling; returns (plan, value, marginal_error).

    The plan solves the eps-regularized problem; iteration stops when the
    worse marginal violation (sup norm) drops below ``tol`` or after
    ``max_iters`` sweeps, and the returned marginal error reports which
    happened (non-convergence shows as an error above tolerance).
    """
    C = np.asarray(C, dtype=float)
    a = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
    b = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
    if eps <= 0:
        raise ValueError("entropic regularization must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    ridx = np.flatnonzero(a > 0)
    cidx = np.flatnonzero(b > 0)
    Cr = C[np.ix_(ridx, cidx)] / eps
    la = np.zeros(ridx.size)
    lb = np.zeros(cidx.size)
    loga = np.log(a[ridx])
    logb = np.log(b[cidx])
    err = np.inf
    for _ in range(max_iters):
        la = loga - logsumexp(-Cr + lb[None, :], axis=1)
        lb = logb - logsumexp(-Cr + la[:, None], axis=0)
        P = np.exp(la[:, None] + lb[None, :] - Cr)
        err = max(
            float(np.max(np.abs(P.sum(axis=1) - a[ridx]))),
            float(np.max(np.abs(P.sum(axis=0) - b[cidx]))),
        )
        if err <= tol:
            break
    rr, cc = np.nonzero(P > 0)
    rows = ridx[rr]
    cols = cidx[cc]
    mass = P[rr, cc]
    src_res, tgt_res = _marginal_residuals(rows, cols, mass, a, b)
    plan = TransportPlan(rows, cols, mass, C.shape, src_res, tgt_res)
    value = plan.primal_value(C)
    return plan, value, err


def wasserstein_p(flow, tau, mu, nu, p):
    """Order-p Wasserstein distance between cloud measures at clock tau."""
    if p <= 0:
        raise ValueError("wasserstein order must be positive")
    D = distance_matrix(flow, tau, mu.points, nu.points)
    _, _, value = solve_exact(D**p, mu, nu)
    return value ** (1.0 / p)


def transport_cost(flow, tau, cost, mu, nu):
    """Optimal total cost for c_tau(x, y) = eta(d_tau(x, y), tau)."""
    C = eval_cost_matrix(cost, flow, tau, mu.points, nu.points)
    _, _, value = solve_exact(C, mu, nu)
    return value


@dataclass
class PreservationReport:
    """Competitive-slack audit of an evolved potential pair."""

    checkpoints: np.ndarray
    min_slacks: np.ndarray
    initial_slack: float
    tol: float
    passed: bool
    duality_values: np.ndarray = field(default=None)

    def rows(self):
        return list(zip(self.checkpoints, self.min_slacks))


def verify_competitive_preservation(flow, cost, b, tau_checkpoints,
                                    alpha_b, beta_b, clouds, tol_z=1e-4):
    """Evolve a competitive pair backward and audit the slack at checkpoints.

    ``alpha_b``/``beta_b`` are band-limited fields forming a competitive pair
    for the cost at clock ``b``; both are run backward with the dual heat
    flow and min over the product of the two cloud grids of
    c_tau(x, y) - alpha(x) - beta(y) is reported per checkpoint.  PASS iff
    every slack clears -tol_z.  A pair that already violates competitiveness
    at b by more than 1e-8 signals under-resolution of the band limit.
    """
    from .diffusion import evaluate, evolve_dual

    cloud_x, cloud_y = clouds

    def min_slack(tau, f_alpha, f_beta):
        Ct = eval_cost_matrix(cost, flow, tau, cloud_x.points, cloud_y.points)
        va = evaluate(f_alpha, cloud_x.points)
        vb = evaluate(f_beta, cloud_y.points)
        return float(np.min(Ct - va[:, None] - vb[None, :]))

    slack_b = min_slack(b, alpha_b, beta_b)
    if slack_b < -1e-8:
        raise UnderResolvedError(
            f"pair violates competitiveness at the final clock by {slack_b:.3e}"
        )
    taus = np.asarray(tau_checkpoints, dtype=float)
    slacks = np.empty(taus.size)
    for idx, t in enumerate(taus):
        f_alpha = evolve_dual(flow, alpha_b, b, t)
        f_beta = evolve_dual(flow, beta_b, b, t)
        slacks[idx] = min_slack(t, f_alpha, f_beta)
    passed = bool(np.all(slacks >= -tol_z))
    return PreservationReport(taus, slacks, slack_b, tol_z, passed)
