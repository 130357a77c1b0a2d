"""Time-dependent transport cost families c_tau(x, y) = eta(d_tau(x, y), tau).

A cost family is admissible at rate K when eta(0, tau) = 0, eta is
nondecreasing in s, and the rate inequality

    -d_tau(eta) + K * s * d_s(eta) - min(4 * d_ss(eta), 0) >= 0

holds on the checked range.  The power family e^{p K tau} * s^p satisfies all
three at its own rate for every p > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import AdmissibilityError
from .geometry import distance, distance_matrix

_MARGIN_TOL = 1e-12


class CostFunction:
    """Interface: value/ds/d2s/dtau evaluators, all numpy-broadcasting."""

    label = "cost"
    s_floor = 0.0  # smallest s at which the family is defined
    singular_second = False  # second s-derivative singular at s = 0

    def value(self, s, tau):
        raise NotImplementedError

    def ds(self, s, tau):
        raise NotImplementedError

    def d2s(self, s, tau):
        raise NotImplementedError

    def dtau(self, s, tau):
        raise NotImplementedError


@dataclass
class PowerCost(CostFunction):
    """eta(s, tau) = exp(p * K * tau) * s^p with exact symbolic derivatives."""

    p: float
    K: float = 0.0

    def __post_init__(self):
        if self.p <= 0:
            raise AdmissibilityError(f"power exponent must be positive, got {self.p}")
        self.singular_second = self.p < 2 and self.p != 1
        # the label lands in CSV columns, keep it comma-free
        self.label = f"power_p{self.p:g}" + (f"_K{self.K:g}" if self.K else "")

    def _amp(self, tau):
        return np.exp(self.p * self.K * np.asarray(tau, dtype=float))

    def value(self, s, tau):
        s = np.asarray(s, dtype=float)
        out = self._amp(tau) * np.power(s, self.p)
        return float(out) if out.ndim == 0 else out

    def ds(self, s, tau):
        s = np.asarray(s, dtype=float)
        if self.p == 1.0:
            out = self._amp(tau) * np.ones_like(s)
        else:
            out = self.p * self._amp(tau) * np.power(s, self.p - 1.0)
        return float(out) if out.ndim == 0 else out

    def d2s(self, s, tau):
        s = np.asarray(s, dtype=float)
        coef = self.p * (self.p - 1.0)
        if coef == 0.0:
            out = np.zeros(np.broadcast(s, np.asarray(tau, float)).shape)
        else:
            out = coef * self._amp(tau) * np.power(s, self.p - 2.0)
        return float(out) if np.ndim(out) == 0 else out

    def dtau(self, s, tau):
        out = self.p * self.K * self.value(s, tau)
        return float(out) if np.ndim(out) == 0 else out


def power_cost(p, K=0.0):
    """Construct the power family; fails for p <= 0."""
    return PowerCost(float(p), float(K))


@dataclass
class TabulatedCost(CostFunction):
    """Bicubic interpolation of user-supplied eta and derivative tables.

    The caller supplies all four tables on a shared (s, tau) grid; no
    smoothness beyond the tables is invented, and the admissibility checker
    runs on the table nodes only.
    """

    s_nodes: np.ndarray
    tau_nodes: np.ndarray
    eta_table: np.ndarray
    ds_table: np.ndarray
    d2s_table: np.ndarray
    dtau_table: np.ndarray
    _splines: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.s_nodes = np.asarray(self.s_nodes, dtype=float)
        self.tau_nodes = np.asarray(self.tau_nodes, dtype=float)
        shape = (self.s_nodes.size, self.tau_nodes.size)
        tables = {}
        for name in ("eta_table", "ds_table", "d2s_table", "dtau_table"):
            tab = np.asarray(getattr(self, name), dtype=float)
            if tab.shape != shape:
                raise AdmissibilityError(
                    f"{name} shape {tab.shape} does not match grid {shape}"
                )
            setattr(self, name, tab)
            tables[name] = tab
        if np.any(np.diff(self.s_nodes) <= 0) or np.any(np.diff(self.tau_nodes) <= 0):
            raise AdmissibilityError("cost table nodes must be strictly increasing")
        kx = min(3, self.s_nodes.size - 1)
        ky = min(3, self.tau_nodes.size - 1)
        self._splines = {
            name: RectBivariateSpline(self.s_nodes, self.tau_nodes, tab, kx=kx, ky=ky)
            for name, tab in tables.items()
        }
        self.s_floor = float(self.s_nodes[0])
        self.label = "tabulated"
        if self.s_floor == 0.0 and np.max(np.abs(self.eta_table[0])) > 1e-10:
            raise AdmissibilityError("tabulated eta(0, tau) must vanish")
        if np.any(self.ds_table < -1e-10):
            raise AdmissibilityError("tabulated cost must be nondecreasing in s")

    def _ev(self, name, s, tau):
        s = np.asarray(s, dtype=float)
        tau = np.asarray(tau, dtype=float)
        s, tau = np.broadcast_arrays(s, tau)
        out = self._splines[name](s.ravel(), tau.ravel(), grid=False).reshape(s.shape)
        return float(out) if out.ndim == 0 else out

    def value(self, s, tau):
        return self._ev("eta_table", s, tau)

    def ds(self, s, tau):
        return self._ev("ds_table", s, tau)

    def d2s(self, s, tau):
        return self._ev("d2s_table", s, tau)

    def dtau(self, s, tau):
        return self._ev("dtau_table", s, tau)


def load_cost_table(path):
    """Read a cost table from CSV columns (s, tau, eta, ds, d2s, dtau)."""
    raw = np.genfromtxt(path, delimiter=",", names=True)
    s_nodes = np.unique(raw["s"])
    tau_nodes = np.unique(raw["tau"])
    shape = (s_nodes.size, tau_nodes.size)
    if raw.size != shape[0] * shape[1]:
        raise AdmissibilityError("cost table CSV must cover a full (s, tau) grid")
    order = np.lexsort((raw["tau"], raw["s"]))
    tabs = [raw[name][order].reshape(shape) for name in ("eta", "ds", "d2s", "dtau")]
    return TabulatedCost(s_nodes, tau_nodes, *tabs)


@dataclass
class AdmissibilityReport:
    """Per-condition minimum margins; PASS iff all of them clear -1e-12."""

    margin_origin: float
    margin_monotone: float
    margin_rate: float
    rate_constant: float
    passed: bool
    notes: str = ""

    def as_rows(self):
        rows = [
            ("zero_at_origin", self.margin_origin),
            ("nondecreasing_in_s", self.margin_monotone),
            ("rate_inequality", self.margin_rate),
        ]
        return [(name, m, "PASS" if m >= -_MARGIN_TOL else "FAIL") for name, m in rows]


def admissibility_check(cost, K, s_grid, tau_grid):
    """Grid check of the three admissibility conditions at rate K.

    The rate inequality branches on the sign of the second s-derivative at
    each node exactly as stated (min(4*eta'', 0) enters with its sign).  For
    families whose second derivative is singular at s = 0 the caller must pass
    an s_grid excluding 0; tabulated costs are checked on their own nodes.
    """
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(tau_grid, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(~np.isfinite(t)) or np.any(s < 0):
        raise AdmissibilityError("admissibility grids must be finite, s >= 0")
    if cost.singular_second and np.any(s == 0.0):
        s = s[s > 0.0]
        if s.size == 0:
            raise AdmissibilityError("s_grid excludes every usable node")
    ss, tt = np.meshgrid(s, t, indexing="ij")

    notes = ""
    if cost.s_floor == 0.0:
        margin_origin = -float(np.max(np.abs(cost.value(np.zeros_like(t), t))))
    else:
        margin_origin = 0.0
        notes = f"origin condition untestable: family defined for s >= {cost.s_floor}"

    margin_monotone = float(np.min(cost.ds(ss, tt)))
    d2 = cost.d2s(ss, tt)
    rate = -cost.dtau(ss, tt) + K * ss * cost.ds(ss, tt) - np.minimum(4.0 * d2, 0.0)
    margin_rate = float(np.min(rate))
    passed = all(
        m >= -_MARGIN_TOL for m in (margin_origin, margin_monotone, margin_rate)
    )
    return AdmissibilityReport(
        margin_origin, margin_monotone, margin_rate, float(K), passed, notes
    )


def eval_cost(cost, flow, tau, x, y):
    """Transport cost of a point pair at clock tau: eta(d_tau(x, y), tau)."""
    return float(cost.value(distance(flow, tau, x, y), tau))


def eval_cost_matrix(cost, flow, tau, X, Y):
    """Pairwise costs eta(d_tau, tau) between point sets X (m,2) and Y (n,2)."""
    return cost.value(distance_matrix(flow, tau, X, Y), tau)
