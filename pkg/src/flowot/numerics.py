"""Small numerical helpers: adaptive quadrature and Richardson slope fits."""

import numpy as np

from .errors import ConvergenceError


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=50):
    """Integrate ``f`` over [a, b] by adaptive Simpson bisection.

    The error estimate uses the standard 1/15 Richardson factor.  Intended for
    smooth one-dimensional integrands (scale-rate integrals and the like) where
    a tight absolute tolerance is required.
    """
    if b == a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol or depth <= 0:
        if depth <= 0 and abs(delta) > 15.0 * tol:
            raise ConvergenceError("adaptive quadrature hit max depth")
        return left + right + delta / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + \
        _simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)


def second_difference(f, x, h):
    """Central 3-point second difference of a scalar function at ``x``."""
    return (f(x + h) + f(x - h) - 2.0 * f(x)) / (h * h)


def richardson_slope(f, x, h, target, steps=(1.0, 0.5, 0.25)):
    """Estimate the convergence order of ``second_difference`` toward ``target``.

    Evaluates the second difference at ``h * steps`` and fits log|error| against
    log(step) by least squares.  Returns (slope, errors).
    """
    hs = np.asarray([h * s for s in steps], dtype=float)
    errs = np.asarray(
        [abs(second_difference(f, x, hh) - target) for hh in hs], dtype=float
    )
    good = errs > 0
    if good.sum() < 2:
        # error at or below roundoff everywhere; report the ideal order
        return 2.0, errs
    slope = np.polyfit(np.log(hs[good]), np.log(errs[good]), 1)[0]
    return float(slope), errs


def fd_slope_from_errors(hs, errs):
    """Least-squares slope of log|err| vs log h, ignoring exact zeros."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    good = errs > 0
    if good.sum() < 2:
        return 2.0
    return float(np.polyfit(np.log(hs[good]), np.log(errs[good]), 1)[0])
