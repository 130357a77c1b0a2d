"""Coupled second-variation bounds and the pointwise contraction inequality."""

import numpy as np
import pytest

from flowot.coupling import (
    closed_form_second_variation,
    coupled_hessian_bound,
    lemma_gap,
    make_pair,
    time_derivative_cost,
    variation_curve_length,
)
from flowot.costs import power_cost
from flowot.errors import CutLocusError, FlowDomainError
from flowot.geometry import (
    Model,
    ScaleFlow,
    ScaleLaw,
    frames_along,
    metric_scale,
    sphere_to_xyz,
    std_distance,
    step_along,
    super_ricci_margin,
    xyz_to_sphere,
)
from flowot.numerics import fd_slope_from_errors


def sphere_flow():
    return ScaleFlow(model=Model.SPHERE2, tau_domain=(0.0, 1.0))


def torus_user_flow():
    taus = np.linspace(0.0, 1.0, 5)
    return ScaleFlow(
        model=Model.TORUS2,
        law=ScaleLaw.USER_SCALE,
        tau_domain=(0.0, 1.0),
        tau_samples=taus,
        c_samples=1.0 - 0.3 * taus,
    )


def equator_pair(flow, tau, d_std):
    x = np.array([np.pi / 2.0, 0.2])
    y = np.array([np.pi / 2.0, 0.2 + d_std])
    return make_pair(flow, tau, x, y)


def torus_pair(flow, tau, d_std):
    x = np.array([0.2, 0.3])
    y = np.array([0.2 + d_std, 0.3])
    return make_pair(flow, tau, x, y)


def test_make_pair_validation():
    flow = sphere_flow()
    x = np.array([0.5, 0.0])
    with pytest.raises(FlowDomainError):
        make_pair(flow, 0.3, x, x.copy())
    anti = xyz_to_sphere(-sphere_to_xyz(x))
    with pytest.raises(CutLocusError):
        make_pair(flow, 0.3, x, anti)
    pair = equator_pair(flow, 0.25, 1.1)
    c = metric_scale(flow, 0.25)
    assert abs(pair.d - np.sqrt(c) * 1.1) < 1e-12
    assert pair.frame_x.shape == (2, 3)


def test_variation_curve_length_matches_polyline():
    # displace every node of the geodesic along the transported normal and
    # measure the polyline; the closed form is d * cos(r / sqrt(c))
    flow = sphere_flow()
    tau = 0.3
    c = metric_scale(flow, tau)
    x = np.array([np.pi / 2.0, 0.0])
    y = np.array([np.pi / 2.0, 1.0])
    pair = make_pair(flow, tau, x, y)
    ts = np.linspace(0.0, 1.0, 2001)
    pts, frames = frames_along(flow, tau, x, y, ts)
    for r in (0.1, 0.4, 0.9):
        r_std = r / np.sqrt(c)
        moved = [
            step_along(Model.SPHERE2, pts[k], frames[k, 0] * np.sqrt(c), r_std)
            for k in range(ts.size)
        ]
        seglens = [
            std_distance(Model.SPHERE2, moved[k], moved[k + 1])
            for k in range(ts.size - 1)
        ]
        measured = np.sqrt(c) * float(np.sum(seglens))
        assert abs(variation_curve_length(flow, tau, pair, r) - measured) < 5e-6


def test_variation_curve_length_flat_is_constant():
    flow = ScaleFlow(model=Model.TORUS2, c0=1.4)
    pair = torus_pair(flow, 0.5, 0.3)
    for r in (0.0, 0.2, 0.7):
        assert variation_curve_length(flow, 0.5, pair, r) == pair.d


def test_fd_bound_matches_closed_form():
    rng = np.random.default_rng(41)
    for flow, mk in ((sphere_flow(), equator_pair), (torus_user_flow(), torus_pair)):
        hi = 2.2 if flow.model is Model.SPHERE2 else 0.45
        for p in (0.5, 1.0, 1.5, 2.0):
            cost = power_cost(p)
            for _ in range(5):
                tau = rng.uniform(0.05, 0.95)
                pair = mk(flow, tau, rng.uniform(0.3, hi))
                fd = coupled_hessian_bound(flow, tau, cost, pair)
                cf = closed_form_second_variation(flow, tau, cost, pair)
                assert abs(fd - cf) < 1e-4 * (1.0 + abs(cf))


def test_fd_bound_converges_at_second_order():
    rng = np.random.default_rng(42)
    flow = sphere_flow()
    for p in (0.5, 1.5):
        cost = power_cost(p)
        for _ in range(4):
            tau = rng.uniform(0.1, 0.9)
            c = metric_scale(flow, tau)
            d = rng.uniform(0.5, np.pi - 0.2)
            pair = equator_pair(flow, tau, d / np.sqrt(c))
            cf = closed_form_second_variation(flow, tau, cost, pair)
            base = 1e-2 * pair.d
            hs = np.array([base, base / 2.0, base / 4.0])
            errs = np.array([
                abs(coupled_hessian_bound(flow, tau, cost, pair, h=h) - cf)
                for h in hs
            ])
            if errs.max() < 1e-11:
                continue  # stencil error at roundoff: nothing to fit
            slope = fd_slope_from_errors(hs, errs)
            assert 1.9 < slope < 2.1


def test_fd_bound_converges_at_second_order_flat():
    rng = np.random.default_rng(43)
    flow = torus_user_flow()
    for p in (0.5, 1.5):
        cost = power_cost(p)
        for _ in range(4):
            tau = rng.uniform(0.1, 0.9)
            c = metric_scale(flow, tau)
            d = rng.uniform(0.25, 0.69)
            pair = torus_pair(flow, tau, d / np.sqrt(c))
            cf = closed_form_second_variation(flow, tau, cost, pair)
            base = 1e-2 * pair.d
            hs = np.array([base, base / 2.0, base / 4.0])
            errs = np.array([
                abs(coupled_hessian_bound(flow, tau, cost, pair, h=h) - cf)
                for h in hs
            ])
            if errs.max() < 1e-11:
                continue
            slope = fd_slope_from_errors(hs, errs)
            assert 1.9 < slope < 2.1


def test_quadratic_cost_flat_stencil_is_exact():
    # every variation family is linear or quadratic in r for p=2 on the torus
    flow = ScaleFlow(model=Model.TORUS2)
    cost = power_cost(2.0)
    pair = torus_pair(flow, 0.4, 0.3)
    fd = coupled_hessian_bound(flow, 0.4, cost, pair)
    cf = closed_form_second_variation(flow, 0.4, cost, pair)
    assert abs(fd - cf) < 1e-9


def test_small_pairs_rejected_for_fd():
    flow = sphere_flow()
    pair = equator_pair(flow, 0.2, 0.3)
    with pytest.raises(FlowDomainError):
        coupled_hessian_bound(flow, 0.2, power_cost(2.0), pair, h=0.2 * pair.d)
    with pytest.raises(ValueError):
        lemma_gap(flow, 0.2, power_cost(2.0), pair, method="unknown")


def test_time_derivative_matches_finite_difference():
    from flowot.geometry import distance

    rng = np.random.default_rng(44)
    for flow, mk, hi in ((sphere_flow(), equator_pair, 2.0),
                         (torus_user_flow(), torus_pair, 0.45)):
        for p, K in ((1.0, 0.0), (2.0, -0.5), (0.5, 0.3)):
            cost = power_cost(p, K=K)
            for _ in range(5):
                tau = rng.uniform(0.1, 0.9)
                pair = mk(flow, tau, rng.uniform(0.3, hi))
                got = time_derivative_cost(flow, tau, cost, pair)
                h = 1e-5
                f = lambda t: cost.value(distance(flow, t, pair.x, pair.y), t)
                fd = (f(tau + h) - f(tau - h)) / (2.0 * h)
                assert abs(got - fd) < 1e-5 * (1.0 + abs(fd))


def test_lemma_gap_identity_against_flow_margin():
    # gap = eta'(d) * d * margin / (2 c) for the closed-form route
    flow = torus_user_flow()
    rng = np.random.default_rng(45)
    for p, K in ((0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, -0.25)):
        cost = power_cost(p, K=K)
        for _ in range(10):
            tau = rng.uniform(0.05, 0.95)
            pair = torus_pair(flow, tau, rng.uniform(0.2, 0.45))
            gap = lemma_gap(flow, tau, cost, pair)
            c = metric_scale(flow, tau)
            want = cost.ds(pair.d, tau) * pair.d * super_ricci_margin(flow, tau) / (2.0 * c)
            assert abs(gap - want) < 1e-10 * (1.0 + abs(want))


def test_lemma_gap_zero_on_margin_zero_flow():
    # the evolving sphere at its exact rate has zero margin: equality case
    flow = sphere_flow()
    rng = np.random.default_rng(46)
    for p in (0.5, 1.0, 2.0):
        cost = power_cost(p)
        for _ in range(10):
            tau = rng.uniform(0.05, 0.95)
            pair = equator_pair(flow, tau, rng.uniform(0.3, 2.2))
            assert abs(lemma_gap(flow, tau, cost, pair)) < 1e-12


def test_lemma_gap_nonnegative_sweep():
    taus = np.linspace(0.0, 1.0, 5)
    grower = ScaleFlow(
        model=Model.SPHERE2,
        law=ScaleLaw.USER_SCALE,
        tau_domain=(0.0, 1.0),
        tau_samples=taus,
        c_samples=1.0 + taus,
    )
    from flowot.harness import sample_pairs

    rng = np.random.default_rng(47)
    pairs = sample_pairs(Model.SPHERE2, rng, 40, grower.delta_cut)
    taus_s = rng.uniform(0.05, 0.95, size=40)
    for p in (0.5, 1.0, 2.0):
        cost = power_cost(p)
        for (x, y), tau in zip(pairs, taus_s):
            pair = make_pair(grower, float(tau), x, y)
            assert lemma_gap(grower, float(tau), cost, pair) >= -1e-9
            assert lemma_gap(grower, float(tau), cost, pair, method="fd") >= -1e-6
