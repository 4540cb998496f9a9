import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mll.analysis import (GaussianLaw, PointLaw, bias_at, constants_for, contraction_rate, deviation_check,
                          duality_suite, epsilon_bound, epsilon_example, epsilon_witness, fit_order, growth_check,
                          law_from_config, local_errors, local_weak_error, msc_pair_ratio, msc_report_polytope,
                          theorem_constants, ula_stationary_bias)
from mll.analysis.coupling import discrete_rate
from mll.analysis.local_error import ito_correction
from mll.analysis.msc import epsilon_witness_family
from mll.errors import DegenerateGrid, DegeneratePair, ImpreciseEstimate, NotContractive
from mll.mirror_maps import Gbm1d, OrthantLogBarrier, PolytopeLogBarrier, Quadratic
from mll.potentials import QuadraticGaussian, RelativeAffine
from mll.rng import stream

import oracles


def orthant(d=1):
    m = OrthantLogBarrier(d)
    return m, RelativeAffine(m, 2.0, 1.0)


# -- order fitting -------------------------------------------------------
def test_fit_exact_power_law():
    h = np.array([0.2, 0.1, 0.05, 0.025])
    f = fit_order(h, 3.0 * h**1.5)
    assert f.slope == pytest.approx(1.5, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert f.slope_ci[0] <= 1.5 <= f.slope_ci[1]


def test_fit_weighted_interval_covers():
    h = np.array([0.2, 0.1, 0.05, 0.025, 0.0125])
    rng = stream(1, "fit")
    e = h**2 * np.exp(0.02 * rng.standard_normal(5))
    f = fit_order(h, e, 1.96 * 0.02 * e)
    assert f.resolved
    assert f.slope_ci[0] < 2.0 < f.slope_ci[1]
    assert f.slope_ci[1] - f.slope_ci[0] < 0.3


def test_fit_flags_unresolved():
    h = np.array([0.2, 0.1, 0.05, 0.025])
    assert not fit_order(h, h, 0.5 * h).resolved


@pytest.mark.parametrize("h,e", [([0.1, 0.05, 0.025], [1, 1, 1]), ([0.1, 0.2, 0.05, 0.01], [1, 1, 1, 1]),
                                 ([0.1, 0.05, 0.025, 0.01], [1, 0, 1, 1]), ([0.1, 0.05, 0.0, -1], [1, 1, 1, 1])])
def test_fit_degenerate(h, e):
    with pytest.raises(DegenerateGrid):
        fit_order(h, e)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-3, 3))
def test_fit_recovers_any_power(p, c):
    h = 0.3 * 0.5 ** np.arange(5)
    assert fit_order(h, np.exp(c) * h**p).slope == pytest.approx(p, abs=1e-9)


# -- constants -----------------------------------------------------------
def orthant_constants(E=1.0):
    m, p = orthant()
    return constants_for(m, p, E)


def test_orthant_constants_frozen():
    c = orthant_constants()
    assert c.beta == 1.0 and c.C0 == 8.0
    assert c.D1 == pytest.approx(oracles.FROZEN["orthant_D1"], rel=1e-12)
    assert c.D2 == 25.0
    assert c.h1 == c.h2 == pytest.approx(1 / 8)
    assert c.h_max == pytest.approx(oracles.FROZEN["orthant_hmax"], rel=1e-12)
    assert c.h_max == pytest.approx(oracles.hmax_expanded(2.0, 2.0, 1.0), rel=1e-12)
    assert c.gamma == pytest.approx(oracles.FROZEN["orthant_gamma_E1"], rel=1e-12)
    assert c.gamma == pytest.approx(oracles.gamma_orthant(1.0), rel=1e-12)
    assert c.E_target_sq == pytest.approx(0.5)
    assert c.V == pytest.approx(1.0)


def test_alt_hmax_is_smaller():
    c = orthant_constants()
    assert c.h_max_alt < c.h_max


@settings(max_examples=80, deadline=None)
@given(st.floats(0.1, 5), st.floats(1.0, 3.0), st.floats(0.0, 0.99), st.floats(0, 5), st.floats(0, 5),
       st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
def test_constants_match_expanded_forms(m, ratio, afrac, ys, As, gs, E0, Et):
    M = m * ratio
    alpha = afrac * m
    c = theorem_constants(m, M, alpha, 2, ys, As, gs, E0, Et)
    assert c.h_max == pytest.approx(oracles.hmax_expanded(m, M, alpha), rel=1e-10)
    assert c.C_MLA == pytest.approx(oracles.cmla_expanded(m, M, alpha, c.V, c.U), rel=1e-10)
    assert c.U == pytest.approx(math.sqrt(4 * E0 + 6 * Et))
    assert c.h_max <= 1 / (M**2 + 4 * alpha)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 2.5])
def test_not_contractive(alpha):
    with pytest.raises(NotContractive):
        theorem_constants(1.0, 2.0, alpha, 1, 0, 0, 0, 1, 1)


def test_mixing_ratio_is_four():
    c = orthant_constants()
    for eps in (0.1, 0.01):
        assert c.mixing_time_leading(eps / 2) / c.mixing_time_leading(eps) == pytest.approx(4.0, rel=1e-12)
    assert c.mixing_time(0.01, 1.0) > c.mixing_time_leading(0.01)


def test_envelopes_scale():
    c = orthant_constants()
    assert c.weak_envelope(1.0, 0.04) / c.weak_envelope(1.0, 0.01) == pytest.approx(8.0)
    assert c.strong_envelope(1.0, 0.04) / c.strong_envelope(1.0, 0.01) == pytest.approx(4.0)


def test_quadratic_constants_have_no_alpha_terms():
    q = Quadratic(2)
    c = constants_for(q, QuadraticGaussian(1.0, 2), 1.0)
    assert c.alpha == 0 and c.C1 == pytest.approx(3.0 * c.V)


# -- self-concordance ----------------------------------------------------
@pytest.mark.parametrize("eps", [0.4, 0.2, 0.1])
def test_epsilon_bound_frozen_and_oracle(eps):
    assert epsilon_bound(eps) == pytest.approx(oracles.FROZEN[f"eps{eps}_bound"], rel=1e-12)
    assert epsilon_bound(eps) == pytest.approx(1 / oracles.epsilon_sigma_min_sq(eps), rel=1e-9)


@pytest.mark.parametrize("eps", [0.4, 0.2, 0.1])
def test_epsilon_witness_attains_bound(eps):
    m = epsilon_example(eps)
    x, x2 = epsilon_witness(eps)
    assert m.in_domain(x) and m.in_domain(x2)
    assert float(msc_pair_ratio(m, x, x2)) == pytest.approx(epsilon_bound(eps), rel=1e-9)


def test_witness_family_attains_bound_everywhere():
    m = epsilon_example(0.2)
    x, x2 = epsilon_witness_family(0.2, np.array([0.5, 1.5, 3.0, 10.0]))
    assert np.allclose(msc_pair_ratio(m, x, x2), epsilon_bound(0.2), rtol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.01, 10), st.floats(-5, 5), st.floats(0.01, 10), st.floats(-5, 5))
def test_epsilon_ratio_below_bound(eps, a1, t1, a2, t2):
    m = epsilon_example(eps)
    x = np.array([a1, t1])
    x2 = np.array([a2, t2])
    if not (m.in_domain(x) and m.in_domain(x2)):
        return
    try:
        r = float(msc_pair_ratio(m, x, x2))
    except DegeneratePair:
        return
    assert r <= epsilon_bound(eps) * (1 + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 50), min_size=3, max_size=3), st.lists(st.floats(0.01, 50), min_size=3, max_size=3))
def test_orthant_ratio_at_most_one(x, x2):
    try:
        r = float(msc_pair_ratio(OrthantLogBarrier(3), x, x2))
    except DegeneratePair:
        return
    assert r <= 1 + 1e-12


def test_msc_report_epsilon():
    rep = msc_report_polytope(epsilon_example(0.2), None, probe_pairs=2000, seed=1)
    assert rep.within_bound
    assert rep.analytic_upper == pytest.approx(epsilon_bound(0.2), rel=1e-9)
    assert rep.witness_ratio == pytest.approx(rep.analytic_upper, rel=1e-6)
    assert rep.empirical_sup >= rep.witness_ratio * (1 - 1e-9)


def test_msc_report_box():
    A = np.hstack([np.eye(2), -np.eye(2)])
    rep = msc_report_polytope(A, -np.ones(4), probe_pairs=2000, seed=2)
    # four constraints in two dimensions: 1/sigma_d^2 = 1/2 is not a bound, and
    # near a face the ratio approaches 1
    assert rep.analytic_upper is None and rep.within_bound is None and rep.witness_ratio is None
    assert rep.singular_values == pytest.approx((math.sqrt(2), math.sqrt(2)))
    assert 0.5 < rep.empirical_sup <= 1 + 1e-12


def test_msc_report_identity():
    rep = msc_report_polytope(np.eye(3), np.zeros(3), probe_pairs=2000, seed=3)
    assert rep.analytic_upper == pytest.approx(1.0) and rep.within_bound


def test_degenerate_pair():
    with pytest.raises(DegeneratePair):
        msc_pair_ratio(OrthantLogBarrier(1), [1.0], [1.0])


# -- laws ----------------------------------------------------------------
def test_laws():
    m = OrthantLogBarrier(1)
    assert np.all(PointLaw(-1.0).sample(m, stream(0), 5) == -1.0)
    g = GaussianLaw([-0.05], 0.1).sample(m, stream(0), 1000)
    assert np.all(g < 0) and g.shape == (1000, 1)
    assert isinstance(law_from_config({"kind": "gaussian", "mean": [0.0], "std": 1.0}), GaussianLaw)
    assert isinstance(law_from_config([-1.0]), PointLaw)
    with pytest.raises(ValueError):
        PointLaw(1.0).sample(m, stream(0), 1)
    with pytest.raises(ValueError):
        law_from_config({"kind": "uniform"})


# -- local errors --------------------------------------------------------
def linear_em_oracle(y0, h, n):
    """Mean and mean square of fine-EM minus coarse for dY = -Y dt + noise with state-free noise."""
    r = 1 - h / n
    mean = y0 * (r**n - (1 - h))
    var = 2 * (h / n) * sum((r ** (n - 1 - j) - 1) ** 2 for j in range(n))
    return mean, mean**2 + var


def test_local_errors_quadratic_against_oracle():
    q = Quadratic(1)
    weak, strong = local_errors(q, QuadraticGaussian(1.0), PointLaw(1.0), 0.1, 10000, seed=3)
    mean, ms = linear_em_oracle(1.0, 0.1, 1024)
    assert abs(weak.value - mean) <= weak.half_width
    assert abs(strong.value - math.sqrt(ms)) <= 1.5 * strong.half_width
    assert weak.discarded == 0 and weak.replicas == 10000


def test_local_weak_error_gbm_mean_oracle():
    # the EM mean is linear in y for g(y) = y, so the same closed form holds with multiplicative noise
    g = Gbm1d(0.25)
    p = RelativeAffine(g, 1.0)
    weak, _ = local_errors(g, p, PointLaw(1.0), 0.2, 20000, seed=4)
    plain, _ = local_errors(g, p, PointLaw(1.0), 0.2, 20000, seed=4, control_variate=False)
    mean, _ = linear_em_oracle(1.0, 0.2, 1024)
    assert abs(weak.value - mean) <= weak.half_width
    assert weak.half_width < plain.half_width


def test_ito_correction_zero_for_constant_factor_and_mean_zero_otherwise():
    W = math.sqrt(0.1) * stream(5, "w").standard_normal((50000, 1))
    y0 = np.ones((50000, 1))
    assert np.all(ito_correction(Quadratic(1), y0, W, 0.1) == 0)
    L = ito_correction(OrthantLogBarrier(1), -y0, W, 0.1)
    # DA[A e](y) (W^2 - h) = y (W^2 - h) for A(y) = -y
    assert np.allclose(L[:, 0], -(W[:, 0] ** 2 - 0.1), atol=1e-7)
    assert abs(L.mean()) < 4 * L.std() / math.sqrt(len(L))


def test_local_error_guards():
    q = Quadratic(1)
    p = QuadraticGaussian(1.0)
    with pytest.raises(ValueError):
        local_errors(q, p, PointLaw(1.0), 0.1, 100, seed=0)
    with pytest.raises(ValueError):
        local_errors(q, p, PointLaw(1.0), 0.1, 10000, seed=0, fine_steps=64)
    with pytest.raises(ValueError):
        local_errors(q, p, PointLaw(1.0), 1.5, 10000, seed=0)


def test_imprecise_warning():
    q = Quadratic(1)
    with pytest.warns(ImpreciseEstimate):
        local_weak_error(q, QuadraticGaussian(1.0), PointLaw(0.0), 0.01, 10000, seed=0, control_variate=False)


# -- coupling ------------------------------------------------------------
def test_contraction_quadratic_exact():
    q = Quadratic(1)
    fit = contraction_rate(q, QuadraticGaussian(1.0), [1.0], [0.0], 0.01, 100, pairs=40, seed=0)
    assert fit.rate == pytest.approx(discrete_rate(0.99**2, 0.01), rel=1e-9)
    assert not fit.non_contracting


def test_contraction_orthant_discrete_rate():
    m, p = orthant()
    h = 0.01
    fit = contraction_rate(m, p, [-1.0], [-0.5], h, 50, pairs=40000, seed=1)
    expect = discrete_rate(oracles.orthant_pair_multiplier(h), h)
    assert fit.rate == pytest.approx(expect, abs=4 * fit.se)


def test_gbm_super_critical_flagged():
    g = Gbm1d(1.1)
    fit = contraction_rate(g, RelativeAffine(g, 1.0), [1.0], [0.5], 0.01, 50, pairs=40000, seed=2)
    assert fit.non_contracting


def test_deviation_orthant_ratio_matches_oracle():
    m, p = orthant()
    rep = deviation_check(m, p, PointLaw(-1.0), PointLaw(-0.5), [0.05, 0.1], 20000, seed=3, fine_steps=256)
    assert rep.passed and rep.bound == 8.0
    # the pair difference is a GBM with rate 3 and volatility sqrt(2)
    for t, r, se in zip(rep.t_grid, rep.ratios, rep.ratio_se):
        assert r == pytest.approx(oracles.orthant_deviation_ratio(t), abs=4 * se + 0.02)


def test_deviation_rejects_off_grid_times():
    m, p = orthant()
    with pytest.raises(ValueError):
        deviation_check(m, p, PointLaw(-1.0), PointLaw(-0.5), [0.0333, 0.1], 100, seed=0, fine_steps=8)


def test_growth_orthant():
    m, p = orthant()
    rep = growth_check(m, p, PointLaw(-1.0), [0.05, 0.1], 20000, seed=4, fine_steps=128)
    assert rep.passed and rep.gamma == pytest.approx(54.0)
    with pytest.raises(ValueError):
        growth_check(m, p, PointLaw(-1.0), [0.2], 100, seed=0, fine_steps=8)


# -- bias ----------------------------------------------------------------
def test_ula_bias_oracle_frozen():
    assert ula_stationary_bias(1.0, 0.1) == pytest.approx(oracles.ula_bias(1.0, 0.1), rel=1e-12)
    assert ula_stationary_bias(1.0, 0.1) == pytest.approx(oracles.FROZEN["ula_bias_h0.1"], rel=1e-12)


def test_bias_at_ula():
    q = Quadratic(1)
    pt = bias_at(q, QuadraticGaussian(1.0), 0.1, 300, 40000, seed=5)
    assert pt.bias == pytest.approx(ula_stationary_bias(1.0, 0.1), abs=pt.half_width + 0.01)
    assert len(pt.snapshot_k) == 4 and pt.snapshot_k[-1] == 300


def test_bias_burn_in_floor():
    q = Quadratic(1)
    with pytest.raises(ValueError):
        bias_at(q, QuadraticGaussian(1.0), 0.1, 10, 100, seed=0)


# -- duality suite -------------------------------------------------------
@pytest.mark.parametrize("mk", [lambda: OrthantLogBarrier(2), lambda: Gbm1d(0.3), lambda: epsilon_example(0.2),
                                lambda: PolytopeLogBarrier(np.hstack([np.eye(2), -np.eye(2)]), -np.ones(4))])
def test_duality_suite_passes(mk):
    m = mk()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = duality_suite(m, RelativeAffine(m, 1.5, 1.0 if m.kind == "orthant_log_barrier" else None), n=100, seed=1)
    assert all(rep["passed"].values()), rep["errors"]
