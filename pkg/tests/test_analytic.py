import math

import numpy as np
import pytest

from grwlab.analytic import (MomentSet, collapse_quantum_ratio,
                             coexistence_rate, grw_moments, grw_width,
                             reduction_factor, schrodinger_moments,
                             schrodinger_width, spread_curve,
                             _kernel_time_integral_erf,
                             _kernel_time_integral_quad)
from grwlab.core import (CollapseParams, FormulaDomainError, WavepacketParams)

WP = WavepacketParams(mass=1.0, dq0=math.sqrt(0.5))
CP = CollapseParams(lam=1.0, r_c=1.0)


# --- moment corrections ------------------------------------------------------

def test_grw_moments_zero_rate_is_identity():
    base = schrodinger_moments(WP, 1.7, hbar=1.0)
    out = grw_moments(WP, CollapseParams(lam=0.0, r_c=1.0), base, hbar=1.0)
    assert out == base


def test_grw_moments_zero_time_is_identity():
    base = schrodinger_moments(WP, 0.0, hbar=1.0)
    out = grw_moments(WP, CP, base, hbar=1.0)
    assert out == base


def test_grw_moments_natural_t2_frozen_values():
    # direct evaluation with alpha = lam = m = hbar = 1, t = 2:
    # corrections 8/6, 1, 1 on q2, p2, qp.
    base = schrodinger_moments(WP, 2.0, hbar=1.0)
    out = grw_moments(WP, CP, base, hbar=1.0)
    assert out.mean_q2 - base.mean_q2 == pytest.approx(8.0 / 6.0, rel=1e-14)
    assert out.mean_p2 - base.mean_p2 == pytest.approx(1.0, rel=1e-14)
    assert out.mean_qp_sym - base.mean_qp_sym == pytest.approx(1.0, rel=1e-14)
    assert out.mean_q == base.mean_q and out.mean_p == base.mean_p


def test_grw_moments_rejects_negative_time_and_mismatch():
    base = schrodinger_moments(WP, 1.0, hbar=1.0)
    with pytest.raises(ValueError):
        grw_moments(WP, CP, base, t=-1.0)
    with pytest.raises(ValueError):
        grw_moments(WP, CP, base, t=2.0)


def test_grw_moments_scales_with_particle_count():
    wp3 = WavepacketParams(mass=1.0, dq0=WP.dq0, n_particles=3)
    base = schrodinger_moments(wp3, 1.0, hbar=1.0)
    out1 = grw_moments(WP, CP, schrodinger_moments(WP, 1.0, hbar=1.0), hbar=1.0)
    out3 = grw_moments(wp3, CP, base, hbar=1.0)
    assert (out3.mean_p2 - base.mean_p2) == pytest.approx(
        3.0 * (out1.mean_p2 - schrodinger_moments(WP, 1.0, 1.0).mean_p2),
        rel=1e-14)


def test_grw_moments_preserve_uncertainty_relation():
    rng = np.random.default_rng(1)
    for _ in range(50):
        wp = WavepacketParams(mass=10 ** rng.uniform(-1, 1),
                              dq0=10 ** rng.uniform(-0.5, 0.5),
                              p0=rng.uniform(-1, 1))
        cp = CollapseParams(lam=10 ** rng.uniform(-2, 1),
                            r_c=10 ** rng.uniform(-0.5, 0.5))
        t = 10 ** rng.uniform(-1, 0.7)
        base = schrodinger_moments(wp, t, hbar=1.0)
        assert base.var_q * base.var_p >= 0.25 * (1 - 1e-12)
        out = grw_moments(wp, cp, base, hbar=1.0)
        assert out.var_q * out.var_p >= 0.25 * (1 - 1e-12)


def test_moment_set_rejects_negative_variance():
    with pytest.raises(ValueError):
        MomentSet(mean_q=1.0, mean_q2=0.5, mean_p=0.0, mean_p2=1.0,
                  mean_qp_sym=0.0, time=0.0)


# --- widths ------------------------------------------------------------------

def test_schrodinger_width_t0_is_dq0():
    assert schrodinger_width(WP, 0.0, hbar=1.0) == WP.dq0


def test_schrodinger_width_gaussian_frozen_value():
    # dq0^2 = 0.5, dp0^2 = 1/(4*0.5) = 0.5, t = 2: sqrt(0.5 + 0.5*4)
    assert schrodinger_width(WP, 2.0, hbar=1.0) == pytest.approx(
        math.sqrt(2.5), rel=1e-14)
    with pytest.raises(ValueError):
        schrodinger_width(WP, -1.0)


def test_schrodinger_width_large_t_slope():
    # asymptotic slope dp0 / m, fit over t in [1e3, 1e4]
    ts = np.linspace(1e3, 1e4, 40)
    widths = [schrodinger_width(WP, float(t), hbar=1.0) for t in ts]
    slope = np.polyfit(ts, widths, 1)[0]
    dp0 = 1.0 / (2.0 * WP.dq0)
    assert slope == pytest.approx(dp0 / WP.mass, rel=1e-6)


def test_schrodinger_width_gaussian_mode_forces_zero_correlation():
    w_default = schrodinger_width(WP, 1.5, hbar=1.0)
    w_ignored = schrodinger_width(WP, 1.5, initial_correlation=0.3, hbar=1.0)
    assert w_default == w_ignored


def test_schrodinger_width_nongaussian_negative_radicand():
    with pytest.raises(FormulaDomainError, match="correlation"):
        schrodinger_width(WP, 10.0, initial_correlation=-5.0, gaussian=False,
                          dp0=0.01, hbar=1.0)


def test_grw_width_natural_frozen_value():
    # sqrt(0.5 + 2 + 8/6) with alpha = lam = m = hbar = 1, t = 2
    sample = grw_width(WP, CP, 2.0, hbar=1.0)
    assert sample.width == pytest.approx(math.sqrt(0.5 + 2.0 + 8.0 / 6.0),
                                         rel=1e-14)
    assert sample.terms.initial == pytest.approx(0.5)
    assert sample.terms.quantum == pytest.approx(2.0)
    assert sample.terms.collapse == pytest.approx(8.0 / 6.0)
    assert sample.terms.correlation == 0.0


def test_grw_width_zero_rate_reduces_to_schrodinger():
    cp0 = CollapseParams(lam=0.0, r_c=1.0)
    for t in np.linspace(0.0, 5.0, 23):
        assert grw_width(WP, cp0, float(t), hbar=1.0).width == \
            schrodinger_width(WP, float(t), hbar=1.0)


def test_grw_width_hbar_to_zero_freezes_width():
    for hbar in (1e-6, 1e-8):
        for t in (0.5, 2.0, 7.0):
            w = grw_width(WP, CP, t, hbar=hbar).width
            assert w == pytest.approx(WP.dq0, rel=1e-10)


def test_grw_width_dominates_schrodinger():
    rng = np.random.default_rng(2)
    for _ in range(50):
        wp = WavepacketParams(mass=10 ** rng.uniform(-1, 1),
                              dq0=10 ** rng.uniform(-0.5, 0.5))
        cp = CollapseParams(lam=10 ** rng.uniform(-2, 1),
                            r_c=10 ** rng.uniform(-0.5, 0.5))
        t = 10 ** rng.uniform(-1, 1)
        grw = grw_width(wp, cp, t, hbar=1.0).width
        sch = schrodinger_width(wp, t, hbar=1.0)
        assert grw > sch
        assert grw_width(wp, cp, 0.0, hbar=1.0).width == \
            schrodinger_width(wp, 0.0, hbar=1.0)


def test_spread_curve_columns_are_consistent():
    times = np.linspace(0.0, 3.0, 31)
    curve = spread_curve(WP, CP, times, hbar=1.0)
    totals = curve.initial + curve.correlation + curve.quantum + curve.collapse
    assert np.allclose(curve.widths, np.sqrt(totals), rtol=1e-14)
    # zeroing the collapse column reproduces the no-collapse width
    no_collapse = np.sqrt(curve.initial + curve.correlation + curve.quantum)
    expected = [schrodinger_width(WP, float(t), hbar=1.0) for t in times]
    assert np.allclose(no_collapse, expected, rtol=1e-14)


# --- reduction factor ---------------------------------------------------------

def test_reduction_factor_one_at_t0():
    assert reduction_factor(CP, 1.3, 0.7, 0.0, 1.0) == 1.0


def test_reduction_factor_one_for_zero_rate():
    cp0 = CollapseParams(lam=0.0, r_c=1.0)
    for k, q, t in ((0.0, 0.0, 1.0), (2.0, -1.0, 3.0), (0.5, 4.0, 10.0)):
        assert reduction_factor(cp0, k, q, t, 1.0) == 1.0


def test_reduction_factor_far_separation_saturates():
    for t in (0.5, 1.0, 3.0):
        value = reduction_factor(CP, 0.0, 15.0, t, 1.0)
        assert value == pytest.approx(math.exp(-CP.lam * t), rel=1e-6)


def test_reduction_factor_range_and_monotone_in_t():
    ts = np.linspace(0.0, 5.0, 41)
    values = [reduction_factor(CP, 0.0, 1.3, float(t), 1.0) for t in ts]
    assert all(0.0 < v <= 1.0 for v in values)
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_reduction_factor_small_q_leading_order():
    # -ln F at k=0 to leading order in q: lam alpha q^2 t / 4
    q, t = 2e-4, 1.7
    value = reduction_factor(CP, 0.0, q, t, 1.0)
    series = CP.lam * CP.alpha() * q * q * t / 4.0
    assert -math.log(value) == pytest.approx(series, rel=1e-6)


def test_kernel_integral_erf_vs_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(100):
        alpha = 10 ** rng.uniform(-0.6, 0.6)
        k = rng.uniform(0.2, 3.0) * rng.choice([-1.0, 1.0])
        q = rng.uniform(-3.0, 3.0)
        t = rng.uniform(0.2, 5.0)
        exact = _kernel_time_integral_erf(alpha, k, q, t, 1.0)
        quad, _ = _kernel_time_integral_quad(alpha, k, q, t, 1.0)
        assert abs(exact - quad) <= 1e-10 * max(abs(exact), abs(quad))


# --- ratio and coexistence ----------------------------------------------------

HYDROGEN = WavepacketParams(mass=2.0 * 1.67262192369e-27, dq0=1e-10)


def test_cqr_hydrogen_prefactor():
    # r_c = 1e-7 m, dq0^2 = 1e-20 m^2: ratio = (2/3) 1e-6 lam t
    cp = CollapseParams(lam=3.0, r_c=1e-7)
    value = collapse_quantum_ratio(HYDROGEN, cp, 7.0)
    assert value == pytest.approx((2.0 / 3.0) * 1e-6 * 3.0 * 7.0, rel=1e-12)


def test_cqr_zero_time():
    assert collapse_quantum_ratio(HYDROGEN, CollapseParams(1.0, 1e-7), 0.0) == 0.0


def test_cqr_unity_at_hydrogen_bound():
    cp = CollapseParams(lam=1.5e-11, r_c=1e-7)
    assert collapse_quantum_ratio(HYDROGEN, cp, 1e17) == pytest.approx(
        1.0, rel=1e-10)


def test_cqr_linearity_and_scaling():
    rng = np.random.default_rng(3)
    for _ in range(30):
        lam = 10 ** rng.uniform(-16, -8)
        r_c = 10 ** rng.uniform(-8, -5)
        t = 10 ** rng.uniform(10, 18)
        s = 10 ** rng.uniform(-1, 1)
        base = collapse_quantum_ratio(HYDROGEN, CollapseParams(lam, r_c), t)
        assert collapse_quantum_ratio(
            HYDROGEN, CollapseParams(lam, r_c), s * t) == pytest.approx(
                s * base, rel=1e-12)
        assert collapse_quantum_ratio(
            HYDROGEN, CollapseParams(s * lam, r_c), t) == pytest.approx(
                s * base, rel=1e-12)
        assert collapse_quantum_ratio(
            HYDROGEN, CollapseParams(lam, s * r_c), t) == pytest.approx(
                base / (s * s), rel=1e-12)


def test_cqr_equals_width_term_ratio():
    sample = grw_width(HYDROGEN, CollapseParams(1e-12, 1e-7), 1e17,
                       hbar=1.054571817e-34)
    ratio = sample.terms.collapse / sample.terms.quantum
    assert collapse_quantum_ratio(
        HYDROGEN, CollapseParams(1e-12, 1e-7), 1e17) == pytest.approx(
            ratio, rel=1e-12)


def test_coexistence_rate_hydrogen_values():
    # dq0^2 = 1e-20, t = 1e17: lam_coex = 1.5e3 r_c^2
    for r_c in (1e-8, 1e-7, 1e-6):
        lam = coexistence_rate(r_c, 1e-20, 1e17)
        assert lam == pytest.approx(1.5e3 * r_c * r_c, rel=1e-12)
    assert coexistence_rate(1e-7, 1e-20, 1e17) == pytest.approx(1.5e-11,
                                                               rel=1e-12)


def test_coexistence_rate_halves_when_time_doubles():
    base = coexistence_rate(1e-7, 1e-20, 1e17)
    assert coexistence_rate(1e-7, 1e-20, 2e17) == pytest.approx(base / 2.0,
                                                                rel=1e-14)
    with pytest.raises(ValueError):
        coexistence_rate(-1.0, 1e-20, 1e17)
