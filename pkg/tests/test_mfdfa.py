import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfspeak.mfdfa import (
    ConfigError, DegenerateWindowError, FluctuationTable, HurstCurve, MfdfaConfig, MfdfaError,
    Profile, SingularitySpectrum, WidthUndefinedError, compute_profile, fit_spectrum,
    fluctuation_function, fluctuation_table, hurst_exponents, local_fluctuations, run_mfdfa,
    scaling_exponents, singularity_spectrum,
)
from mfspeak.signal_io import CascadeSpec, TimeSeries, gen_binomial_cascade, gen_white_noise

from oracles import alpha_binomial_cascade, h_binomial_cascade, naive_local_fluctuations


def _curve(q, h):
    q = np.asarray(q, dtype=float)
    h = np.asarray(h, dtype=float)
    return HurstCurve(q, h, np.zeros_like(q), np.ones_like(q))


# ---- oracle self-check --------------------------------------------------------------

def test_cascade_oracle_by_hand_at_q2():
    # h(2) = 1/2 - ln(0.5625 + 0.0625)/(2 ln 2) = 0.5 - ln(0.625)/ln(4)
    assert h_binomial_cascade(2.0, 0.75) == pytest.approx(0.8390360, abs=1e-7)
    assert h_binomial_cascade(2.0, 0.75) == pytest.approx(0.5 - np.log(0.625) / np.log(4.0), abs=1e-15)


def test_cascade_oracle_alpha_is_tau_derivative():
    q = np.linspace(-5, 5, 41)
    q = q[q != 0]
    eps = 1e-6
    tau = lambda v: v * h_binomial_cascade(v, 0.6) - 1.0
    numeric = (tau(q + eps) - tau(q - eps)) / (2 * eps)
    np.testing.assert_allclose(alpha_binomial_cascade(q, 0.6), numeric, atol=1e-7)


# ---- profile ------------------------------------------------------------------------

def test_profile_examples():
    np.testing.assert_array_equal(compute_profile(TimeSeries([2.0, 2.0, 2.0])).values, [0, 0, 0])
    np.testing.assert_allclose(compute_profile(TimeSeries([1.0, 2.0, 3.0])).values, [-1, -1, 0])


@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=60, deadline=None)
def test_profile_telescopes(x):
    y = compute_profile(TimeSeries(x)).values
    assert y.size == x.size
    assert abs(y[-1]) <= 1e-9 * x.size * max(np.max(np.abs(x)), 1e-300) + 1e-300


# ---- local fluctuations -------------------------------------------------------------

def test_detrending_removes_its_model_class():
    i = np.arange(64, dtype=float)
    lin = local_fluctuations(Profile(3.0 * i - 7.0), 8, m=1)
    assert np.max(lin) <= 1e-18 * np.max((3.0 * i - 7.0) ** 2)
    quad = local_fluctuations(Profile(0.5 * i ** 2 - i + 2.0), 8, m=2)
    assert np.max(quad) <= 1e-18 * np.max((0.5 * i ** 2) ** 2)


def test_two_point_windows_fit_exactly():
    f2 = local_fluctuations(Profile(np.array([0.0, 1.0, 0.0, 1.0])), 2, m=1, use_both_ends=False)
    np.testing.assert_allclose(f2, [0.0, 0.0], atol=1e-30)


def test_small_profile_matches_naive():
    y = np.array([0.0, 1.0, 0.0, -1.0, 0.0, 1.0])
    for both in (False, True):
        got = local_fluctuations(Profile(y), 3, m=1, use_both_ends=both)
        np.testing.assert_allclose(got, naive_local_fluctuations(y, 3, 1, both), rtol=0, atol=1e-12)
    assert local_fluctuations(Profile(y), 3, m=1, use_both_ends=False).size == 2
    assert local_fluctuations(Profile(y), 3, m=1, use_both_ends=True).size == 4


@given(
    y=arrays(np.float64, st.integers(8, 64), elements=st.floats(-10, 10)),
    s=st.integers(3, 8),
    m=st.integers(0, 2),
    both=st.booleans(),
)
@settings(max_examples=150, deadline=None)
def test_brute_force_equivalence(y, s, m, both):
    if s < m + 1 or y.size < s:
        with pytest.raises(ConfigError):
            local_fluctuations(Profile(y), s, m, both)
        return
    got = local_fluctuations(Profile(y), s, m, both)
    np.testing.assert_allclose(got, naive_local_fluctuations(y, s, m, both), rtol=0, atol=1e-10)


def test_tail_windows_cover_remainder():
    y = np.zeros(10)
    y[-1] = 5.0  # only reachable by the end-anchored tiling
    assert np.all(local_fluctuations(Profile(y), 4, 1, use_both_ends=False) == 0)
    assert local_fluctuations(Profile(y), 4, 1, use_both_ends=True).max() > 0


# ---- q-order fluctuation function ---------------------------------------------------

def test_fluctuation_function_examples():
    for q in (-3.0, 0.0, 0.5, 2.0):
        assert fluctuation_function([6.25], q) == pytest.approx(2.5, rel=1e-14)
    assert fluctuation_function([1.0, 4.0], 2.0) == pytest.approx(np.sqrt(2.5), rel=1e-14)
    assert fluctuation_function([1.0, 4.0], 0.0) == pytest.approx(4.0 ** 0.25, rel=1e-14)


def test_zero_window_errors_name_scale():
    for q in (0.0, -1.0):
        with pytest.raises(DegenerateWindowError) as info:
            fluctuation_function([0.0, 1.0], q, scale=32)
        assert info.value.scale == 32
        assert "32" in str(info.value)
    assert fluctuation_function([0.0, 4.0], 2.0) == pytest.approx(np.sqrt(2.0))


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(1e-6, 1e6)))
@settings(max_examples=80, deadline=None)
def test_fq_monotone_in_q(f2):
    qs = np.arange(-5, 5.25, 0.25)
    vals = np.array([fluctuation_function(f2, q) for q in qs])
    assert np.all(np.diff(vals) >= -1e-9 * vals[:-1])


def test_table_monotone_on_noise():
    tbl = fluctuation_table(compute_profile(gen_white_noise(4096, 3)), MfdfaConfig())
    assert np.all(tbl.values > 0) and np.all(np.isfinite(tbl.values))
    assert np.all(np.diff(tbl.values, axis=0) >= -1e-12 * tbl.values[:-1])
    assert tbl.values.shape == (41, tbl.scales.size)


# ---- Hurst exponents and tau --------------------------------------------------------

def test_exact_power_law_table():
    scales = np.array([16, 32, 64, 128, 256])
    q = np.array(MfdfaConfig().q_grid)
    values = np.tile(3.0 * scales ** 0.5, (q.size, 1))
    hc = hurst_exponents(FluctuationTable(scales, q, values, np.ones(5, dtype=int)))
    np.testing.assert_allclose(hc.h, 0.5, atol=1e-12)
    np.testing.assert_allclose(hc.r2, 1.0, atol=1e-12)
    np.testing.assert_allclose(hc.intercept, np.log(3.0), atol=1e-12)
    spec = singularity_spectrum(hc)
    assert fit_spectrum(spec).width == 0.0


def test_hurst_needs_four_scales():
    scales = np.array([16, 32, 64])
    with pytest.raises(ConfigError):
        hurst_exponents(FluctuationTable(scales, np.array([1.0]), np.ones((1, 3)), np.ones(3)))


def test_scaling_exponent_examples():
    q = np.array([-1.0, 0.0, 2.0, 3.0])
    _, tau = scaling_exponents(_curve(q, [0.7, 0.7, 0.7, 0.7]))
    np.testing.assert_allclose(tau, 0.7 * q - 1.0, atol=1e-15)
    _, tau = scaling_exponents(_curve(q, [1.3, -4.0, 0.5, 0.2]))
    assert tau[1] == -1.0
    assert tau[2] == 0.0


# ---- singularity spectrum -----------------------------------------------------------

def test_constant_h_collapses_to_point():
    q = np.arange(-5, 5.25, 0.25)
    spec = singularity_spectrum(_curve(q, np.full(q.size, 0.62)))
    np.testing.assert_allclose(spec.alpha, 0.62, atol=1e-15)
    np.testing.assert_allclose(spec.f, 1.0, atol=1e-15)
    assert fit_spectrum(spec).width == 0.0


def test_chain_rule_with_quadratic_h():
    # central differences are exact for a quadratic: interior alpha must match exactly
    q = np.arange(-5, 5.25, 0.25)
    h = 0.6 - 0.03 * q + 0.004 * q ** 2
    spec = singularity_spectrum(_curve(q, h))
    dh = -0.03 + 0.008 * q
    np.testing.assert_allclose(spec.alpha[1:-1], (h + q * dh)[1:-1], atol=1e-12)
    np.testing.assert_allclose(spec.f, q * (spec.alpha - h) + 1.0, atol=1e-15)
    assert spec.f[q == 0][0] == 1.0


def test_inverse_q_curve_is_constant():
    # h = a + b/q gives alpha = a and f = 1 - b; finite differences add O(step^2) error
    a, b = 0.8, 0.3
    q = np.linspace(1.0, 5.0, 4001)
    spec = singularity_spectrum(_curve(q, a + b / q))
    np.testing.assert_allclose(spec.alpha[1:-1], a, atol=1e-5)
    np.testing.assert_allclose(spec.f[1:-1], 1.0 - b, atol=1e-5)


def test_spectrum_needs_three_q():
    with pytest.raises(MfdfaError):
        singularity_spectrum(_curve([0.0, 1.0], [0.5, 0.5]))


# ---- quadratic fit ------------------------------------------------------------------

def test_parabola_recovery():
    alpha = np.linspace(-0.3, 1.3, 33)
    spec = SingularitySpectrum(alpha, 1.0 - (alpha - 0.5) ** 2, np.arange(33.0))
    fit = fit_spectrum(spec)
    assert fit.alpha0 == pytest.approx(0.5, abs=1e-12)
    assert fit.A == pytest.approx(-1.0, abs=1e-9)
    assert fit.B == pytest.approx(0.0, abs=1e-9)
    assert fit.C == pytest.approx(1.0, abs=1e-9)
    assert fit.width == pytest.approx(2.0, abs=1e-9)


def test_symmetric_spectrum_has_no_asymmetry():
    u = np.linspace(-0.4, 0.4, 17)
    spec = SingularitySpectrum(0.7 + u, 1.0 - 3 * u ** 2 + 5 * u ** 4, np.arange(17.0))
    assert abs(fit_spectrum(spec).B) <= 1e-9


def test_convex_fit_reports_coefficients():
    alpha = np.linspace(0.0, 1.0, 9)
    spec = SingularitySpectrum(alpha, 1.0 + (alpha - 0.5) ** 2, np.arange(9.0))
    with pytest.raises(WidthUndefinedError) as info:
        fit_spectrum(spec)
    assert len(info.value.coefficients) == 3
    assert info.value.coefficients[0] > 0


def test_fit_cutoff_restricts_points():
    alpha = np.linspace(0.0, 1.0, 21)
    f = 1.0 - 4 * (alpha - 0.5) ** 2
    f[0] = f[-1] = -5.0  # outliers below the cutoff
    fit = fit_spectrum(SingularitySpectrum(alpha, f, np.arange(21.0)), cutoff=0.0)
    assert fit.width == pytest.approx(1.0, abs=1e-9)


# ---- full chain ---------------------------------------------------------------------

def test_constant_input_names_stage():
    with pytest.raises(DegenerateWindowError) as info:
        run_mfdfa(TimeSeries(np.full(1024, 3.0)))
    assert info.value.stage == "fluctuation_function"
    assert "fluctuation_function" in str(info.value)


def test_too_short_series():
    with pytest.raises(ConfigError):
        run_mfdfa(TimeSeries(np.arange(63.0)))


def test_scale_grid_options():
    assert list(MfdfaConfig().scales(4096)) == [16, 32, 64, 128, 256, 512, 1024]
    s = MfdfaConfig(scale_spacing="log").scales(2 ** 16)
    assert s[0] == 16 and s[-1] == 2 ** 14 and s.size == 20
    with pytest.raises(ConfigError):
        MfdfaConfig(scale_max=5000).scales(4096)
    with pytest.raises(ConfigError):
        MfdfaConfig(q_grid=(1.0, 0.0))
    with pytest.raises(ConfigError):
        MfdfaConfig(scale_min=2, detrend_order=1)


@pytest.mark.parametrize("k", [1e-3, 7.0, 250.0])
def test_scale_invariance(k):
    x = gen_white_noise(4096, 11).samples
    base = run_mfdfa(TimeSeries(x))
    scaled = run_mfdfa(TimeSeries(k * x))
    np.testing.assert_allclose(scaled.hurst.h, base.hurst.h, rtol=0, atol=1e-9)
    np.testing.assert_allclose(scaled.spectrum.alpha, base.spectrum.alpha, rtol=0, atol=1e-9)
    np.testing.assert_allclose(scaled.spectrum.f, base.spectrum.f, rtol=0, atol=1e-9)
    assert scaled.fit.width == pytest.approx(base.fit.width, abs=1e-9)
    np.testing.assert_allclose(scaled.hurst.intercept - base.hurst.intercept, np.log(k), atol=1e-9)


def test_deterministic():
    ts = gen_binomial_cascade(CascadeSpec(12, 0.7))
    a, b = run_mfdfa(ts), run_mfdfa(ts)
    assert a.hurst.h.tobytes() == b.hurst.h.tobytes()
    assert a.fit == b.fit


def test_cascade_peak_near_one_at_q0():
    res = run_mfdfa(gen_binomial_cascade(CascadeSpec(16, 0.75)))
    peak = int(np.argmax(res.spectrum.f))
    assert abs(res.spectrum.f[peak] - 1.0) <= 0.05
    assert abs(res.spectrum.q[peak]) <= 0.5
    assert abs(res.fit.C - 1.0) <= 0.2


def test_cascade_width_matches_analytic_alpha_range():
    res = run_mfdfa(gen_binomial_cascade(CascadeSpec(16, 0.75)))
    expected = alpha_binomial_cascade(-5.0, 0.75) - alpha_binomial_cascade(5.0, 0.75)
    assert abs(res.fit.width - expected) <= 0.1


def test_cascade_width_ordering():
    w6 = run_mfdfa(gen_binomial_cascade(CascadeSpec(16, 0.6))).fit.width
    w75 = run_mfdfa(gen_binomial_cascade(CascadeSpec(16, 0.75))).fit.width
    assert w75 > w6 > 0
