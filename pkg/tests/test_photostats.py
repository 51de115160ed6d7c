import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbvlab import photostats as ps
from pbvlab.errors import DomainError, InputError
from pbvlab.photostats import G2FitParams, G2Histogram, SaturationParams, SaturationSeries

TRUTH = G2FitParams(1.0, 0.2, 3.7, 100.0)
TAU = np.arange(-200.0, 200.5, 0.5)


def test_g2_model_examples():
    assert ps.g2_model(0.0, G2FitParams(0.7, 0.3, 3.0, 50.0)) == pytest.approx(0.3)
    assert ps.g2_model(1e5, TRUTH) == pytest.approx(1.0)
    # 1 - [1.2 e^-1 - 0.2 e^-0.037]
    assert ps.g2_model(3.7, TRUTH) == pytest.approx(1 - (1.2 * math.exp(-1) - 0.2 * math.exp(-0.037)), rel=1e-15)
    assert ps.g2_model(3.7, TRUTH) == pytest.approx(0.75127990, abs=1e-8)


@given(st.floats(-1e3, 1e3), st.floats(0.01, 1), st.floats(0, 2), st.floats(0.1, 10), st.floats(1, 10))
def test_g2_model_even(tau, c, b, t1, ratio):
    p = G2FitParams(c, b, t1, t1 * (1 + ratio))
    assert ps.g2_model(tau, p) == ps.g2_model(-tau, p)


@given(st.floats(0.05, 1), st.floats(0.01, 2), st.floats(0.5, 10), st.floats(1, 50))
def test_bunching_shoulder(c, b, t1, ratio):
    p = G2FitParams(c, b, t1, t1 * (1 + ratio))
    tau = np.geomspace(1e-3, 1e4, 4000) * t1
    assert np.max(ps.g2_model(tau, p)) > 1
    assert np.max(ps.g2_model(tau, G2FitParams(c, 0.0, t1, t1 * (1 + ratio)))) <= 1


def test_fit_g2_noiseless_recovery():
    h = G2Histogram(TAU, ps.g2_model(TAU, TRUTH))
    g = ps.fit_g2(h, low_power=True)
    assert g.fit.converged
    got = (g.params.c, g.params.b, g.params.tau1, g.params.tau2)
    assert got == pytest.approx((1.0, 0.2, 3.7, 100.0), rel=1e-6)
    assert g.lifetime_ns == pytest.approx(3.7, rel=1e-6)
    assert ps.fit_g2(h).lifetime_ns is None


def test_fit_g2_flat_histogram():
    g = ps.fit_g2(G2Histogram(TAU, np.ones_like(TAU)))
    assert "no antibunching signature" in g.warnings
    assert g.params.c < 1e-3


def test_fit_g2_preconditions():
    with pytest.raises(InputError, match="8 bins"):
        ps.fit_g2(G2Histogram(np.arange(-3.0, 4.0), np.ones(7)))
    with pytest.raises(InputError, match="negative and positive"):
        ps.fit_g2(G2Histogram(np.arange(0.0, 20.0), np.ones(20)))


def test_histogram_validation():
    with pytest.raises(InputError):
        G2Histogram([0.0, -1.0], [1.0, 1.0])
    with pytest.raises(InputError):
        G2Histogram([-1.0, 1.0], [1.0, -0.1])
    G2Histogram([-1.0, 1.0], [1.0, -0.1], corrected=True)


def test_signal_fraction():
    assert ps.signal_fraction(3.0, 0.0) == 1.0
    assert ps.signal_fraction(0.76, 0.24) == pytest.approx(0.76)
    assert ps.signal_fraction(2.0, 2.0) == 0.5
    with pytest.raises(DomainError):
        ps.signal_fraction(0.0, 1.0)


def test_background_correction_examples():
    assert ps.correct_g2_background(0.37, 1.0) == 0.37
    assert ps.correct_g2_background(0.45, 0.76) == pytest.approx((0.45 - 0.4224) / 0.5776, rel=1e-12)
    assert ps.correct_g2_background(0.45, 0.76) == pytest.approx(0.0478, abs=1e-4)
    assert ps.correct_g2_background(1.0, 0.3) == pytest.approx(1.0, rel=1e-15)
    for bad in (0.0, 1.01, -0.5):
        with pytest.raises(DomainError):
            ps.correct_g2_background(0.5, bad)


def test_correction_is_not_clamped_and_warns():
    with pytest.warns(ps.NegativeG2Warning):
        v = ps.correct_g2_background(0.3, 0.76)
    assert v < -0.1
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ps.correct_g2_background(0.42, 0.76)


def test_correction_on_histogram():
    h = G2Histogram(TAU, ps.mix_g2_background(ps.g2_model(TAU, TRUTH), 0.76))
    hc = ps.correct_g2_background(h, 0.76)
    assert hc.corrected
    assert np.allclose(hc.g2, ps.g2_model(TAU, TRUTH), atol=1e-12)


@given(st.floats(0, 2), st.floats(0.05, 1))
def test_mix_then_correct_identity(g_clean, rho):
    mixed = ps.mix_g2_background(g_clean, rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        back = ps.correct_g2_background(float(mixed), rho)
    assert back == pytest.approx(g_clean, abs=1e-12 / rho ** 2)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("rho", [0.5, 0.76, 1.0])
def test_emitter_count_after_correction(n, rho):
    mixed = ps.mix_g2_background(1.0 - 1.0 / n, rho)
    assert ps.emitter_count(ps.correct_g2_background(float(mixed), rho)).n_int == n


def test_emitter_count_examples():
    assert ps.emitter_count(0.0).n_int == 1
    assert ps.emitter_count(0.5).n_int == 2
    e = ps.emitter_count(0.45)
    assert e.n_real == pytest.approx(1.8181818, rel=1e-7)
    assert e.n_int == 2
    assert e.margin == pytest.approx(0.1818182, rel=1e-6)
    with pytest.raises(DomainError):
        ps.emitter_count(1.0)


def test_saturation_model_examples():
    p = SaturationParams(222.0, 1.8)
    assert ps.saturation_model(0.0, p) == 0.0
    assert ps.saturation_model(1.8, p) == pytest.approx(111.0)
    assert ps.saturation_model(1e9, p) == pytest.approx(222.0, rel=1e-8)


@given(st.floats(1, 1e4), st.floats(0.01, 100))
def test_saturation_model_increasing_concave(i_inf, p_sat):
    P = np.linspace(0, 10 * p_sat, 200)
    y = ps.saturation_model(P, SaturationParams(i_inf, p_sat))
    assert np.all(np.diff(y) > 0)
    assert np.all(np.diff(y, 2) <= 1e-12 * i_inf)


P12 = np.linspace(0.1, 5.0, 12)


def test_fit_saturation_with_background():
    clean = ps.saturation_model(P12, SaturationParams(222.0, 1.8))
    total = SaturationSeries(P12, clean + 30.0 * P12)
    bg = SaturationSeries(P12, 30.0 * P12, "background")
    sf = ps.fit_saturation(total, bg)
    assert (sf.params.i_inf, sf.params.p_sat) == pytest.approx((222.0, 1.8), rel=1e-6)
    assert sf.background_slope == pytest.approx(30.0)
    assert sf.flags == []
    assert sf.raw is not None and sf.raw.params[0] > 222.0


def test_fit_saturation_uncorrected():
    sf = ps.fit_saturation(SaturationSeries(P12, ps.saturation_model(P12, SaturationParams(222.0, 1.8))))
    assert sf.flags == ["uncorrected"]
    assert sf.params.i_inf == pytest.approx(222.0, rel=1e-6)


def test_fit_saturation_background_exceeds_total():
    clean = ps.saturation_model(P12, SaturationParams(222.0, 1.8))
    total = clean + 30.0 * P12
    bg = 30.0 * P12
    total[0] = bg[0] * 0.5          # corrupted point
    sf = ps.fit_saturation(SaturationSeries(P12, total), SaturationSeries(P12, bg, "background"))
    assert "background_exceeds_total" in sf.flags
    assert "negative_corrected_intensity" in sf.flags
    # the zero-weighted point does not pull the fit
    assert sf.params.i_inf == pytest.approx(222.0, rel=1e-6)


def test_fit_saturation_interpolates_misaligned_background():
    clean = ps.saturation_model(P12, SaturationParams(222.0, 1.8))
    Pb = np.linspace(0.0, 6.0, 7)
    sf = ps.fit_saturation(SaturationSeries(P12, clean + 30 * P12 + 5),
                           SaturationSeries(Pb, 30 * Pb + 5, "background"))
    assert sf.params.p_sat == pytest.approx(1.8, rel=1e-6)
    assert sf.background_intercept == pytest.approx(5.0)


@pytest.mark.parametrize("seed", range(5))
def test_fit_saturation_noisy_within_reported_error(seed):
    rng = np.random.default_rng(seed)
    clean = ps.saturation_model(P12, SaturationParams(222.0, 1.8))
    total = (clean + 30 * P12) * (1 + 0.05 * rng.standard_normal(P12.size))
    sf = ps.fit_saturation(SaturationSeries(P12, total), SaturationSeries(P12, 30 * P12, "background"))
    assert abs(sf.params.i_inf - 222.0) < 3 * sf.stderr.i_inf
    assert abs(sf.params.p_sat - 1.8) < 3 * sf.stderr.p_sat


def test_saturation_csv_round_trip():
    s = SaturationSeries(P12, ps.saturation_model(P12, SaturationParams(222.0, 1.8)))
    back = SaturationSeries.from_csv(s.to_csv())
    assert np.array_equal(back.power, s.power) and np.array_equal(back.intensity, s.intensity)


def test_g2_csv_round_trip():
    h = G2Histogram(TAU, ps.g2_model(TAU, TRUTH))
    back = G2Histogram.from_csv(h.to_csv())
    assert np.array_equal(back.g2, h.g2)
