import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import (
    crest_factor_loop,
    least_squares_ar,
    log_var_autocorr_loop,
    modified_mav_loop,
    quartiles_loop,
    waveform_length_loop,
)
from scipy import signal as sp_signal

from enff import features as ft
from enff.domain import Category, EnffError, EnfSequence, FeatureError, FeatureVector, SignalKind

AR4_G = np.array([2.2137, -2.3328, 1.3277, -0.3528])

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
seqs = arrays(np.float64, st.integers(4, 80), elements=finite)


def enf_seq(values, kind=SignalKind.POWER, nominal=60, hop=5.0):
    n = len(values)
    return EnfSequence(values, np.arange(n) * hop, np.arange(n), 3 * hop if kind is SignalKind.AUDIO else hop,
                       hop, nominal, kind, "s")


class TestIqr:
    def test_worked_example(self):
        assert ft.quartiles([1, 2, 3, 4, 5, 6, 7, 8]) == (2.5, 4.5, 6.5)
        assert ft.iqr([8, 7, 6, 5, 4, 3, 2, 1]) == 4.0

    def test_odd_length_excludes_median(self):
        # halves of [1..7] are [1,2,3] and [5,6,7]
        assert ft.quartiles([1, 2, 3, 4, 5, 6, 7]) == (2.0, 4.0, 6.0)

    def test_constant(self):
        assert ft.iqr([3.3] * 9) == 0.0

    def test_too_short(self):
        with pytest.raises(EnffError):
            ft.iqr([1, 2, 3])

    @given(seqs, finite)
    def test_shift_invariant(self, x, c):
        assert ft.iqr(x + c) == pytest.approx(ft.iqr(x), abs=1e-9)

    @given(seqs)
    def test_matches_oracle(self, x):
        q1, _, q3 = quartiles_loop(x)
        assert abs(ft.iqr(x) - (q3 - q1)) <= 1e-9


class TestCrestFactor:
    def test_constant(self):
        assert ft.crest_factor([-2.0] * 10) == 1.0

    def test_sinusoid(self):
        t = np.arange(10_000) / 10_000
        assert ft.crest_factor(np.sin(2 * np.pi * t)) == pytest.approx(np.sqrt(2), abs=1e-3)

    def test_zeros(self):
        with pytest.raises(EnffError):
            ft.crest_factor(np.zeros(5))

    def test_scale_invariant(self, rng):
        x = rng.standard_normal(500)
        assert abs(ft.crest_factor(5 * x) - ft.crest_factor(x)) < 1e-12

    @given(seqs.filter(lambda x: np.max(np.abs(x)) > 1e-100))
    def test_matches_oracle(self, x):
        assert ft.crest_factor(x) == pytest.approx(crest_factor_loop(x), abs=1e-9)

    def test_tiny_values(self):
        assert ft.crest_factor(np.full(4, 3e-298)) == 1.0


class TestWaveformLength:
    def test_example(self):
        assert ft.waveform_length([0, 1, 0, 1]) == 3.0

    def test_monotone(self):
        x = np.cumsum(np.abs(np.random.default_rng(1).standard_normal(50)))
        assert ft.waveform_length(x) == pytest.approx(x[-1] - x[0], abs=1e-12)

    def test_random_matches_loop(self, rng):
        x = rng.standard_normal(1000)
        assert ft.waveform_length(x) == pytest.approx(waveform_length_loop(x), abs=1e-9)

    def test_too_short(self):
        with pytest.raises(EnffError):
            ft.waveform_length([1.0])

    @given(seqs, st.floats(0.01, 100))
    def test_linear_in_amplitude(self, x, a):
        assert ft.waveform_length(a * x) == pytest.approx(a * ft.waveform_length(x), rel=1e-9, abs=1e-9)


class TestModifiedMav:
    def test_examples(self):
        assert ft.modified_mav([2, -2, 2, -2]) == 1.0
        assert ft.modified_mav(np.zeros(7)) == 0.0

    @given(seqs)
    def test_matches_oracle(self, x):
        assert ft.modified_mav(x) == pytest.approx(modified_mav_loop(x), abs=1e-9)
        assert ft.modified_mav(x) == pytest.approx(0.5 * np.mean(np.abs(x)), abs=1e-9)


class TestLogVarAutocorr:
    def test_constant_rejected(self):
        with pytest.raises(EnffError, match="constant"):
            ft.log_var_autocorr([60.0] * 20)

    def test_white_noise_matches_double_loop(self, rng):
        x = rng.standard_normal(1000)
        val = ft.log_var_autocorr(x)
        assert np.isfinite(val) and val < 0
        assert abs(val - log_var_autocorr_loop(x)) < 1e-9

    def test_time_reversal(self, rng):
        x = 60 + 0.01 * rng.standard_normal(200)
        assert ft.log_var_autocorr(x[::-1]) == pytest.approx(ft.log_var_autocorr(x), abs=1e-9)

    @settings(max_examples=50)
    @given(arrays(np.float64, st.integers(4, 40), elements=st.floats(-10, 10)).filter(lambda x: np.ptp(x) > 1e-3))
    def test_matches_oracle(self, x):
        assert abs(ft.log_var_autocorr(x) - log_var_autocorr_loop(x)) < 1e-9


class TestBurg:
    def test_recovers_ar4(self):
        rng = np.random.default_rng(2024)
        x = sp_signal.lfilter([1.0], np.concatenate([[1.0], -AR4_G]), rng.standard_normal(100_000 + 1000))[1000:]
        fit = ft.burg_ar4(x)
        assert np.max(np.abs(np.array(fit.g) - AR4_G)) < 0.02
        assert fit.h == pytest.approx(1.0, rel=0.05)
        g_ls, h_ls = least_squares_ar(x, 4)
        assert np.max(np.abs(np.array(fit.g) - g_ls)) < 0.01
        assert fit.h == pytest.approx(h_ls, rel=0.01)
        assert fit.g2 == fit.g[1]

    def test_white_noise(self):
        x = np.random.default_rng(5).standard_normal(100_000)
        fit = ft.burg_ar4(x)
        assert np.all(np.abs(fit.g) < 0.05)
        assert fit.h == pytest.approx(np.var(x), rel=0.02)

    def test_sinusoid_is_predictable(self):
        rng = np.random.default_rng(6)
        x = np.sin(0.3 * np.arange(2000)) + 1e-3 * rng.standard_normal(2000)
        assert 10 * np.log10(np.var(x) / ft.burg_ar4(x).h) >= 20

    def test_constant_and_short(self):
        with pytest.raises(EnffError):
            ft.burg_ar4(np.ones(50))
        with pytest.raises(EnffError):
            ft.burg_ar4(np.arange(7.0))

    def test_reflection_clamped(self, caplog):
        # an alternating sequence drives the first reflection coefficient to 1
        x = np.tile([1.0, -1.0], 20)
        g, h, refl = ft.burg(x, 1)
        assert abs(refl[0]) < 1 and h > 0
        assert "clamped" in caplog.text

    @given(arrays(np.float64, st.integers(8, 100), elements=st.floats(-5, 5)).filter(lambda x: np.ptp(x) > 1e-2))
    def test_reflections_bounded(self, x):
        fit = ft.burg_ar4(x)
        assert fit.h > 0 or fit.h == 0
        assert all(abs(k) < 1 for k in fit.reflection)


def welch_loop(x, nseg):
    """Hann-windowed averaged periodogram, unit sample rate, written out directly."""
    w = [0.5 - 0.5 * np.cos(2 * np.pi * i / nseg) for i in range(nseg)]
    scale = sum(v * v for v in w)
    step = nseg // 2
    starts = range(0, len(x) - nseg + 1, step)
    nbins = nseg // 2 + 1
    acc = np.zeros(nbins)
    for s in starts:
        seg = [x[s + i] * w[i] for i in range(nseg)]
        for k in range(nbins):
            re = sum(seg[i] * np.cos(2 * np.pi * k * i / nseg) for i in range(nseg))
            im = sum(seg[i] * np.sin(2 * np.pi * k * i / nseg) for i in range(nseg))
            p = (re * re + im * im) / scale
            acc[k] += p if k in (0, nseg // 2) else 2 * p
    return acc / len(starts)


class TestPsdFeature:
    def test_constant(self):
        assert ft.psd_feature(np.full(100, 50.02)) == 0.0

    def test_variance_scaling(self):
        z = np.random.default_rng(3).standard_normal(600)
        assert ft.psd_feature(2 * z) / ft.psd_feature(z) == pytest.approx(4.0, rel=0.1)

    def test_matches_direct_welch(self):
        x = np.random.default_rng(4).standard_normal(200)
        assert ft.psd_feature(x) == pytest.approx(np.mean(welch_loop(x - x.mean(), 64)), rel=1e-9)

    def test_slow_vs_white(self):
        rng = np.random.default_rng(8)
        white = rng.standard_normal(512)
        slow = np.cumsum(rng.standard_normal(512))
        slow = (slow - slow.mean()) / slow.std() * white.std()
        # the slow sequence concentrates its periodogram at low frequency
        lf = lambda v: welch_loop(v - v.mean(), 64)[:4].sum() / welch_loop(v - v.mean(), 64).sum()  # noqa: E731
        assert lf(slow) > lf(white)
        # and the Hann segments discard its sub-segment drift, so the mean density drops
        assert ft.psd_feature(slow) < ft.psd_feature(white)

    def test_too_short(self):
        with pytest.raises(EnffError):
            ft.psd_feature(np.arange(15.0))


class TestComputeFeatures:
    def test_schedules(self):
        assert ft.SCHEDULES[ft.P60] == ["iqr", "log_var_autocorr", "log_ar4_fpe"]
        assert len(ft.SCHEDULES[ft.P50]) == 6
        assert len(ft.SCHEDULES[ft.A60]) == 4 and len(ft.SCHEDULES[ft.A50]) == 4

    def test_power_60(self, rng):
        v = ft.compute_features(enf_seq(60 + 0.01 * rng.standard_normal(120)))
        assert v.names == ["iqr", "log_var_autocorr", "log_ar4_fpe"] and v.values.shape == (3,)

    def test_power_50(self, rng):
        vals = 50 + 0.01 * rng.standard_normal(120)
        v = ft.compute_features(enf_seq(vals, nominal=50))
        assert v.values.size == 6
        assert v.values[0] == np.mean(vals) and v.values[2] == np.median(vals)

    def test_audio_60_constant_names_feature(self):
        with pytest.raises(FeatureError) as exc:
            ft.compute_features(enf_seq([60.0] * 100, SignalKind.AUDIO))
        assert exc.value.feature == "log_var_autocorr"

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(list(ft.SCHEDULES)), st.integers(20, 200), st.integers(0, 10_000))
    def test_schedule_integrity(self, cat, n, seed):
        vals = cat.nominal_hz + 0.02 * np.random.default_rng(seed).standard_normal(n)
        v = ft.compute_features(enf_seq(vals, cat.kind, cat.nominal_hz))
        assert v.category == cat and v.names == ft.SCHEDULES[cat]
        assert v.values.size == len(v.names) and np.all(np.isfinite(v.values))


class TestDistanceMatrix:
    def _vecs(self, X):
        cat = Category(SignalKind.POWER, 60)
        return [FeatureVector(cat, [f"f{j}" for j in range(X.shape[1])], row, str(i)) for i, row in enumerate(X)]

    def test_identical_columns(self, rng):
        c = rng.standard_normal(30)
        D = ft.feature_distance_matrix(self._vecs(np.column_stack([c, c, rng.standard_normal(30)])))
        assert D[0, 1] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(D, D.T)
        assert np.all(np.diag(D) == 0)

    def test_orthogonal_columns(self):
        n = 8
        t = np.arange(n)
        X = np.column_stack([np.cos(2 * np.pi * t / n), np.sin(2 * np.pi * t / n)])
        D = ft.feature_distance_matrix(self._vecs(X))
        Z = (X - X.mean(0)) / X.std(0)
        loop = sum((Z[i, 0] - Z[i, 1]) ** 2 for i in range(n)) ** 0.5
        assert D[0, 1] == pytest.approx(loop, abs=1e-12)
        assert D[0, 1] == pytest.approx(np.sqrt(2 * n), abs=1e-12)

    def test_mixed_categories(self):
        a = FeatureVector(Category(SignalKind.POWER, 60), ["x"], [1.0], "a")
        b = FeatureVector(Category(SignalKind.AUDIO, 60), ["x"], [1.0], "b")
        with pytest.raises(EnffError, match="mixed"):
            ft.feature_distance_matrix([a, b])
