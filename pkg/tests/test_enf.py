import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import fft_peak_frequency

from enff import enf, synth
from enff.domain import DegenerateFrameError, EnffError, EnfSequence, NoRootInBandError, Recording, SignalKind

FS = 1000.0


def tone(f, seconds, phase=0.3):
    t = np.arange(int(round(seconds * FS))) / FS
    return np.sin(2 * np.pi * f * t + phase)


def rms(a):
    return float(np.sqrt(np.mean(np.square(a))))


class TestRootMusic:
    def test_pure_tone(self):
        x = tone(60.02, 5)
        est = enf.root_music_frequency(x, FS)
        assert abs(est - fft_peak_frequency(x, FS)) < 1e-3
        assert abs(est - 60.02) < 1e-3

    def test_noisy_15s_frames(self):
        rng = np.random.default_rng(7)
        est, ref = [], []
        for _ in range(100):
            x = tone(49.95, 15, rng.uniform(0, 2 * np.pi))
            x = x + rng.normal(0, np.sqrt(0.5 / 100), x.size)
            est.append(enf.root_music_frequency(x, FS))
            ref.append(fft_peak_frequency(x, FS))
        assert abs(np.mean(est) - 49.95) < 0.005
        assert abs(np.mean(est) - np.mean(ref)) < 0.005

    def test_constant_frame(self):
        with pytest.raises(DegenerateFrameError, match="degenerate frame"):
            enf.root_music_frequency(np.full(5000, 0.7), FS)
        with pytest.raises(DegenerateFrameError):
            enf.root_music_frequency(np.zeros(5000), FS)

    def test_band_mismatch(self):
        with pytest.raises(NoRootInBandError):
            enf.root_music_frequency(tone(60, 5), FS, search_band_hz=(100, 101))

    def test_short_frame(self):
        with pytest.raises(EnffError, match="too short"):
            enf.root_music_frequency(tone(60, 0.05), FS)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 1e4), st.floats(55, 65))
    def test_amplitude_invariance(self, c, f):
        x = tone(f, 5) + 0.01 * np.random.default_rng(0).standard_normal(5000)
        assert abs(enf.root_music_frequency(c * x, FS) - enf.root_music_frequency(x, FS)) < 1e-9


class TestFraming:
    def test_policies(self):
        assert (enf.POWER_FRAMING.frame_length_s, enf.POWER_FRAMING.frame_hop_s) == (5, 5)
        assert (enf.AUDIO_FRAMING.frame_length_s, enf.AUDIO_FRAMING.frame_hop_s) == (15, 5)

    def test_audio_segment_frames(self):
        assert len(enf.frame_starts(300_000, 15_000, 5_000)) == (300 - 15) // 5 + 1 == 58

    def test_partial_frame_dropped(self):
        assert list(enf.frame_starts(12_000, 5_000, 5_000)) == [0, 5_000]
        assert len(enf.frame_starts(4_999, 5_000, 5_000)) == 0

    def test_bad_policy(self):
        with pytest.raises(EnffError):
            enf.FramingPolicy(5, 6)


class TestPowerExtraction:
    def test_five_minutes_gives_sixty_frames(self):
        rec = Recording("r", tone(50.0, 300) + 0.001 * np.random.default_rng(1).standard_normal(300_000), FS)
        seq = enf.extract_power_enf(rec)
        assert len(seq) == 60
        assert np.all(np.abs(seq.values_hz[1:] - 50.0) < 0.001)
        assert seq.nominal_hz == 50 and seq.signal_kind is SignalKind.POWER
        np.testing.assert_array_equal(seq.times_s, np.arange(60) * 5.0)

    def test_tracks_walk(self):
        item = synth.render_profile(synth.get_profile("C", "power"), SignalKind.POWER, 10, seed=11)
        seq = enf.extract_power_enf(item.recording)
        truth = synth.frame_truth(item.walk, synth.DEFAULT_STEP_S, seq.times_s, 5.0)
        assert len(seq) == 120
        assert rms(seq.values_hz - truth) < 0.002
        assert seq.within_envelope()

    def test_failed_frames_are_gaps(self):
        x = tone(60, 30)
        x[10_000:15_000] = 0.0
        seq = enf.extract_power_enf(Recording("g", x, FS))
        assert list(seq.frame_index) == [0, 1, 3, 4, 5]
        assert 10.0 not in seq.times_s

    def test_nothing_to_estimate(self):
        with pytest.raises(EnffError, match="no ENF frames"):
            enf.extract_power_enf(Recording("z", np.zeros(20_000), FS))

    def test_monotone_accuracy_in_snr(self):
        walk = synth.synth_frequency_walk(synth.get_profile("A", "power"), 120, seed=5)
        errs = []
        for snr in (0, 10, 20, 40):
            rec = synth.render_power(walk, FS, snr, seed=9)
            seq = enf.extract_power_enf(rec)
            errs.append(rms(seq.values_hz - synth.frame_truth(walk, 0.1, seq.times_s, 5.0)))
        assert all(a >= b for a, b in zip(errs, errs[1:]))


class TestAudioExtraction:
    def test_hum_in_speech_noise(self):
        item = synth.render_profile(synth.get_profile("I", "audio"), SignalKind.AUDIO, 5, seed=21, snr_db=0.0)
        seq = enf.extract_audio_enf(item.recording, 60.0)
        truth = synth.frame_truth(item.walk, 0.1, seq.times_s, 15.0)
        assert len(seq) == 58
        assert rms(seq.values_hz - truth) < 0.01
        assert seq.frame_hop_s == 5.0 and seq.frame_length_s == 15.0

    def test_second_harmonic_is_folded(self):
        prof = synth.GridProfile(60, (-0.04, 0.04), 10.0, 0.7, seed=3)
        walk = synth.synth_frequency_walk(prof, 300)
        # render the walk at twice the frequency: the recording hums at 120 Hz
        rec = synth.render_audio(2 * walk, FS, 0.0, "white", seed=4)
        seq = enf.extract_audio_enf(rec, 120.0)
        assert seq.nominal_hz == 60
        truth = synth.frame_truth(walk, 0.1, seq.times_s, 15.0)
        assert np.all(np.abs(seq.values_hz - 60) < 0.06)
        assert rms(seq.values_hz - truth) < 0.02

    def test_no_hum_mostly_fails(self):
        walk = np.full(1201, 60.0)
        rec = synth.render_audio(walk, FS, 0.0, "white", seed=8, hum=False)
        try:
            seq = enf.extract_audio_enf(rec, 60.0)
        except EnffError:
            return
        # estimates may exist but they do not follow a stable hum
        assert np.std(seq.values_hz) > 0.01

    def test_paths_agree_on_stationary_tone(self):
        rec = Recording("s", tone(59.97, 300) + 0.01 * np.random.default_rng(2).standard_normal(300_000), FS)
        p = enf.extract_power_enf(rec).values_hz[1:].mean()
        a = enf.extract_audio_enf(rec, 60.0).values_hz[1:].mean()
        assert abs(p - a) < 0.003

    def test_ambiguous_harmonic(self):
        with pytest.raises(EnffError):
            enf.extract_audio_enf(Recording("s", tone(300, 30), FS), 300.0)


def _seq(values):
    n = len(values)
    return EnfSequence(values, np.arange(n) * 5.0, np.arange(n), 5.0, 5.0, 60, SignalKind.POWER, "s")


class TestRouting:
    def test_sixty(self):
        assert enf.route_nominal(_seq([59.98, 59.98])) == 60

    def test_fifty(self):
        s = _seq([50.01, 50.01])
        assert enf.route_nominal(s) == 50 and s.nominal_hz == 50

    def test_tie_goes_up(self):
        assert enf.route_nominal(_seq([55.0, 55.0])) == 60

    def test_empty(self):
        with pytest.raises(EnffError):
            enf.route_nominal(_seq([]))


def test_power_60_profiles_stay_in_envelope():
    for grid in "ACI":
        walk = synth.synth_frequency_walk(synth.get_profile(grid, "power"), 600)
        assert np.all(np.abs(walk - 60) <= 0.03)
