"""Filter design/application and windowing behavior."""
import numpy as np
import pytest

from physioformer.errors import ConfigurationError, PreprocessingError
from physioformer.signals import (FilterSpec, RawSignal, WindowPlan, apply_filter,
                                  design_lowpass, lowpass_magnitude, segment)


def analytic_gain(f, fc, order):
    # |H(f)| = 1/sqrt(1 + (f/fc)^(2n)) for the analog prototype
    return 1.0 / np.sqrt(1.0 + (np.asarray(f) / fc) ** (2 * order))


def make_signal(samples, rate=64.0, indicator="EDA", subject="S1"):
    return RawSignal(subject, indicator, rate, np.asarray(samples, dtype=float))


class TestDesign:
    def test_dc_gain_is_one(self):
        sos = design_lowpass(FilterSpec(order=4, cutoff_hz=5.0), rate_hz=1000.0)
        gain = lowpass_magnitude(sos, [0.0], 1000.0)[0]
        assert abs(gain - 1.0) <= 1e-9

    def test_cutoff_is_half_power(self):
        for order in (2, 4):
            sos = design_lowpass(FilterSpec(order=order, cutoff_hz=5.0), rate_hz=1000.0)
            gain = lowpass_magnitude(sos, [5.0], 1000.0)[0]
            assert gain == pytest.approx(1.0 / np.sqrt(2.0), rel=0.01)

    def test_double_cutoff_matches_analytic_law(self):
        # n=4 at f = 2*fc: |H| = 1/sqrt(1 + 2^8)
        sos = design_lowpass(FilterSpec(order=4, cutoff_hz=5.0), rate_hz=1000.0)
        gain = lowpass_magnitude(sos, [10.0], 1000.0)[0]
        assert gain == pytest.approx(1.0 / np.sqrt(1.0 + 2 ** 8), rel=0.05)

    def test_magnitude_matches_analytic_law_log_spaced(self):
        rate = 1000.0
        fc = 5.0
        freqs = np.logspace(np.log10(0.05 * fc), np.log10(8 * fc), 20)
        for order in (2, 4):
            sos = design_lowpass(FilterSpec(order=order, cutoff_hz=fc), rate)
            gains = lowpass_magnitude(sos, freqs, rate)
            expected = analytic_gain(freqs, fc, order)
            assert np.all(np.abs(gains - expected) <= 0.05 * expected)

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(ConfigurationError):
            design_lowpass(FilterSpec(order=4, cutoff_hz=32.0), rate_hz=64.0)

    def test_nonpositive_order_rejected(self):
        with pytest.raises(ConfigurationError):
            design_lowpass(FilterSpec(order=0, cutoff_hz=1.0), rate_hz=64.0)


class TestApply:
    def test_constant_signal_unchanged(self):
        sig = make_signal(np.full(512, 3.7))
        sos = design_lowpass(FilterSpec(4, 5.0), sig.rate_hz)
        out = apply_filter(sig, sos)
        assert np.max(np.abs(out.samples - 3.7)) <= 1e-9

    def test_passband_tone_preserved(self):
        rate, fc = 64.0, 5.0
        t = np.arange(4096) / rate
        sig = make_signal(np.sin(2 * np.pi * 0.1 * fc * t), rate)
        out = apply_filter(sig, design_lowpass(FilterSpec(4, fc), rate))
        mid = slice(1024, 3072)  # away from edge transients
        amp = out.samples[mid].max()
        assert amp == pytest.approx(1.0, rel=0.02)

    def test_stopband_tone_attenuated_40db(self):
        rate, fc = 256.0, 5.0
        t = np.arange(8192) / rate
        sig = make_signal(np.sin(2 * np.pi * 4 * fc * t), rate)
        out = apply_filter(sig, design_lowpass(FilterSpec(4, fc), rate))
        amp = np.abs(out.samples[2048:6144]).max()
        assert 20 * np.log10(amp) <= -40.0

    def test_linearity(self):
        rng = np.random.default_rng(0)
        rate = 64.0
        x = rng.standard_normal(512)
        y = rng.standard_normal(512)
        a, b = 1.7, -0.4
        sos = design_lowpass(FilterSpec(4, 5.0), rate)
        fx = apply_filter(make_signal(x, rate), sos).samples
        fy = apply_filter(make_signal(y, rate), sos).samples
        fxy = apply_filter(make_signal(a * x + b * y, rate), sos).samples
        assert np.max(np.abs(fxy - (a * fx + b * fy))) <= 1e-9

    def test_zero_phase_lag(self):
        rate, fc = 64.0, 5.0
        t = np.arange(2048) / rate
        tone = np.sin(2 * np.pi * 2.0 * t)
        out = apply_filter(make_signal(tone, rate), design_lowpass(FilterSpec(4, fc), rate))
        xc = np.correlate(out.samples[512:1536], tone[512:1536], mode="full")
        lag = int(np.argmax(xc)) - (1024 - 1)
        assert lag == 0

    def test_too_short_signal_names_subject_and_indicator(self):
        sig = make_signal(np.ones(10), indicator="ECG", subject="P7")
        sos = design_lowpass(FilterSpec(4, 5.0), sig.rate_hz)
        with pytest.raises(PreprocessingError, match="P7.*ECG"):
            apply_filter(sig, sos)


class TestSegment:
    def test_hour_at_thirty_seconds(self):
        sig = make_signal(np.zeros(3600 * 4), rate=4.0)
        windows = segment(sig, WindowPlan(30.0))
        assert len(windows) == 120

    def test_remainder_dropped(self):
        sig = make_signal(np.zeros(65 * 4), rate=4.0)
        windows = segment(sig, WindowPlan(30.0))
        assert len(windows) == 2
        assert all(w.samples.size == 120 for w in windows)

    def test_samples_per_window(self):
        sig = make_signal(np.arange(240), rate=4.0)
        windows = segment(sig, WindowPlan(30.0))
        assert [w.samples.size for w in windows] == [120, 120]

    def test_partition_reconstructs_prefix(self):
        rng = np.random.default_rng(1)
        samples = rng.standard_normal(1000)
        sig = make_signal(samples, rate=7.0)
        plan = WindowPlan(13.0)
        windows = segment(sig, plan)
        joined = np.concatenate([w.samples for w in windows])
        assert np.array_equal(joined, samples[:joined.size])
        # windows jointly cover exactly floor(L/T)*T seconds of samples
        xi = plan.window_count(sig.duration_s)
        assert joined.size == int(np.ceil(xi * 13.0 * 7.0 - 1e-9))

    def test_randomized_counts_and_partition(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            rate = float(rng.choice([4, 8, 32, 64, 700]))
            window_s = float(rng.choice([30, 60, 90, 120]))
            xi_true = int(rng.integers(1, 6))
            extra = int(rng.integers(0, int(window_s * rate)))
            n = int(xi_true * window_s * rate) + extra
            sig = make_signal(rng.standard_normal(n), rate)
            windows = segment(sig, WindowPlan(window_s))
            assert len(windows) == xi_true
            joined = np.concatenate([w.samples for w in windows])
            assert np.array_equal(joined, sig.samples[:int(xi_true * window_s * rate)])
            for w in windows:
                assert w.samples.size == int(window_s * rate)

    def test_shorter_than_window_errors(self):
        sig = make_signal(np.zeros(100), rate=4.0)
        with pytest.raises(PreprocessingError):
            segment(sig, WindowPlan(30.0))

    def test_resegmenting_reassembled_signal_is_stable(self):
        rng = np.random.default_rng(3)
        sig = make_signal(rng.standard_normal(1000), rate=7.0)
        plan = WindowPlan(13.0)
        windows = segment(sig, plan)
        rebuilt = make_signal(np.concatenate([w.samples for w in windows]), rate=7.0)
        assert len(segment(rebuilt, plan)) == len(windows)
