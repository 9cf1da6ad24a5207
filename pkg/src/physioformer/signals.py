"""Denoising and windowing of raw physiological streams.

Raw streams are smoothed with a zero-phase Butterworth low-pass filter and cut
into non-overlapping windows of a fixed length; trailing samples that do not
fill a whole window are dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, PreprocessingError

ACC_X = "ACC_X"
ACC_Y = "ACC_Y"
ACC_Z = "ACC_Z"
EDA = "EDA"
EMG = "EMG"
BVP = "BVP"
ECG = "ECG"
TEMP = "TEMP"
RESP = "RESP"

INDICATORS = (ACC_X, ACC_Y, ACC_Z, EDA, EMG, BVP, ECG, TEMP, RESP)

# Axis streams are filtered/windowed individually but featurized together.
WRIST_INDICATORS = (ACC_X, ACC_Y, ACC_Z, BVP, EDA, TEMP)
CHEST_INDICATORS = (ACC_X, ACC_Y, ACC_Z, ECG, EDA, EMG, RESP, TEMP)

DEVICE_INDICATORS = {"wrist": WRIST_INDICATORS, "chest": CHEST_INDICATORS}

# Feature-level indicator groups (three ACC axes collapse into one group).
WRIST_GROUPS = ("ACC", "BVP", "EDA", "TEMP")
CHEST_GROUPS = ("ACC", "ECG", "EDA", "EMG", "RESP", "TEMP")
DEVICE_GROUPS = {"wrist": WRIST_GROUPS, "chest": CHEST_GROUPS}


@dataclass(frozen=True)
class RawSignal:
    """One indicator's sample stream for one subject."""

    subject_id: str
    indicator: str
    rate_hz: float
    samples: np.ndarray
    start_time_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if self.indicator not in INDICATORS:
            raise ConfigurationError(f"unknown indicator {self.indicator!r}")
        if self.rate_hz <= 0:
            raise ConfigurationError(f"rate_hz must be positive, got {self.rate_hz}")
        if samples.size == 0:
            raise PreprocessingError(
                f"empty sample stream for {self.subject_id}/{self.indicator}")
        if not np.all(np.isfinite(samples)):
            raise PreprocessingError(
                f"non-finite samples in {self.subject_id}/{self.indicator}")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth low-pass design parameters."""

    order: int = 4
    cutoff_hz: float = 1.0


@dataclass(frozen=True)
class WindowPlan:
    """Fixed non-overlapping windowing of a stream."""

    window_len_s: float

    def __post_init__(self):
        if self.window_len_s <= 0:
            raise ConfigurationError(
                f"window length must be positive, got {self.window_len_s}")

    def window_count(self, duration_s: float) -> int:
        # Snap against float fuzz so e.g. 3600/30 never lands on 119.
        return int(math.floor(duration_s / self.window_len_s + 1e-9))


@dataclass(frozen=True)
class Window:
    """Samples of one window together with its index and time span."""

    index: int
    start_s: float
    end_s: float
    samples: np.ndarray


def default_cutoff_hz(indicator: str, rate_hz: float) -> float:
    """Per-indicator low-pass cutoff used when the config gives none."""
    nyquist = rate_hz / 2.0
    if indicator == EDA:
        return min(1.0, 0.4 * nyquist)
    if indicator == EMG:
        return min(250.0, 0.45 * nyquist)
    return 0.4 * nyquist


def design_lowpass(spec: FilterSpec, rate_hz: float) -> np.ndarray:
    """Design the discrete low-pass filter as second-order sections.

    The magnitude response approximates 1/sqrt(1 + (f/f_c)^(2n)) for
    frequencies well below Nyquist; the half-power point sits at the cutoff.
    """
    if spec.order < 1 or spec.order > 8:
        raise ConfigurationError(f"filter order must be in [1, 8], got {spec.order}")
    nyquist = rate_hz / 2.0
    if not 0 < spec.cutoff_hz < nyquist:
        raise ConfigurationError(
            f"cutoff {spec.cutoff_hz} Hz must lie in (0, {nyquist}) Hz "
            f"for rate {rate_hz} Hz")
    return sps.butter(spec.order, spec.cutoff_hz / nyquist, btype="low", output="sos")


def lowpass_magnitude(coeffs: np.ndarray, freqs_hz, rate_hz: float) -> np.ndarray:
    """Single-pass magnitude response of a designed filter at given frequencies."""
    freqs_hz = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    _, h = sps.sosfreqz(coeffs, worN=2 * np.pi * freqs_hz / rate_hz)
    return np.abs(h)


def apply_filter(sig: RawSignal, coeffs: np.ndarray) -> RawSignal:
    """Forward-backward filter a stream, preserving length, rate, and phase."""
    order = coeffs.shape[0] * 2
    if sig.samples.size <= 3 * order:
        raise PreprocessingError(
            f"signal too short to filter: {sig.subject_id}/{sig.indicator} has "
            f"{sig.samples.size} samples, need more than {3 * order}")
    default_pad = 3 * (2 * coeffs.shape[0] + 1)
    padlen = min(default_pad, sig.samples.size - 1)
    filtered = sps.sosfiltfilt(coeffs, sig.samples, padlen=padlen)
    return RawSignal(sig.subject_id, sig.indicator, sig.rate_hz,
                     filtered, sig.start_time_s)


def denoise(sig: RawSignal, order: int = 4, cutoff_hz: float | None = None) -> RawSignal:
    """Low-pass a stream with the per-indicator default cutoff unless overridden."""
    cutoff = cutoff_hz if cutoff_hz is not None else default_cutoff_hz(sig.indicator, sig.rate_hz)
    coeffs = design_lowpass(FilterSpec(order=order, cutoff_hz=cutoff), sig.rate_hz)
    return apply_filter(sig, coeffs)


def _boundary_index(t_s: float, rate_hz: float) -> int:
    # Smallest sample index with timestamp >= t_s, tolerant of float fuzz.
    return int(math.ceil(t_s * rate_hz - 1e-9))


def segment(sig: RawSignal, plan: WindowPlan) -> list[Window]:
    """Cut a stream into floor(L/T) disjoint windows; the remainder is dropped.

    Window q (1-based) holds the samples whose timestamps fall in
    [(q-1)*T, q*T), timestamps being measured from the stream start.
    """
    count = plan.window_count(sig.duration_s)
    if count < 1:
        raise PreprocessingError(
            f"stream {sig.subject_id}/{sig.indicator} is shorter "
            f"({sig.duration_s:.3f} s) than one window ({plan.window_len_s} s)")
    windows = []
    for q in range(count):
        lo = _boundary_index(q * plan.window_len_s, sig.rate_hz)
        hi = _boundary_index((q + 1) * plan.window_len_s, sig.rate_hz)
        windows.append(Window(
            index=q,
            start_s=sig.start_time_s + q * plan.window_len_s,
            end_s=sig.start_time_s + (q + 1) * plan.window_len_s,
            samples=sig.samples[lo:hi],
        ))
    return windows
