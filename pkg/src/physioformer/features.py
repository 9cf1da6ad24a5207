"""Per-window feature extraction and per-subject feature assembly.

Every indicator group contributes a fixed, ordered feature family; the
concatenation order across groups is recorded in a catalog so that columns of
the fused feature matrix have stable meaning across subjects and runs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import AlignmentError, ExtractionError, IngestionError

BASIC_STAT_NAMES = ("mean", "std", "max", "min")

# Thresholding and refractory defaults for event detection; all overridable
# through the run config.
BEAT_THRESHOLD_STDS = 1.5
BEAT_REFRACTORY_S = 0.3
SCR_THRESHOLD = 0.05
SCR_REFRACTORY_S = 1.0
TONIC_CUTOFF_HZ = 0.05


@dataclass(frozen=True)
class BasicStats:
    mean: float
    std: float
    max: float
    min: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mean, self.std, self.max, self.min)


@dataclass
class IndicatorFeatures:
    """Window-by-feature matrix for one indicator group."""

    indicator: str
    names: list[str]
    values: np.ndarray  # shape (windows, features)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ExtractionError(
                f"{self.indicator}: value matrix {self.values.shape} does not "
                f"match {len(self.names)} catalog names")
        if not np.all(np.isfinite(self.values)):
            raise ExtractionError(f"{self.indicator}: non-finite feature values")

    @property
    def window_count(self) -> int:
        return self.values.shape[0]


@dataclass
class AttributeVector:
    """Encoded individual attributes, one-hot for categoricals."""

    names: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.names),):
            raise IngestionError("attribute names/values length mismatch")


@dataclass
class SubjectFeatures:
    """All feature matrices of one subject, plus the fused view."""

    subject_id: str
    attributes: AttributeVector
    groups: list[IndicatorFeatures]

    def __post_init__(self):
        counts = {g.window_count for g in self.groups}
        if len(counts) != 1:
            detail = ", ".join(f"{g.indicator}={g.window_count}" for g in self.groups)
            raise AlignmentError(
                f"{self.subject_id}: window counts disagree across indicators ({detail})")

    @property
    def window_count(self) -> int:
        return self.groups[0].window_count

    @property
    def group_names(self) -> list[str]:
        return [g.indicator for g in self.groups]

    def group(self, indicator: str) -> IndicatorFeatures:
        for g in self.groups:
            if g.indicator == indicator:
                return g
        raise KeyError(indicator)

    @property
    def attribute_dim(self) -> int:
        return len(self.attributes.names)

    @property
    def pf_matrix(self) -> np.ndarray:
        """Attributes broadcast per window, concatenated with all group features."""
        xi = self.window_count
        attr = np.tile(self.attributes.values, (xi, 1))
        return np.hstack([attr] + [g.values for g in self.groups])

    def catalog(self) -> list[dict]:
        entries = []
        for i, name in enumerate(self.attributes.names):
            entries.append({"name": name, "indicator": "ATTR", "index": i})
        offset = len(entries)
        for g in self.groups:
            for name in g.names:
                entries.append({"name": name, "indicator": g.indicator, "index": offset})
                offset += 1
        return entries


def catalog_hash(catalog: list[dict]) -> str:
    payload = json.dumps(catalog, sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def basic_stats(samples) -> BasicStats:
    """Population statistics (divide-by-N variance) of a finite sequence."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ExtractionError("basic_stats on empty input")
    if not np.all(np.isfinite(x)):
        raise ExtractionError("basic_stats on non-finite input")
    return BasicStats(float(x.mean()), float(x.std()), float(x.max()), float(x.min()))


def _stats_row(prefix: str, samples) -> tuple[list[str], list[float]]:
    names = [f"{prefix}_{s}" for s in BASIC_STAT_NAMES]
    return names, list(basic_stats(samples).as_tuple())


def detect_peaks(x: np.ndarray, threshold: float, refractory_samples: int) -> np.ndarray:
    """Indices of local maxima above a threshold, left-to-right, with a dead time."""
    x = np.asarray(x, dtype=float)
    peaks = []
    last = -1
    for i in range(1, x.size - 1):
        if x[i] <= threshold:
            continue
        if not (x[i] > x[i - 1] and x[i] >= x[i + 1]):
            continue
        if last >= 0 and i - last < refractory_samples:
            continue
        peaks.append(i)
        last = i
    return np.asarray(peaks, dtype=int)


def acc_features(x, y, z) -> tuple[list[str], np.ndarray]:
    """Per-axis stats plus stats of the summed net series x+y+z (16 values)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (x.size == y.size == z.size):
        raise ExtractionError(
            f"ACC axis lengths disagree: x={x.size}, y={y.size}, z={z.size}")
    names, values = [], []
    for axis, series in (("acc_x", x), ("acc_y", y), ("acc_z", z), ("net_acc", x + y + z)):
        n, v = _stats_row(axis, series)
        names += n
        values += v
    return names, np.asarray(values)


def _lowpass_inplace(x: np.ndarray, rate_hz: float, cutoff_hz: float, order: int = 2) -> np.ndarray:
    nyquist = rate_hz / 2.0
    wn = min(cutoff_hz, 0.99 * nyquist) / nyquist
    sos = sps.butter(order, wn, btype="low", output="sos")
    padlen = min(3 * (2 * sos.shape[0] + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def eda_features(samples, rate_hz: float, scr_threshold: float = SCR_THRESHOLD,
                 tonic_cutoff_hz: float = TONIC_CUTOFF_HZ) -> tuple[list[str], np.ndarray]:
    """Tonic/phasic split with threshold SCR events (12 values).

    Tonic is a very-low-frequency smooth of the window; phasic is the
    residual; SCR events are phasic local maxima above the threshold with a
    one-second dead time. Windows without events report zero amplitudes.
    """
    x = np.asarray(samples, dtype=float)
    tonic = _lowpass_inplace(x, rate_hz, tonic_cutoff_hz)
    phasic = x - tonic
    refractory = max(1, int(round(SCR_REFRACTORY_S * rate_hz)))
    peaks = detect_peaks(phasic, scr_threshold, refractory)
    amps = phasic[peaks] if peaks.size else np.array([])

    names, values = _stats_row("eda_tonic", tonic)
    n2, v2 = _stats_row("eda_phasic", phasic)
    names += n2
    values += v2
    names += ["eda_scr_count", "eda_scr_amp_mean", "eda_scr_amp_std", "eda_scr_amp_max"]
    if amps.size:
        values += [float(peaks.size), float(amps.mean()), float(amps.std()), float(amps.max())]
    else:
        values += [0.0, 0.0, 0.0, 0.0]
    return names, np.asarray(values)


def hrv_features(samples, rate_hz: float, source: str,
                 threshold_stds: float = BEAT_THRESHOLD_STDS,
                 refractory_s: float = BEAT_REFRACTORY_S) -> tuple[list[str], np.ndarray]:
    """Beat detection and inter-beat statistics; BVP adds the peak rate.

    Fewer than three detected beats zero-fills the features and clears the
    quality flag instead of raising.
    """
    if source not in ("ECG", "BVP"):
        raise ExtractionError(f"unknown HRV source {source!r}")
    x = np.asarray(samples, dtype=float)
    prefix = source.lower()
    threshold = x.mean() + threshold_stds * x.std()
    peaks = detect_peaks(x, threshold, max(1, int(round(refractory_s * rate_hz))))

    names = []
    if source == "BVP":
        names.append(f"{prefix}_peak_rate_hz")
    names += [f"{prefix}_rr_mean_ms", f"{prefix}_sdnn_ms", f"{prefix}_rmssd_ms",
              f"{prefix}_quality"]

    if peaks.size < 3:
        return names, np.zeros(len(names))

    rr_ms = np.diff(peaks) / rate_hz * 1000.0
    sdnn = float(rr_ms.std())
    rmssd = float(np.sqrt(np.mean(np.diff(rr_ms) ** 2)))
    values = []
    if source == "BVP":
        values.append(peaks.size / (x.size / rate_hz))
    values += [float(rr_ms.mean()), sdnn, rmssd, 1.0]
    return names, np.asarray(values)


def temp_features(samples, rate_hz: float) -> tuple[list[str], np.ndarray]:
    """Basic stats plus the least-squares slope in units per second (5 values)."""
    x = np.asarray(samples, dtype=float)
    names, values = _stats_row("temp", x)
    t = np.arange(x.size) / rate_hz
    slope = 0.0 if x.size < 2 else float(np.polyfit(t, x, 1)[0])
    return names + ["temp_slope"], np.asarray(values + [slope])


def emg_features(samples) -> tuple[list[str], np.ndarray]:
    names, values = _stats_row("emg", samples)
    return names, np.asarray(values)


def resp_features(samples, rate_hz: float) -> tuple[list[str], np.ndarray]:
    """Stats of the instantaneous breath rate from zero crossings (5 values).

    Breath events are positive-going crossings of the mean-centred signal;
    fewer than two events zero-fills and clears the quality flag.
    """
    x = np.asarray(samples, dtype=float)
    centred = x - x.mean()
    names = ["resp_rate_mean_hz", "resp_rate_std_hz", "resp_rate_max_hz",
             "resp_rate_min_hz", "resp_quality"]
    crossings = []
    for i in range(1, centred.size):
        if centred[i - 1] < 0 <= centred[i]:
            frac = centred[i - 1] / (centred[i - 1] - centred[i])
            crossings.append((i - 1 + frac) / rate_hz)
    if len(crossings) < 2:
        return names, np.zeros(len(names))
    rates = 1.0 / np.diff(np.asarray(crossings))
    return names, np.asarray([float(rates.mean()), float(rates.std()),
                              float(rates.max()), float(rates.min()), 1.0])


GENDER_LEVELS = ("male", "female")
YESNO_LEVELS = ("yes", "no")


def _one_hot(value, levels, field_name: str) -> list[float]:
    if isinstance(value, bool):
        value = "yes" if value else "no"
    key = str(value).strip().lower()
    if key not in levels:
        raise IngestionError(f"unknown {field_name} category {value!r}; expected one of {levels}")
    return [1.0 if key == level else 0.0 for level in levels]


def encode_attributes(raw: dict) -> AttributeVector:
    """Encode the subject record: continuous raw values, categoricals one-hot."""
    try:
        age = float(raw["age"])
        height = float(raw["height"])
        weight = float(raw["weight"])
    except KeyError as exc:
        raise IngestionError(f"missing attribute field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"non-numeric continuous attribute: {exc}") from exc
    names = ["age", "height", "weight",
             "gender_male", "gender_female",
             "smoker_yes", "smoker_no",
             "exercised_today_yes", "exercised_today_no"]
    values = [age, height, weight]
    values += _one_hot(raw.get("gender"), GENDER_LEVELS, "gender")
    values += _one_hot(raw.get("smoker"), YESNO_LEVELS, "smoker")
    values += _one_hot(raw.get("exercised_today"), YESNO_LEVELS, "exercised_today")
    if not all(np.isfinite(values)):
        raise IngestionError("non-finite attribute value")
    return AttributeVector(names, np.asarray(values))


def assemble(subject_id: str, attributes: AttributeVector,
             groups: list[IndicatorFeatures]) -> SubjectFeatures:
    """Fuse attribute and indicator features; group order fixes column order."""
    return SubjectFeatures(subject_id=subject_id, attributes=attributes, groups=list(groups))
