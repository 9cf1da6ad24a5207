"""Neutral columnar data model, ingestion, synthesis, and splitting.

Raw recordings live as one CSV per indicator per subject (``time_s`` plus one
value column per channel), with ``attributes.csv`` and ``labels.csv``
alongside. Ingestion runs the filtering/windowing/feature pipeline and yields
an immutable Dataset; preprocessed features round-trip through their own
columnar layout byte-for-byte.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as ft
from . import signals as sg
from .errors import ConfigurationError, IngestionError, PreprocessingError

RAW_FILES = {"wrist": ("ACC", "BVP", "EDA", "TEMP"),
             "chest": ("ACC", "ECG", "EDA", "EMG", "RESP", "TEMP")}
ACC_AXES = (sg.ACC_X, sg.ACC_Y, sg.ACC_Z)

LABEL_NAMES = {0: "normal", 1: "excited", 2: "stressed"}


@dataclass(frozen=True)
class Subject:
    id: str
    attributes: dict
    device: str


@dataclass
class LabeledWindows:
    subject: Subject
    features: ft.SubjectFeatures
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.shape != (self.features.window_count,):
            raise IngestionError(
                f"{self.subject.id}: {self.labels.size} labels for "
                f"{self.features.window_count} windows")
        if self.labels.size and not np.all((self.labels >= 0) & (self.labels <= 2)):
            raise IngestionError(f"{self.subject.id}: labels outside {{0,1,2}}")

    @property
    def subject_id(self) -> str:
        return self.subject.id


@dataclass
class Dataset:
    subjects: list[LabeledWindows]
    manifest: dict

    def __post_init__(self):
        catalogs = {ft.catalog_hash(s.features.catalog()) for s in self.subjects}
        if len(catalogs) > 1:
            raise IngestionError("subjects carry different feature catalogs")

    @property
    def device(self) -> str:
        return self.manifest["device"]

    @property
    def group_names(self) -> list[str]:
        return self.subjects[0].features.group_names

    @property
    def attribute_dim(self) -> int:
        return self.subjects[0].features.attribute_dim

    def catalog(self) -> list[dict]:
        return self.subjects[0].features.catalog()

    def catalog_hash(self) -> str:
        return ft.catalog_hash(self.catalog())

    def total_windows(self) -> int:
        return sum(s.features.window_count for s in self.subjects)

    def subject(self, subject_id: str) -> LabeledWindows:
        for s in self.subjects:
            if s.subject.id == subject_id:
                return s
        raise KeyError(subject_id)


# ---------------------------------------------------------------------------
# CSV helpers (deterministic formatting: repr round-trips floats exactly)

def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise IngestionError(f"missing file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, header row is mandatory")
        return header, [row for row in reader if row]


def _read_signal_csv(path: Path) -> tuple[float, np.ndarray]:
    """Returns (rate_hz, values array of shape (n, channels))."""
    header, rows = _read_csv(path)
    if not rows:
        raise IngestionError(f"{path}: no samples")
    try:
        data = np.asarray([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric cell ({exc})")
    times = data[:, 0]
    steps = np.diff(times)
    if times.size < 2 or not np.all(steps > 0):
        raise IngestionError(f"{path}: time_s must be strictly increasing")
    step = float(np.median(steps))
    if np.max(np.abs(steps - step)) > 1e-6 * max(step, 1.0):
        raise IngestionError(f"{path}: non-uniform sampling step")
    return 1.0 / step, data[:, 1:]


def _read_attributes(path: Path) -> dict:
    _, rows = _read_csv(path)
    attrs = {}
    for row in rows:
        if len(row) != 2:
            raise IngestionError(f"{path}: expected key,value rows")
        attrs[row[0]] = row[1]
    return attrs


def _read_labels(path: Path) -> tuple[np.ndarray, np.ndarray]:
    _, rows = _read_csv(path)
    times, values = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            t = float(row[0])
            v = int(float(row[1]))
        except (ValueError, IndexError):
            raise IngestionError(f"{path}:{lineno}: malformed label row {row}")
        if v not in (0, 1, 2):
            raise IngestionError(f"{path}:{lineno}: label {v} outside {{0,1,2}}")
        times.append(t)
        values.append(v)
    return np.asarray(times), np.asarray(values, dtype=int)


# ---------------------------------------------------------------------------
# Raw recordings

@dataclass
class SubjectRecording:
    """In-memory raw recording of one subject before any processing."""

    subject: Subject
    signals: dict[str, sg.RawSignal]  # keyed by axis-level indicator
    label_times: np.ndarray
    label_values: np.ndarray


def write_recordings(recordings: list[SubjectRecording], out_dir) -> None:
    """Write raw recordings in the neutral columnar layout."""
    out = Path(out_dir)
    for rec in recordings:
        sdir = out / rec.subject.id
        acc = [rec.signals[a] for a in ACC_AXES]
        times = np.arange(acc[0].samples.size) / acc[0].rate_hz
        _write_csv(sdir / "ACC.csv", ["time_s", "value", "value2", "value3"],
                   ([_fmt(t), _fmt(x), _fmt(y), _fmt(z)]
                    for t, x, y, z in zip(times, acc[0].samples, acc[1].samples,
                                          acc[2].samples)))
        for name, signal in rec.signals.items():
            if name in ACC_AXES:
                continue
            times = np.arange(signal.samples.size) / signal.rate_hz
            _write_csv(sdir / f"{name}.csv", ["time_s", "value"],
                       ([_fmt(t), _fmt(v)] for t, v in zip(times, signal.samples)))
        _write_csv(sdir / "attributes.csv", ["key", "value"],
                   [[k, str(v)] for k, v in sorted(rec.subject.attributes.items())])
        _write_csv(sdir / "labels.csv", ["time_s", "label"],
                   ([_fmt(t), str(int(v))] for t, v in
                    zip(rec.label_times, rec.label_values)))


def read_recording(subject_dir, device: str) -> SubjectRecording:
    sdir = Path(subject_dir)
    subject_id = sdir.name
    attrs = _read_attributes(sdir / "attributes.csv")
    signals = {}
    for name in RAW_FILES[device]:
        path = sdir / f"{name}.csv"
        if not path.exists():
            raise IngestionError(f"subject {subject_id}: missing indicator file "
                                 f"{name}.csv required for device {device!r}")
        rate, values = _read_signal_csv(path)
        if name == "ACC":
            if values.shape[1] != 3:
                raise IngestionError(f"{path}: ACC needs 3 value columns")
            for axis, col in zip(ACC_AXES, values.T):
                signals[axis] = sg.RawSignal(subject_id, axis, rate, col)
        else:
            signals[name] = sg.RawSignal(subject_id, name, rate, values[:, 0])
    label_times, label_values = _read_labels(sdir / "labels.csv")
    return SubjectRecording(Subject(subject_id, attrs, device), signals,
                            label_times, label_values)


# ---------------------------------------------------------------------------
# Pipeline: recording -> labeled feature windows

def _window_label(times: np.ndarray, values: np.ndarray,
                  start_s: float, end_s: float) -> int | None:
    mask = (times >= start_s - 1e-9) & (times < end_s - 1e-9)
    if not np.any(mask):
        return None
    counts = np.bincount(values[mask], minlength=3)
    return int(np.argmax(counts))  # majority; ties go to the lowest label


def _filter_cutoff(config: dict | None, indicator: str, rate_hz: float) -> float:
    group = "ACC" if indicator in ACC_AXES else indicator
    if config:
        cutoffs = config.get("cutoff_hz", {})
        if group in cutoffs:
            return float(cutoffs[group])
    return sg.default_cutoff_hz(indicator, rate_hz)


def process_recording(rec: SubjectRecording, plan: sg.WindowPlan,
                      filter_config: dict | None = None,
                      feature_config: dict | None = None) -> LabeledWindows:
    """Denoise, window, featurize, and label one subject's recording."""
    fcfg = feature_config or {}
    order = int((filter_config or {}).get("order", 4))
    windows: dict[str, list[sg.Window]] = {}
    counts = set()
    for name, raw in rec.signals.items():
        cutoff = _filter_cutoff(filter_config, name, raw.rate_hz)
        smoothed = sg.denoise(raw, order=order, cutoff_hz=cutoff)
        ws = sg.segment(smoothed, plan)
        windows[name] = ws
        counts.add(len(ws))
    if len(counts) != 1:
        raise PreprocessingError(
            f"{rec.subject.id}: indicator streams disagree on window count {sorted(counts)}")
    xi = counts.pop()

    rates = {name: s.rate_hz for name, s in rec.signals.items()}
    groups = []
    for group in sg.DEVICE_GROUPS[rec.subject.device]:
        rows = []
        names = None
        for q in range(xi):
            if group == "ACC":
                names, row = ft.acc_features(windows[sg.ACC_X][q].samples,
                                             windows[sg.ACC_Y][q].samples,
                                             windows[sg.ACC_Z][q].samples)
            elif group == "EDA":
                names, row = ft.eda_features(
                    windows["EDA"][q].samples, rates["EDA"],
                    scr_threshold=fcfg.get("scr_threshold", ft.SCR_THRESHOLD))
            elif group in ("BVP", "ECG"):
                names, row = ft.hrv_features(
                    windows[group][q].samples, rates[group], source=group,
                    threshold_stds=fcfg.get("beat_threshold_stds", ft.BEAT_THRESHOLD_STDS))
            elif group == "TEMP":
                names, row = ft.temp_features(windows["TEMP"][q].samples, rates["TEMP"])
            elif group == "EMG":
                names, row = ft.emg_features(windows["EMG"][q].samples)
            elif group == "RESP":
                names, row = ft.resp_features(windows["RESP"][q].samples, rates["RESP"])
            else:
                raise ConfigurationError(f"unknown indicator group {group!r}")
            rows.append(row)
        groups.append(ft.IndicatorFeatures(group, names, np.vstack(rows)))

    # Majority label per window; unlabeled windows are dropped from every matrix.
    span = [(q * plan.window_len_s, (q + 1) * plan.window_len_s) for q in range(xi)]
    labels = [_window_label(rec.label_times, rec.label_values, lo, hi)
              for lo, hi in span]
    keep = [q for q, lab in enumerate(labels) if lab is not None]
    if not keep:
        raise IngestionError(f"{rec.subject.id}: no window overlaps any label sample")
    if len(keep) < xi:
        groups = [ft.IndicatorFeatures(g.indicator, g.names, g.values[keep]) for g in groups]
    kept_labels = np.asarray([labels[q] for q in keep], dtype=int)

    attrs = ft.encode_attributes(rec.subject.attributes)
    feats = ft.assemble(rec.subject.id, attrs, groups)
    return LabeledWindows(rec.subject, feats, kept_labels)


def load(path, device: str, plan: sg.WindowPlan,
         filter_config: dict | None = None,
         feature_config: dict | None = None,
         provenance: dict | None = None) -> Dataset:
    """Ingest a directory of raw recordings into a validated Dataset."""
    root = Path(path)
    if device not in RAW_FILES:
        raise ConfigurationError(f"unknown device {device!r}")
    subject_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subject_dirs:
        raise IngestionError(f"no subject directories under {root}")
    subjects = []
    for sdir in subject_dirs:
        rec = read_recording(sdir, device)
        subjects.append(process_recording(rec, plan, filter_config, feature_config))
    manifest = build_manifest(subjects, device, plan, filter_config, provenance)
    return Dataset(subjects, manifest)


def build_manifest(subjects: list[LabeledWindows], device: str, plan: sg.WindowPlan,
                   filter_config: dict | None, provenance: dict | None) -> dict:
    catalog = subjects[0].features.catalog()
    return {
        "device": device,
        "window_len_s": plan.window_len_s,
        "filter": filter_config or {"order": 4},
        "catalog": catalog,
        "catalog_hash": ft.catalog_hash(catalog),
        "subjects": [{
            "id": s.subject.id,
            "attributes": {k: str(v) for k, v in sorted(s.subject.attributes.items())},
            "windows": int(s.features.window_count),
            "label_histogram": {LABEL_NAMES[c]: int(np.sum(s.labels == c))
                                for c in (0, 1, 2)},
        } for s in subjects],
        "provenance": provenance or {},
    }


# ---------------------------------------------------------------------------
# Preprocessed feature files

def save_features(dataset: Dataset, out_dir) -> None:
    """Write per-subject fused feature matrices, labels, and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = [e["name"] for e in dataset.catalog()]
    for s in dataset.subjects:
        pf = s.features.pf_matrix
        _write_csv(out / s.subject.id / "features.csv", header,
                   ([_fmt(v) for v in row] for row in pf))
        _write_csv(out / s.subject.id / "labels.csv", ["window", "label"],
                   ([str(q), str(int(lab))] for q, lab in enumerate(s.labels)))
    with open(out / "manifest.json", "w") as fh:
        json.dump(dataset.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_features(in_dir) -> Dataset:
    """Read back a directory written by save_features."""
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise IngestionError(f"missing manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    catalog = manifest["catalog"]
    if ft.catalog_hash(catalog) != manifest["catalog_hash"]:
        raise IngestionError("manifest catalog hash does not match its catalog")
    attr_names = [e["name"] for e in catalog if e["indicator"] == "ATTR"]
    k = len(attr_names)
    group_order, group_cols = [], {}
    for e in catalog:
        if e["indicator"] == "ATTR":
            continue
        if e["indicator"] not in group_cols:
            group_order.append(e["indicator"])
            group_cols[e["indicator"]] = []
        group_cols[e["indicator"]].append((e["index"], e["name"]))

    subjects = []
    for meta in manifest["subjects"]:
        sid = meta["id"]
        header, rows = _read_csv(root / sid / "features.csv")
        if header != [e["name"] for e in catalog]:
            raise IngestionError(f"{sid}: feature header does not match catalog")
        pf = np.asarray([[float(v) for v in row] for row in rows])
        if k and not np.allclose(pf[:, :k], pf[0, :k]):
            raise IngestionError(f"{sid}: attribute columns vary across windows")
        attrs = ft.AttributeVector(attr_names, pf[0, :k] if k else np.zeros(0))
        groups = []
        for g in group_order:
            cols = [c for c, _ in group_cols[g]]
            names = [n for _, n in group_cols[g]]
            groups.append(ft.IndicatorFeatures(g, names, pf[:, cols]))
        _, label_rows = _read_csv(root / sid / "labels.csv")
        labels = np.asarray([int(r[1]) for r in label_rows], dtype=int)
        subject = Subject(sid, dict(meta["attributes"]), manifest["device"])
        subjects.append(LabeledWindows(subject, ft.assemble(sid, attrs, groups), labels))
    return Dataset(subjects, manifest)


# ---------------------------------------------------------------------------
# Splits

@dataclass
class Split:
    """Disjoint window-index sets per subject."""

    train: dict[str, np.ndarray]
    test: dict[str, np.ndarray]


def split_stratified(dataset: Dataset, test_fraction: float = 0.2,
                     seed: int = 0) -> Split:
    """Per-subject label-stratified window split, deterministic under seed."""
    if not 0 < test_fraction < 1:
        raise ConfigurationError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train, test = {}, {}
    for s in dataset.subjects:
        n = s.labels.size
        if n < 2:
            raise ConfigurationError(
                f"{s.subject_id}: need at least 2 windows for a stratified split")
        total_test = int(math.floor(n * test_fraction + 0.5))
        total_test = min(max(total_test, 1), n - 1)
        # Largest-remainder allocation of the test quota across labels.
        classes = [c for c in (0, 1, 2) if np.any(s.labels == c)]
        exact = {c: np.sum(s.labels == c) * total_test / n for c in classes}
        quota = {c: int(math.floor(exact[c])) for c in classes}
        leftovers = sorted(classes, key=lambda c: (-(exact[c] - quota[c]), c))
        i = 0
        while sum(quota.values()) < total_test:
            quota[leftovers[i % len(leftovers)]] += 1
            i += 1
        test_idx = []
        for c in classes:
            idx = np.flatnonzero(s.labels == c)
            rng.shuffle(idx)
            test_idx.extend(idx[:quota[c]])
        test_idx = np.asarray(sorted(test_idx), dtype=int)
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        train[s.subject_id] = np.flatnonzero(mask)
        test[s.subject_id] = test_idx
    return Split(train, test)


def split_loso(dataset: Dataset) -> list[Split]:
    """Leave-one-subject-out folds, one per subject."""
    folds = []
    for held in dataset.subjects:
        train = {s.subject_id: np.arange(s.labels.size)
                 for s in dataset.subjects if s.subject_id != held.subject_id}
        test = {held.subject_id: np.arange(held.labels.size)}
        folds.append(Split(train, test))
    return folds


def split(dataset: Dataset, policy: str = "stratified", **kwargs):
    if policy == "stratified":
        return split_stratified(dataset, **kwargs)
    if policy == "loso":
        return split_loso(dataset)
    raise ConfigurationError(f"unknown split policy {policy!r}")


# ---------------------------------------------------------------------------
# Desk-scale synthetic recordings
#
# Labels come in three contiguous blocks (normal, excited, stressed) whose
# boundary positions depend on the subject group: one group transitions later
# than the other, so the windows between the two boundary layouts carry
# conflicting classes unless the group is read from the gender attribute.
# Window-level signal properties encode the label: beat counts are strictly
# separable bands with single-count margins, while tonic skin-conductance
# level, event counts, and accelerometer level carry the label through heavy
# window-to-window noise that the cumulative encoding averages away.

SYNTH_RATES = {"wrist": {"ACC": 32.0, "BVP": 64.0, "EDA": 4.0, "TEMP": 4.0},
               "chest": {"ACC": 32.0, "ECG": 64.0, "EDA": 4.0, "EMG": 32.0,
                         "RESP": 4.0, "TEMP": 4.0}}

BEAT_BASE_COUNTS = {0: 33, 1: 36, 2: 45}     # per 30 s window
BEAT_JITTER = {0: 1, 1: 1, 2: 2}             # keeps class bands disjoint
TONIC_BASE = {0: 2.0, 1: 3.6, 2: 5.6}
TONIC_WINDOW_NOISE = 2.0
SCR_BASE_COUNT = {0: 1, 1: 2, 2: 4}
SCR_COUNT_JITTER = 2
ACC_CLASS_MEAN = {0: -0.7, 1: 0.0, 2: 0.7}
ACC_WINDOW_NOISE = 1.2
TEMP_CLASS_MEAN = {0: 36.2, 1: 36.5, 2: 36.9}
TEMP_WINDOW_NOISE = 0.45
BLOCK_FRACTIONS = {True: (0.30, 0.30, 0.40),   # group A: earlier transitions
                   False: (0.50, 0.30, 0.20)}  # group B: later transitions


def _block_labels(xi: int, group_a: bool) -> np.ndarray:
    fractions = BLOCK_FRACTIONS[group_a]
    b1 = int(round(xi * fractions[0]))
    b2 = int(round(xi * (fractions[0] + fractions[1])))
    labels = np.full(xi, 2, dtype=int)
    labels[:b1] = 0
    labels[b1:b2] = 1
    return labels


def _pulse_train(n_samples: int, rate_hz: float, n_pulses: int,
                 width_s: float, rng: np.random.Generator,
                 amplitude: float = 1.0) -> np.ndarray:
    t = np.arange(n_samples) / rate_hz
    duration = n_samples / rate_hz
    out = np.zeros(n_samples)
    for i in range(n_pulses):
        centre = (i + 0.5) * duration / n_pulses
        centre += rng.uniform(-0.02, 0.02) * duration / n_pulses
        out += amplitude * np.exp(-0.5 * ((t - centre) / width_s) ** 2)
    return out


def synthesize_recordings(seed: int, n_subjects: int, windows: int,
                          device: str = "wrist",
                          window_len_s: float = 30.0) -> list[SubjectRecording]:
    """Deterministic raw recordings with planted label-signal relationships."""
    if device not in SYNTH_RATES:
        raise ConfigurationError(f"unknown device {device!r}")
    rates = SYNTH_RATES[device]
    recordings = []
    for idx in range(n_subjects):
        rng = np.random.default_rng([seed, idx])
        group_a = idx % 2 == 0
        labels = _block_labels(windows, group_a)

        attrs = {
            "age": 30,
            "height": 170,
            "weight": 68 if group_a else 74,
            "gender": "male" if group_a else "female",
            "smoker": "no" if group_a else "yes",
            "exercised_today": "yes" if group_a else "no",
        }
        subject = Subject(f"P{idx:02d}", attrs, device)

        per_window = {name: [] for name in rates}
        for lab in labels:
            n_eda = int(round(rates["EDA"] * window_len_s))
            tonic = TONIC_BASE[lab] + rng.uniform(-TONIC_WINDOW_NOISE,
                                                  TONIC_WINDOW_NOISE)
            eda = np.full(n_eda, tonic) + 0.02 * rng.standard_normal(n_eda)
            n_scr = max(0, SCR_BASE_COUNT[lab]
                        + int(rng.integers(-SCR_COUNT_JITTER, SCR_COUNT_JITTER + 1)))
            if n_scr:
                eda += _pulse_train(n_eda, rates["EDA"], n_scr, 0.4, rng, amplitude=0.4)
            per_window["EDA"].append(eda)

            beat_key = "BVP" if device == "wrist" else "ECG"
            jitter = BEAT_JITTER[lab]
            n_beats = BEAT_BASE_COUNTS[lab] + int(rng.integers(-jitter, jitter + 1))
            n_bvp = int(round(rates[beat_key] * window_len_s))
            pulse = _pulse_train(n_bvp, rates[beat_key], n_beats, 0.08, rng)
            pulse += 0.01 * rng.standard_normal(n_bvp)
            per_window[beat_key].append(pulse)

            n_acc = int(round(rates["ACC"] * window_len_s))
            acc_level = ACC_CLASS_MEAN[lab] + rng.uniform(-ACC_WINDOW_NOISE,
                                                          ACC_WINDOW_NOISE)
            per_window["ACC"].append(
                acc_level + 0.5 * rng.standard_normal((n_acc, 3)))

            n_temp = int(round(rates["TEMP"] * window_len_s))
            t = np.arange(n_temp) / rates["TEMP"]
            temp_level = TEMP_CLASS_MEAN[lab] + rng.uniform(-TEMP_WINDOW_NOISE,
                                                            TEMP_WINDOW_NOISE)
            per_window["TEMP"].append(
                temp_level + 0.05 * np.sin(2 * np.pi * 0.01 * t + rng.uniform(0, 2 * np.pi))
                + 0.01 * rng.standard_normal(n_temp))

            if device == "chest":
                n_emg = int(round(rates["EMG"] * window_len_s))
                per_window["EMG"].append(
                    (0.2 + 0.1 * lab) * rng.standard_normal(n_emg))
                n_resp = int(round(rates["RESP"] * window_len_s))
                t = np.arange(n_resp) / rates["RESP"]
                breath_hz = 0.2 + 0.05 * lab
                per_window["RESP"].append(
                    np.sin(2 * np.pi * breath_hz * t) + 0.05 * rng.standard_normal(n_resp))

        signals = {}
        for name, chunks in per_window.items():
            series = np.concatenate(chunks, axis=0)
            if name == "ACC":
                for axis, col in zip(ACC_AXES, series.T):
                    signals[axis] = sg.RawSignal(subject.id, axis, rates["ACC"], col)
            else:
                signals[name] = sg.RawSignal(subject.id, name, rates[name], series)

        label_times = np.arange(windows * window_len_s)  # one label per second
        label_values = labels[np.minimum(label_times // int(window_len_s),
                                         windows - 1).astype(int)]
        recordings.append(SubjectRecording(subject, signals, label_times, label_values))
    return recordings


def synthesize(seed: int, n_subjects: int, windows: int, device: str = "wrist",
               window_len_s: float = 30.0) -> Dataset:
    """Synthetic recordings pushed through the real preprocessing pipeline."""
    recordings = synthesize_recordings(seed, n_subjects, windows, device, window_len_s)
    plan = sg.WindowPlan(window_len_s)
    subjects = [process_recording(rec, plan) for rec in recordings]
    provenance = {"synthesized": True, "seed": seed, "n_subjects": n_subjects,
                  "windows": windows}
    manifest = build_manifest(subjects, device, plan, None, provenance)
    return Dataset(subjects, manifest)
