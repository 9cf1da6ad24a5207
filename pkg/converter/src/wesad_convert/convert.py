"""Unpack WESAD per-subject archives into per-device columnar recordings.

Each subject archive is a pickled dict with chest signals sampled at 700 Hz,
wrist signals at their device rates, and a 700 Hz condition-code stream. Only
the baseline/amusement/stress conditions are exported (mapped to 0/1/2);
every other code is dropped and counted. Subject attributes come from the
accompanying readme text, parsed leniently.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import pickle
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("wesad_convert")

CHEST_RATE_HZ = 700.0
WRIST_RATES_HZ = {"ACC": 32.0, "BVP": 64.0, "EDA": 4.0, "TEMP": 4.0}
LABEL_RATE_HZ = 700.0

# archive key -> neutral indicator file name
CHEST_KEYS = {"ACC": "ACC", "ECG": "ECG", "EDA": "EDA", "EMG": "EMG",
              "Resp": "RESP", "Temp": "TEMP"}
WRIST_KEYS = {"ACC": "ACC", "BVP": "BVP", "EDA": "EDA", "TEMP": "TEMP"}

# study condition codes: 1 baseline, 2 stress, 3 amusement; the rest are
# transient/meditation phases that the three-state task excludes
CODE_TO_LABEL = {1: 0, 3: 1, 2: 2}

README_PATTERNS = {
    "age": re.compile(r"^\s*age\s*[:=]\s*(\d+)", re.I),
    "height": re.compile(r"^\s*height\s*(?:\(cm\))?\s*[:=]\s*(\d+(?:\.\d+)?)", re.I),
    "weight": re.compile(r"^\s*weight\s*(?:\(kg\))?\s*[:=]\s*(\d+(?:\.\d+)?)", re.I),
    "gender": re.compile(r"^\s*gender\s*[:=]\s*(male|female)", re.I),
    "smoker": re.compile(r"^\s*do you smoke\??\s*[:=]?\s*(yes|no)", re.I),
    "exercised_today": re.compile(
        r"^\s*did you do any sports today\??\s*[:=]?\s*(yes|no)", re.I),
}
REQUIRED_ATTRS = ("age", "height", "weight", "gender", "smoker", "exercised_today")


class ConversionError(Exception):
    pass


@dataclass
class ConversionManifest:
    subject_id: str
    signals: dict = field(default_factory=dict)   # device/name -> rows, rate
    label_histogram: dict = field(default_factory=dict)
    labels_in: int = 0
    labels_out: int = 0
    labels_dropped: int = 0
    checksums: dict = field(default_factory=dict)
    unparsed_readme_lines: int = 0

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "signals": self.signals,
                "label_histogram": self.label_histogram,
                "labels_in": self.labels_in, "labels_out": self.labels_out,
                "labels_dropped": self.labels_dropped,
                "checksums": self.checksums,
                "unparsed_readme_lines": self.unparsed_readme_lines}


def parse_readme(text: str) -> tuple[dict, int]:
    """Extract the attribute record; returns (attributes, unparsed line count)."""
    attrs = {}
    unparsed = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        for key, pattern in README_PATTERNS.items():
            match = pattern.match(line)
            if match:
                attrs[key] = match.group(1).lower()
                break
        else:
            unparsed += 1
            log.debug("unparsed readme line: %s", line.strip())
    missing = [k for k in REQUIRED_ATTRS if k not in attrs]
    if missing:
        raise ConversionError(f"readme is missing attribute fields: {missing}")
    return attrs, unparsed


def load_archive(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = pickle.load(fh, encoding="latin1")
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise ConversionError(f"cannot read archive {path}: {exc}") from exc
    for key in ("subject", "signal", "label"):
        if key not in data:
            raise ConversionError(f"archive {path} lacks the {key!r} entry")
    return data


def _checksum(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_signal(path: Path, values: np.ndarray, rate_hz: float) -> int:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["time_s"] + ["value"] + [f"value{i}" for i in range(2, values.shape[1] + 1)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, row in enumerate(values):
            writer.writerow([repr(i / rate_hz)] + [repr(float(v)) for v in row])
    return values.shape[0]


def _write_labels(path: Path, codes: np.ndarray) -> tuple[int, int]:
    """Map condition codes to task labels; returns (rows_out, rows_dropped)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    rows_out = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "label"])
        for i, code in enumerate(codes):
            label = CODE_TO_LABEL.get(int(code))
            if label is None:
                continue
            writer.writerow([repr(i / LABEL_RATE_HZ), str(label)])
            rows_out += 1
    return rows_out, codes.size - rows_out


def _write_attributes(path: Path, attrs: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key in sorted(attrs):
            writer.writerow([key, attrs[key]])


def convert_subject(archive_path, readme_path, out_dir) -> ConversionManifest:
    """Convert one subject archive into wrist/ and chest/ recording trees."""
    archive = load_archive(archive_path)
    subject_id = str(archive["subject"])
    attrs, unparsed = parse_readme(Path(readme_path).read_text())
    out = Path(out_dir)
    manifest = ConversionManifest(subject_id=subject_id,
                                  unparsed_readme_lines=unparsed)

    codes = np.asarray(archive["label"]).reshape(-1)
    values, counts = np.unique(codes.astype(int), return_counts=True)
    manifest.label_histogram = {int(v): int(c) for v, c in zip(values, counts)}
    manifest.labels_in = int(codes.size)

    devices = (("chest", CHEST_KEYS, lambda name: CHEST_RATE_HZ),
               ("wrist", WRIST_KEYS, lambda name: WRIST_RATES_HZ[name]))
    for device, keys, rate_of in devices:
        signals = archive["signal"].get(device)
        if signals is None:
            raise ConversionError(f"{subject_id}: archive lacks {device} signals")
        sdir = out / device / subject_id
        for key, name in keys.items():
            if key not in signals:
                raise ConversionError(f"{subject_id}: missing {device}/{key} stream")
            rate = rate_of(key)
            rows = _write_signal(sdir / f"{name}.csv", signals[key], rate)
            manifest.signals[f"{device}/{name}"] = {"rows": rows, "rate_hz": rate}
        rows_out, dropped = _write_labels(sdir / "labels.csv", codes)
        manifest.labels_out = rows_out
        manifest.labels_dropped = dropped
        _write_attributes(sdir / "attributes.csv", attrs)
        for path in sorted(sdir.iterdir()):
            manifest.checksums[f"{device}/{subject_id}/{path.name}"] = _checksum(path)
    return manifest
