"""Confusion matrix, the three reported metrics, and the experiment studies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data as ds
from .errors import ConfigurationError, MetricsError
from .model import ModelConfig, PhysioFormer
from .signals import WindowPlan
from .training import TrainConfig, train

N_CLASSES = 3


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (N_CLASSES, N_CLASSES):
            raise MetricsError(f"confusion matrix must be 3x3, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise MetricsError("negative confusion counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    acc: float
    f1_per_class: list[float]
    f1_macro: float
    f1_weighted: float
    mse: float
    n: int

    def to_dict(self) -> dict:
        return {"acc": self.acc, "f1_per_class": self.f1_per_class,
                "f1_macro": self.f1_macro, "f1_weighted": self.f1_weighted,
                "mse": self.mse, "n": self.n}


def confusion(preds, labels) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise MetricsError(f"shape mismatch: preds {preds.shape}, labels {labels.shape}")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    for t, p in zip(labels, preds):
        if not (0 <= t < N_CLASSES and 0 <= p < N_CLASSES):
            raise MetricsError(f"class outside {{0,1,2}}: true={t}, pred={p}")
        counts[t, p] += 1
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricsError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def f1(cm: ConfusionMatrix) -> tuple[list[float], float]:
    """Per-class F1 (0/0 defined as 0) and the unweighted macro mean."""
    if cm.total == 0:
        raise MetricsError("F1 of an empty confusion matrix is undefined")
    per_class = []
    for c in range(N_CLASSES):
        tp = cm.counts[c, c]
        fp = cm.counts[:, c].sum() - tp
        fn = cm.counts[c, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        score = (2 * precision * recall / (precision + recall)
                 if precision + recall > 0 else 0.0)
        per_class.append(float(score))
    return per_class, float(np.mean(per_class))


def f1_weighted(cm: ConfusionMatrix) -> float:
    per_class, _ = f1(cm)
    support = cm.counts.sum(axis=1)
    if support.sum() == 0:
        raise MetricsError("F1 of an empty confusion matrix is undefined")
    return float(np.dot(per_class, support) / support.sum())


def mse(preds, labels) -> float:
    """Mean squared difference of the integer class indices."""
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.size == 0:
        raise MetricsError("MSE of an empty prediction set is undefined")
    return float(np.mean((preds - labels) ** 2))


def metrics_report(preds, labels) -> MetricsReport:
    cm = confusion(preds, labels)
    per_class, macro = f1(cm)
    return MetricsReport(acc=accuracy(cm), f1_per_class=per_class, f1_macro=macro,
                         f1_weighted=f1_weighted(cm), mse=mse(preds, labels),
                         n=cm.total)


def evaluate_model(model: PhysioFormer, dataset: ds.Dataset,
                   index_map: dict[str, np.ndarray] | None = None) -> MetricsReport:
    """Eval-mode metrics over the given window indices (default: all windows)."""
    preds, labels = [], []
    for s in dataset.subjects:
        idx = (np.arange(s.labels.size) if index_map is None
               else index_map.get(s.subject_id))
        if idx is None or len(idx) == 0:
            continue
        trace = model.forward(s.features, train=False)
        preds.extend(trace.predictions()[idx].tolist())
        labels.extend(s.labels[idx].tolist())
    return metrics_report(preds, labels)


# ---------------------------------------------------------------------------
# Studies

STUDY_KINDS = ("window_sweep", "width_sweep", "no_embedding", "no_attributes")
DEFAULT_WINDOW_SIZES = (30.0, 60.0, 90.0, 120.0)
DEFAULT_WIDTHS = (50, 100, 200, 500)


@dataclass
class StudyRow:
    settings: dict
    metrics: MetricsReport

    def to_dict(self) -> dict:
        return {"settings": self.settings, "metrics": self.metrics.to_dict()}


@dataclass
class StudyReport:
    kind: str
    rows: list[StudyRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": [r.to_dict() for r in self.rows]}


def _train_once(dataset: ds.Dataset, train_cfg: TrainConfig,
                model_overrides: dict) -> MetricsReport:
    cfg = ModelConfig.from_dataset(dataset, seed=train_cfg.seed, **model_overrides)
    model = PhysioFormer(cfg)
    split = ds.split_stratified(dataset, train_cfg.test_fraction, train_cfg.seed)
    model, _ = train(model, dataset, train_cfg, split)
    return evaluate_model(model, dataset, split.test)


def run_study(kind: str, recordings_or_dataset, train_cfg: TrainConfig,
              model_overrides: dict | None = None,
              window_sizes=DEFAULT_WINDOW_SIZES,
              widths=DEFAULT_WIDTHS) -> StudyReport:
    """Train the comparison grid for one study and tabulate held-out metrics.

    ``window_sweep`` needs raw recordings (re-windowing changes the features);
    the other kinds take a ready Dataset.
    """
    overrides = dict(model_overrides or {})
    report = StudyReport(kind)
    if kind == "window_sweep":
        recordings = recordings_or_dataset
        for t in window_sizes:
            plan = WindowPlan(t)
            subjects = [ds.process_recording(rec, plan) for rec in recordings]
            manifest = ds.build_manifest(subjects, recordings[0].subject.device,
                                         plan, None, {"study": kind})
            dataset = ds.Dataset(subjects, manifest)
            m = _train_once(dataset, train_cfg, overrides)
            report.rows.append(StudyRow({"window_len_s": t}, m))
        return report

    dataset = recordings_or_dataset
    if kind == "width_sweep":
        for hc in widths:
            for ha in widths:
                m = _train_once(dataset, train_cfg,
                                {**overrides, "hidden_contrib": hc, "hidden_affect": ha})
                report.rows.append(StudyRow({"hidden_contrib": hc, "hidden_affect": ha}, m))
        return report
    if kind == "no_embedding":
        base = _train_once(dataset, train_cfg, overrides)
        ablated = _train_once(dataset, train_cfg, {**overrides, "no_embedding": True})
        report.rows.append(StudyRow({"no_embedding": False}, base))
        report.rows.append(StudyRow({"no_embedding": True}, ablated))
        return report
    if kind == "no_attributes":
        base = _train_once(dataset, train_cfg, overrides)
        ablated = _train_once(dataset, train_cfg, {**overrides, "no_attributes": True})
        report.rows.append(StudyRow({"no_attributes": False}, base))
        report.rows.append(StudyRow({"no_attributes": True}, ablated))
        return report
    raise ConfigurationError(f"unknown study kind {kind!r}; expected one of {STUDY_KINDS}")


def study_table_csv(report: StudyReport) -> str:
    """Plot-ready CSV mirroring the comparison-table layout."""
    if not report.rows:
        return ""
    setting_keys = sorted({k for r in report.rows for k in r.settings})
    header = setting_keys + ["acc", "f1_macro", "f1_weighted", "mse", "n"]
    lines = [",".join(header)]
    for r in report.rows:
        cells = [str(r.settings.get(k, "")) for k in setting_keys]
        m = r.metrics
        cells += [repr(m.acc), repr(m.f1_macro), repr(m.f1_weighted), repr(m.mse), str(m.n)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
