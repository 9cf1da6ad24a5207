"""Composite loss, RMSprop updates, and the per-subject training regime.

Each epoch walks the subjects in a fixed seeded order and performs one
forward/backward/update step per subject over that subject's full window
sequence, with the loss masked to the subject's training windows. The
learning rate decays on a step schedule and early stopping tracks the
held-out loss, keeping the best checkpoint.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Split, split_stratified
from .errors import ConfigurationError, TrainingError
from .model import ForwardTrace, PhysioFormer


@dataclass
class TrainConfig:
    max_epochs: int = 150
    lr: float = 1e-4
    lam: float = 0.5
    step_epochs: int = 60
    gamma: float = 0.5
    patience: int = 15
    min_delta: float = 1e-4
    seed: int = 0
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    shuffle_subjects: bool = False
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.lr}")
        if self.lam < 0:
            raise ConfigurationError(f"regularization must be >= 0, got {self.lam}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    stopping_reason: str = ""
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "stopping_reason": self.stopping_reason,
                "best_epoch": self.best_epoch, "best_val_loss": self.best_val_loss,
                "wall_time_s": self.wall_time_s}


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def loss(trace: ForwardTrace, labels: np.ndarray, lam: float,
         mask: np.ndarray | None = None) -> float:
    """Cross entropy plus the contribution-score regularizer, averaged over windows."""
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() > 2):
        raise TrainingError(f"labels outside {{0,1,2}}: {sorted(set(labels.tolist()))}")
    idx = np.arange(trace.window_count) if mask is None else np.asarray(mask, dtype=int)
    if idx.size == 0:
        raise TrainingError("loss over an empty window set")
    log_probs = _log_softmax(trace.logits[idx])
    ce = -log_probs[np.arange(idx.size), labels[idx]].mean()
    reg = 0.0
    if lam > 0 and trace.alpha:
        reg = float(np.mean([np.mean((trace.alpha[g][idx] - 1.0) ** 2)
                             for g in trace.alpha]))
    value = float(ce + lam * reg)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss for subject {trace.subject_id}")
    return value


def backward(model: PhysioFormer, trace: ForwardTrace, feats, labels: np.ndarray,
             lam: float, mask: np.ndarray | None = None) -> None:
    """Accumulate exact gradients of the composite loss into the model."""
    labels = np.asarray(labels, dtype=int)
    idx = np.arange(trace.window_count) if mask is None else np.asarray(mask, dtype=int)
    n = idx.size
    probs = softmax(trace.logits)
    dlogits = np.zeros_like(trace.logits)
    dlogits[idx] = probs[idx]
    dlogits[idx, labels[idx]] -= 1.0
    dlogits /= n

    dalpha_extra = None
    if lam > 0 and not model.config.no_embedding:
        n_groups = len(model.config.groups)
        dalpha_extra = {}
        for g in model.config.groups:
            d = np.zeros(trace.window_count)
            d[idx] = 2.0 * lam * (trace.alpha[g][idx] - 1.0) / (n_groups * n)
            dalpha_extra[g] = d
    model.backward(trace, feats, dlogits, dalpha_extra)


class RMSprop:
    """Moving average of squared gradients with per-parameter step scaling."""

    def __init__(self, model: PhysioFormer, decay: float = 0.9, eps: float = 1e-8):
        self.decay = decay
        self.eps = eps
        self.v = {name: np.zeros_like(p.value) for name, p in model.param_items()}

    def step(self, model: PhysioFormer, lr: float) -> None:
        for name, p in model.param_items():
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in {name}")
            v = self.v[name]
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            p.value = p.value - lr * g / np.sqrt(v + self.eps)


def step_lr(base_lr: float, epoch: int, step_epochs: int, gamma: float) -> float:
    return base_lr * gamma ** (epoch // step_epochs)


def _masked_eval_loss(model: PhysioFormer, dataset: Dataset,
                      index_map: dict[str, np.ndarray], lam: float) -> tuple[float, float]:
    """Eval-mode loss and accuracy over the given window indices."""
    total_loss, total_correct, total_n = 0.0, 0, 0
    for s in dataset.subjects:
        idx = index_map.get(s.subject_id)
        if idx is None or len(idx) == 0:
            continue
        trace = model.forward(s.features, train=False)
        total_loss += loss(trace, s.labels, lam, mask=idx) * len(idx)
        preds = trace.predictions()[idx]
        total_correct += int(np.sum(preds == s.labels[idx]))
        total_n += len(idx)
    if total_n == 0:
        raise TrainingError("evaluation over an empty split")
    return total_loss / total_n, total_correct / total_n


def train(model: PhysioFormer, dataset: Dataset, cfg: TrainConfig,
          split: Split | None = None) -> tuple[PhysioFormer, TrainReport]:
    """Train in place and return the best-checkpoint model plus the report."""
    t0 = time.perf_counter()
    if split is None:
        split = split_stratified(dataset, cfg.test_fraction, cfg.seed)
    order_rng = np.random.default_rng(cfg.seed)
    subject_ids = [s.subject_id for s in dataset.subjects]
    base_order = list(order_rng.permutation(len(subject_ids)))

    optimizer = RMSprop(model, cfg.rmsprop_decay, cfg.rmsprop_eps)
    report = TrainReport()
    best_state = model.state_dict()
    bad_epochs = 0

    for epoch in range(cfg.max_epochs):
        lr = step_lr(cfg.lr, epoch, cfg.step_epochs, cfg.gamma)
        order = (list(order_rng.permutation(len(subject_ids)))
                 if cfg.shuffle_subjects else base_order)
        epoch_losses = []
        for pos in order:
            s = dataset.subjects[pos]
            idx = split.train.get(s.subject_id)
            if idx is None or len(idx) == 0:
                continue
            trace = model.forward(s.features, train=True, update_running=True)
            step_loss = loss(trace, s.labels, cfg.lam, mask=idx)
            epoch_losses.append(step_loss)
            model.zero_grads()
            backward(model, trace, s.features, s.labels, cfg.lam, mask=idx)
            optimizer.step(model, lr)
        val_loss, val_acc = _masked_eval_loss(model, dataset, split.test, cfg.lam)
        report.epochs.append({"epoch": epoch, "lr": lr,
                              "train_loss": float(np.mean(epoch_losses)),
                              "val_loss": val_loss, "val_acc": val_acc})
        if val_loss < report.best_val_loss - cfg.min_delta:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_state = model.state_dict()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                report.stopping_reason = (
                    f"early stop: no improvement for {cfg.patience} epochs")
                break
    if not report.stopping_reason:
        report.stopping_reason = f"reached max_epochs={cfg.max_epochs}"
    model.load_state_dict(best_state)
    report.wall_time_s = time.perf_counter() - t0
    return model, report
