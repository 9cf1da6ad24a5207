"""Gradient-based feature importance over the trained sub-networks.

The score of a feature is the normalized total absolute gradient of the
summed per-window sub-network output with respect to that input feature,
accumulated over every evaluation window in eval-mode normalization.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigurationError
from .features import SubjectFeatures
from .model import PhysioFormer

CONTRIB_TARGET = "contribnet"
AFFECT_TARGET = "affectnet"


def _as_features(data) -> list[SubjectFeatures]:
    """Accept a Dataset, one SubjectFeatures, or a list of SubjectFeatures."""
    if isinstance(data, Dataset):
        return [s.features for s in data.subjects]
    if isinstance(data, SubjectFeatures):
        return [data]
    return list(data)


@dataclass
class ImportanceScores:
    component: str
    group: str
    names: list[str]
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.names),):
            raise ConfigurationError("importance names/scores length mismatch")


@dataclass
class FeatureSelection:
    indices: list[int]
    names: list[str]


def scalar_target(outputs: np.ndarray) -> float:
    """Summed per-window intermediate output used as the gradient target."""
    return float(np.asarray(outputs, dtype=float).sum())


def _input_names(model: PhysioFormer, component: str, group: str,
                 feats: SubjectFeatures) -> list[str]:
    attr = [] if model.config.no_attributes else list(feats.attributes.names)
    if component == CONTRIB_TARGET:
        names = list(attr)
        for g in model.config.groups:
            names.extend(feats.group(g).names)
        return names
    return attr + list(feats.group(group).names)


def importance(model: PhysioFormer, component: str, group: str,
               data) -> ImportanceScores:
    """Normalized absolute input gradients, accumulated across all subjects."""
    if component not in (CONTRIB_TARGET, AFFECT_TARGET):
        raise ConfigurationError(f"unknown component {component!r}")
    if group not in model.config.groups:
        raise ConfigurationError(f"unknown indicator group {group!r}")
    subjects = _as_features(data)
    total = None
    for feats in subjects:
        if component == CONTRIB_TARGET:
            grad = model.contrib_input_gradient(feats)[group]
        else:
            grad = model.affect_input_gradient(feats)[group]
        g = np.abs(grad).sum(axis=0)
        total = g if total is None else total + g
    denom = total.sum()
    names = _input_names(model, component, group, subjects[0])
    if denom == 0.0:
        warnings.warn(f"all-zero gradient field for {component}/{group}; "
                      "importance degenerates to uniform scores")
        return ImportanceScores(component, group, names,
                                np.full(total.size, 1.0 / total.size))
    return ImportanceScores(component, group, names, total / denom)


def select_top_k(scores: ImportanceScores, k: int = 10) -> FeatureSelection:
    """Top-k features by score; ties break toward the lower catalog index."""
    order = sorted(range(scores.scores.size), key=lambda i: (-scores.scores[i], i))
    chosen = order[:min(k, len(order))]
    return FeatureSelection(indices=chosen, names=[scores.names[i] for i in chosen])


def importance_matrix(model: PhysioFormer, data) -> tuple[list[str], list[str], np.ndarray]:
    """Features-by-groups heatmap data for the affect-level targets.

    Rows follow the fused catalog order filled per group; columns are groups.
    Entries for features that do not feed a group's network are zero.
    """
    feats = _as_features(data)[0]
    attr = [] if model.config.no_attributes else list(feats.attributes.names)
    all_names = list(attr)
    for g in model.config.groups:
        all_names.extend(feats.group(g).names)
    mat = np.zeros((len(all_names), len(model.config.groups)))
    for col, g in enumerate(model.config.groups):
        sc = importance(model, AFFECT_TARGET, g, data)
        for name, value in zip(sc.names, sc.scores):
            mat[all_names.index(name), col] = value
    return all_names, list(model.config.groups), mat
