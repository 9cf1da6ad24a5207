import numpy as np
import pytest

from physioformer import features as ft
from physioformer.model import ModelConfig, PhysioFormer


def bypass_bn(bn):
    """Make eval-mode normalization the exact identity (inv_std == 1, mean 0)."""
    bn.running_mean[:] = 0.0
    bn.running_sq[:] = 1.0 - bn.eps
    bn.initialized = True


def toy_features(seed=0, xi=3, attr_dim=2, group_dims=(("EDA", 3), ("TEMP", 2)),
                 subject_id="S1"):
    rng = np.random.default_rng(seed)
    attrs = ft.AttributeVector([f"a{i}" for i in range(attr_dim)],
                               rng.standard_normal(attr_dim))
    groups = [ft.IndicatorFeatures(name, [f"{name.lower()}{i}" for i in range(dim)],
                                   rng.standard_normal((xi, dim)))
              for name, dim in group_dims]
    return ft.SubjectFeatures(subject_id, attrs, groups)


def toy_model(seed=3, xi=3, attr_dim=2, group_dims=(("EDA", 3), ("TEMP", 2)),
              hidden=4, **overrides):
    cfg = ModelConfig(groups=[g for g, _ in group_dims], attr_dim=attr_dim,
                      group_dims={g: d for g, d in group_dims},
                      hidden_contrib=hidden, hidden_affect=hidden, seed=seed,
                      **overrides)
    return PhysioFormer(cfg)


@pytest.fixture
def toy_pair():
    return toy_model(), toy_features()
