"""Forward computation of the affective-state network and its exact gradients.

Per indicator group the model scores each window's contribution from the fused
feature matrix, weights the group's features by that score through a causal
upper-triangular (cumulative) encoding, regresses a per-window affect level,
then classifies the per-group levels plus a learnable baseline state into the
three affective classes. All layers are plain numpy with hand-written
backward passes so gradients are exact and checkable by finite differences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, TrainingError
from .features import SubjectFeatures


class Param:
    """A learnable tensor and its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.w = Param(_uniform_init(rng, (out_dim, in_dim), in_dim))
        self.b = Param(_uniform_init(rng, (out_dim,), in_dim))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        return x @ self.w.value.T + self.b.value, {"x": x}

    def backward(self, cache: dict, dout: np.ndarray) -> np.ndarray:
        self.w.grad += dout.T @ cache["x"]
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value

    def params(self, prefix: str):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


class BatchNorm:
    """Per-feature normalization with running statistics.

    Train mode normalizes by the current batch (one subject's windows,
    population variance); a single-window batch, or any column whose batch
    variance is degenerate (window-constant attributes), falls back to the
    running statistics so per-subject constants stay informative. Running
    statistics track first and second moments across batches, so the eval
    variance is the total variance over everything seen, not the mean of
    within-batch variances.
    """

    DEGENERATE_REL_VAR = 1e-10

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Param(np.ones(dim))
        self.beta = Param(np.zeros(dim))
        self.running_mean = np.zeros(dim)
        self.running_sq = np.ones(dim)   # running E[x^2]; init keeps var = 1
        self.momentum = momentum
        self.eps = eps
        self.initialized = False         # first batch seeds the running stats

    @property
    def running_var(self) -> np.ndarray:
        return np.maximum(self.running_sq - self.running_mean ** 2, 0.0)

    def forward(self, x: np.ndarray, train: bool,
                update_running: bool = False) -> tuple[np.ndarray, dict]:
        use_batch = np.zeros(x.shape[1], dtype=bool)
        if train:
            batch_mean = x.mean(axis=0)
            batch_var = x.var(axis=0)
            if update_running:
                m = 1.0 if not self.initialized else self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * batch_mean
                self.running_sq = (1 - m) * self.running_sq + m * (batch_var + batch_mean ** 2)
                self.initialized = True
            if x.shape[0] > 1:
                use_batch = batch_var > self.DEGENERATE_REL_VAR * (1.0 + batch_mean ** 2)
        if train and np.any(use_batch):
            mean = np.where(use_batch, batch_mean, self.running_mean)
            var = np.where(use_batch, batch_var, self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        out = self.gamma.value * xhat + self.beta.value
        return out, {"xhat": xhat, "inv_std": inv_std, "use_batch": use_batch}

    def backward(self, cache: dict, dout: np.ndarray) -> np.ndarray:
        xhat, inv_std = cache["xhat"], cache["inv_std"]
        use_batch = cache["use_batch"]
        self.gamma.grad += (dout * xhat).sum(axis=0)
        self.beta.grad += dout.sum(axis=0)
        dxhat = dout * self.gamma.value
        dx_running = dxhat * inv_std
        if not np.any(use_batch):
            return dx_running
        n = dout.shape[0]
        dx_batch = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                    - xhat * (dxhat * xhat).sum(axis=0))
        return np.where(use_batch, dx_batch, dx_running)

    def params(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def state(self) -> dict:
        return {"running_mean": self.running_mean.tolist(),
                "running_sq": self.running_sq.tolist(),
                "initialized": self.initialized}

    def load_state(self, state: dict) -> None:
        self.running_mean = np.asarray(state["running_mean"], dtype=float)
        self.running_sq = np.asarray(state["running_sq"], dtype=float)
        self.initialized = bool(state.get("initialized", True))


class ContribNet:
    """Window contribution score: BN -> linear -> ReLU -> linear -> scalar.

    The output bias starts at 1 so scores begin at the regularizer's neutral
    target and the downstream encoding starts as a plain causal cumulative
    sum rather than a sign-flipping random walk.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int,
                 momentum: float, eps: float):
        self.bn = BatchNorm(in_dim, momentum, eps)
        self.fc1 = Linear(rng, in_dim, hidden)
        self.fc2 = Linear(rng, hidden, 1)
        self.fc2.b.value[:] = 1.0

    def forward(self, x: np.ndarray, train: bool,
                update_running: bool = False) -> tuple[np.ndarray, dict]:
        normed, bn_cache = self.bn.forward(x, train, update_running)
        pre, fc1_cache = self.fc1.forward(normed)
        hidden, mask = relu_forward(pre)
        out, fc2_cache = self.fc2.forward(hidden)
        cache = {"bn": bn_cache, "fc1": fc1_cache, "mask": mask, "fc2": fc2_cache}
        return out[:, 0], cache

    def backward(self, cache: dict, dout: np.ndarray) -> np.ndarray:
        d = self.fc2.backward(cache["fc2"], dout[:, None])
        d = self.fc1.backward(cache["fc1"], d * cache["mask"])
        return self.bn.backward(cache["bn"], d)

    def params(self, prefix: str):
        yield from self.bn.params(f"{prefix}.bn")
        yield from self.fc1.params(f"{prefix}.fc1")
        yield from self.fc2.params(f"{prefix}.fc2")


class AffectNet:
    """Window affect level: BN -> (linear -> ReLU) x 2 -> linear -> scalar."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int,
                 momentum: float, eps: float, depth: int = 3):
        if depth < 2:
            raise ConfigurationError("affect net needs at least two layers")
        self.bn = BatchNorm(in_dim, momentum, eps)
        dims = [in_dim] + [hidden] * (depth - 1) + [1]
        self.layers = [Linear(rng, dims[i], dims[i + 1]) for i in range(depth)]

    def forward(self, x: np.ndarray, train: bool,
                update_running: bool = False) -> tuple[np.ndarray, dict]:
        normed, bn_cache = self.bn.forward(x, train, update_running)
        caches, masks = [], []
        h = normed
        for layer in self.layers[:-1]:
            pre, c = layer.forward(h)
            h, mask = relu_forward(pre)
            caches.append(c)
            masks.append(mask)
        out, last_cache = self.layers[-1].forward(h)
        cache = {"bn": bn_cache, "layers": caches, "masks": masks, "last": last_cache}
        return out[:, 0], cache

    def backward(self, cache: dict, dout: np.ndarray) -> np.ndarray:
        d = self.layers[-1].backward(cache["last"], dout[:, None])
        for layer, c, mask in zip(reversed(self.layers[:-1]),
                                  reversed(cache["layers"]),
                                  reversed(cache["masks"])):
            d = layer.backward(c, d * mask)
        return self.bn.backward(cache["bn"], d)

    def params(self, prefix: str):
        yield from self.bn.params(f"{prefix}.bn")
        for i, layer in enumerate(self.layers):
            yield from layer.params(f"{prefix}.fc{i + 1}")


class AffectAnalyser:
    """Two stacked affine maps from group levels to three class logits."""

    def __init__(self, rng: np.random.Generator, in_dim: int, n_classes: int = 3):
        self.g1 = Linear(rng, in_dim, in_dim)
        self.g2 = Linear(rng, in_dim, n_classes)

    def forward(self, phi: np.ndarray) -> tuple[np.ndarray, dict]:
        h, c1 = self.g1.forward(phi)
        out, c2 = self.g2.forward(h)
        return out, {"c1": c1, "c2": c2}

    def backward(self, cache: dict, dout: np.ndarray) -> np.ndarray:
        d = self.g2.backward(cache["c2"], dout)
        return self.g1.backward(cache["c1"], d)

    def params(self, prefix: str):
        yield from self.g1.params(f"{prefix}.g1")
        yield from self.g2.params(f"{prefix}.g2")


def triu_encode(b: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Causal contribution-weighted encoding: out[q, f] = sum_{t<=q} alpha[t] * b[t, f].

    Equivalent to (B^T . Triu(alpha . 1_{1 x xi}))^T with the upper-triangular
    mask keeping entry [t, q] = alpha_t for t <= q.
    """
    b = np.asarray(b, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if b.ndim != 2 or alpha.shape != (b.shape[0],):
        raise ConfigurationError(
            f"window counts disagree: features {b.shape}, scores {alpha.shape}")
    return np.cumsum(alpha[:, None] * b, axis=0)


def _triu_backward(dbeta: np.ndarray, b: np.ndarray, alpha: np.ndarray):
    rev = np.cumsum(dbeta[::-1], axis=0)[::-1]
    dalpha = (rev * b).sum(axis=1)
    db = rev * alpha[:, None]
    return dalpha, db


@dataclass
class ModelConfig:
    groups: list[str]
    attr_dim: int
    group_dims: dict[str, int]
    hidden_contrib: int = 100
    hidden_affect: int = 100
    affect_depth: int = 3
    no_embedding: bool = False
    no_attributes: bool = False
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0

    @property
    def k(self) -> int:
        return 0 if self.no_attributes else self.attr_dim

    @property
    def pf_dim(self) -> int:
        return self.k + sum(self.group_dims[g] for g in self.groups)

    @classmethod
    def from_dataset(cls, dataset: Dataset, **overrides) -> "ModelConfig":
        feats = dataset.subjects[0].features
        return cls(groups=list(feats.group_names),
                   attr_dim=feats.attribute_dim,
                   group_dims={g.indicator: len(g.names) for g in feats.groups},
                   **overrides)

    def to_dict(self) -> dict:
        return {"groups": list(self.groups), "attr_dim": self.attr_dim,
                "group_dims": dict(self.group_dims),
                "hidden_contrib": self.hidden_contrib,
                "hidden_affect": self.hidden_affect,
                "affect_depth": self.affect_depth,
                "no_embedding": self.no_embedding,
                "no_attributes": self.no_attributes,
                "bn_momentum": self.bn_momentum, "bn_eps": self.bn_eps,
                "seed": self.seed}


@dataclass
class ForwardTrace:
    """Per-window intermediates of one subject's forward pass."""

    subject_id: str
    pf: np.ndarray                      # (xi, k+m)
    alpha: dict[str, np.ndarray]        # group -> (xi,)
    beta: dict[str, np.ndarray]         # group -> (xi, m_j)
    gamma: dict[str, np.ndarray]        # group -> (xi, k+m_j)
    theta: np.ndarray                   # (xi, M), column order = groups
    phi: np.ndarray                     # (xi, M), theta + baseline state
    logits: np.ndarray                  # (xi, 3)
    caches: dict = field(repr=False, default_factory=dict)

    @property
    def window_count(self) -> int:
        return self.logits.shape[0]

    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)


class PhysioFormer:
    """Full model: per-group contribution/affect networks plus the classifier."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        k, mom, eps = config.k, config.bn_momentum, config.bn_eps
        self.contrib = {g: ContribNet(rng, config.pf_dim, config.hidden_contrib, mom, eps)
                        for g in config.groups}
        self.affect = {g: AffectNet(rng, k + config.group_dims[g],
                                    config.hidden_affect, mom, eps,
                                    config.affect_depth)
                       for g in config.groups}
        self.analyser = AffectAnalyser(rng, len(config.groups))
        self.u = Param(np.zeros(len(config.groups)))

    # -- parameter walking ---------------------------------------------------

    def param_items(self) -> list[tuple[str, Param]]:
        items: list[tuple[str, Param]] = []
        for g in self.config.groups:
            items.extend(self.contrib[g].params(f"contrib.{g}"))
        for g in self.config.groups:
            items.extend(self.affect[g].params(f"affect.{g}"))
        items.extend(self.analyser.params("analyser"))
        items.append(("u", self.u))
        return items

    def zero_grads(self) -> None:
        for _, p in self.param_items():
            p.grad[:] = 0.0

    # -- forward / backward ---------------------------------------------------

    def _inputs(self, feats: SubjectFeatures) -> tuple[np.ndarray, np.ndarray, dict]:
        xi = feats.window_count
        if self.config.no_attributes:
            attr = np.zeros((xi, 0))
        else:
            attr = np.tile(feats.attributes.values, (xi, 1))
        b = {g: feats.group(g).values for g in self.config.groups}
        pf = np.hstack([attr] + [b[g] for g in self.config.groups])
        return pf, attr, b

    def forward(self, feats: SubjectFeatures, train: bool = False,
                update_running: bool = False) -> ForwardTrace:
        if list(feats.group_names) != list(self.config.groups):
            raise ConfigurationError(
                f"indicator groups {feats.group_names} do not match model "
                f"{self.config.groups}")
        pf, attr, b = self._inputs(feats)
        xi = pf.shape[0]
        alpha, beta, gamma, theta_cols = {}, {}, {}, []
        caches = {"contrib": {}, "affect": {}}
        for g in self.config.groups:
            if self.config.no_embedding:
                alpha[g] = np.ones(xi)
                beta[g] = b[g]
            else:
                alpha[g], caches["contrib"][g] = self.contrib[g].forward(
                    pf, train, update_running)
                beta[g] = triu_encode(b[g], alpha[g])
            gamma[g] = np.hstack([attr, beta[g]])
            th, caches["affect"][g] = self.affect[g].forward(
                gamma[g], train, update_running)
            theta_cols.append(th)
        theta = np.stack(theta_cols, axis=1)
        phi = theta + self.u.value
        logits, caches["analyser"] = self.analyser.forward(phi)
        if not np.all(np.isfinite(logits)):
            raise TrainingError(f"non-finite logits for subject {feats.subject_id}")
        return ForwardTrace(feats.subject_id, pf, alpha, beta, gamma, theta,
                            phi, logits, caches)

    def backward(self, trace: ForwardTrace, feats: SubjectFeatures,
                 dlogits: np.ndarray, dalpha_extra: dict[str, np.ndarray] | None = None
                 ) -> None:
        """Accumulate parameter gradients given d(loss)/d(logits).

        ``dalpha_extra`` carries the regularizer's direct gradient on the
        contribution scores.
        """
        _, _, b = self._inputs(feats)
        k = self.config.k
        dphi = self.analyser.backward(trace.caches["analyser"], dlogits)
        self.u.grad += dphi.sum(axis=0)
        for j, g in enumerate(self.config.groups):
            dgamma = self.affect[g].backward(trace.caches["affect"][g], dphi[:, j])
            if self.config.no_embedding:
                continue
            dbeta = dgamma[:, k:]
            dalpha, _ = _triu_backward(dbeta, b[g], trace.alpha[g])
            if dalpha_extra is not None and g in dalpha_extra:
                dalpha = dalpha + dalpha_extra[g]
            self.contrib[g].backward(trace.caches["contrib"][g], dalpha)

    # -- input gradients (importance scoring) ---------------------------------

    def contrib_input_gradient(self, feats: SubjectFeatures) -> dict[str, np.ndarray]:
        """d(sum_q alpha_q)/d(PF) per group, eval-mode normalization."""
        out = {}
        pf, _, _ = self._inputs(feats)
        for g in self.config.groups:
            alpha, cache = self.contrib[g].forward(pf, train=False)
            grad = self.contrib[g].backward(cache, np.ones_like(alpha))
            out[g] = grad
        self.zero_grads()
        return out

    def affect_input_gradient(self, feats: SubjectFeatures) -> dict[str, np.ndarray]:
        """d(sum_q theta_q)/d(gamma_j) per group, eval-mode normalization."""
        out = {}
        trace = self.forward(feats, train=False)
        for g in self.config.groups:
            theta, cache = self.affect[g].forward(trace.gamma[g], train=False)
            out[g] = self.affect[g].backward(cache, np.ones_like(theta))
        self.zero_grads()
        return out

    # -- checkpointing ---------------------------------------------------------

    def state_dict(self) -> dict:
        params = {name: p.value.tolist() for name, p in self.param_items()}
        bn_states = {}
        for g in self.config.groups:
            bn_states[f"contrib.{g}"] = self.contrib[g].bn.state()
            bn_states[f"affect.{g}"] = self.affect[g].bn.state()
        return {"params": params, "bn": bn_states}

    def load_state_dict(self, state: dict) -> None:
        params = state["params"]
        for name, p in self.param_items():
            value = np.asarray(params[name], dtype=float)
            if value.shape != p.value.shape:
                raise ConfigurationError(
                    f"checkpoint tensor {name} has shape {value.shape}, "
                    f"expected {p.value.shape}")
            p.value = value
            p.grad = np.zeros_like(value)
        for g in self.config.groups:
            self.contrib[g].bn.load_state(state["bn"][f"contrib.{g}"])
            self.affect[g].bn.load_state(state["bn"][f"affect.{g}"])

    def copy(self) -> "PhysioFormer":
        clone = PhysioFormer(self.config)
        clone.load_state_dict(self.state_dict())
        return clone


CHECKPOINT_VERSION = 1


def save_checkpoint(model: PhysioFormer, path, catalog_hash: str) -> None:
    payload = {"version": CHECKPOINT_VERSION,
               "catalog_hash": catalog_hash,
               "config": model.config.to_dict(),
               "state": model.state_dict()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, expected_catalog_hash: str | None = None) -> PhysioFormer:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {payload.get('version')}")
    if (expected_catalog_hash is not None
            and payload["catalog_hash"] != expected_catalog_hash):
        raise ConfigurationError(
            "checkpoint was trained against a different feature catalog "
            f"({payload['catalog_hash'][:12]} != {expected_catalog_hash[:12]})")
    cfg = ModelConfig(**payload["config"])
    model = PhysioFormer(cfg)
    model.load_state_dict(payload["state"])
    return model
