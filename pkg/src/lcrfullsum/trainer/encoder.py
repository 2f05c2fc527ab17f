"""Windowed feed-forward encoder with log-softmax heads.

Output frame ``i`` sees input frames ``stride*i - context .. stride*i + context``
(edge frames replicated), giving ``ceil(T0 / stride)`` outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

HEAD_NAMES = ("center", "left", "right", "joint")


def head_sizes(num_labels: int) -> dict[str, int]:
    n = num_labels
    return {"center": n, "left": n + 1, "right": n + 1, "joint": (n + 1) * n}


@dataclass(frozen=True)
class EncoderConfig:
    feat_dim: int
    num_labels: int
    heads: tuple[str, ...] = ("center",)
    context: int = 4
    stride: int = 4
    hidden: tuple[int, ...] = (512, 512)

    def __post_init__(self):
        unknown = set(self.heads) - set(HEAD_NAMES)
        if unknown:
            raise ValueError(f"unknown heads {sorted(unknown)}")

    @property
    def input_dim(self) -> int:
        return (2 * self.context + 1) * self.feat_dim


@dataclass
class EncoderParams:
    config: EncoderConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


def init_params(cfg: EncoderConfig, rng: np.random.Generator, zero: bool = False,
                feat_mean: np.ndarray | None = None, feat_std: np.ndarray | None = None) -> EncoderParams:
    arrays: dict[str, np.ndarray] = {
        "feat_mean": np.zeros(cfg.feat_dim) if feat_mean is None else np.asarray(feat_mean, float),
        "feat_std": np.ones(cfg.feat_dim) if feat_std is None else np.asarray(feat_std, float),
    }
    dims = [cfg.input_dim, *cfg.hidden]
    for i in range(len(cfg.hidden)):
        scale = 0.0 if zero else np.sqrt(1.0 / dims[i])
        arrays[f"W{i}"] = scale * rng.normal(size=(dims[i], dims[i + 1]))
        arrays[f"b{i}"] = np.zeros(dims[i + 1])
    sizes = head_sizes(cfg.num_labels)
    for h in cfg.heads:
        scale = 0.0 if zero else np.sqrt(1.0 / dims[-1])
        arrays[f"head_{h}_W"] = scale * rng.normal(size=(dims[-1], sizes[h]))
        arrays[f"head_{h}_b"] = np.zeros(sizes[h])
    return EncoderParams(cfg, arrays)


def num_output_frames(T0: int, stride: int = 4) -> int:
    return -(-T0 // stride)


def windows(features: np.ndarray, context: int, stride: int) -> np.ndarray:
    T0 = features.shape[0]
    centers = np.arange(0, T0, stride)
    idx = np.clip(centers[:, None] + np.arange(-context, context + 1)[None, :], 0, T0 - 1)
    return features[idx].reshape(len(centers), -1)


@dataclass
class _Cache:
    x: np.ndarray
    acts: list[np.ndarray]
    logp: dict[str, np.ndarray]


def _forward(p: EncoderParams, x: np.ndarray, heads) -> _Cache:
    acts = [x]
    h = x
    for i in range(len(p.config.hidden)):
        h = np.tanh(h @ p.arrays[f"W{i}"] + p.arrays[f"b{i}"])
        acts.append(h)
    logp = {name: log_softmax(h @ p.arrays[f"head_{name}_W"] + p.arrays[f"head_{name}_b"], axis=1)
            for name in heads}
    return _Cache(x, acts, logp)


def prepare_inputs(p: EncoderParams, features: np.ndarray) -> np.ndarray:
    cfg = p.config
    if features.ndim != 2 or features.shape[1] != cfg.feat_dim:
        raise ValueError(f"features must be T0 x {cfg.feat_dim}, got {features.shape}")
    norm = (features - p.arrays["feat_mean"]) / p.arrays["feat_std"]
    return windows(norm, cfg.context, cfg.stride)


def encode(p: EncoderParams, features: np.ndarray, heads=None) -> dict[str, np.ndarray]:
    """Per-head log-posterior streams for one utterance."""
    heads = p.config.heads if heads is None else heads
    missing = set(heads) - set(p.config.heads)
    if missing:
        raise ValueError(f"encoder has no heads {sorted(missing)}")
    return _forward(p, prepare_inputs(p, features), heads).logp


def encode_batch(p: EncoderParams, batch: list[np.ndarray], heads=None):
    """Encode several utterances in one pass; returns (per-utt streams, cache, lengths)."""
    heads = p.config.heads if heads is None else heads
    xs = [prepare_inputs(p, f) for f in batch]
    lengths = [len(x) for x in xs]
    cache = _forward(p, np.concatenate(xs, axis=0), heads)
    bounds = np.cumsum([0] + lengths)
    per_utt = [{h: cache.logp[h][bounds[k]:bounds[k + 1]] for h in heads} for k in range(len(xs))]
    return per_utt, cache, lengths


def backward(p: EncoderParams, cache: _Cache, grad_logp: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/d(log-softmax outputs) per head."""
    grads = {}
    h = cache.acts[-1]
    dh = np.zeros_like(h)
    for name, g in grad_logp.items():
        probs = np.exp(cache.logp[name])
        dz = g - probs * g.sum(axis=1, keepdims=True)
        grads[f"head_{name}_W"] = h.T @ dz
        grads[f"head_{name}_b"] = dz.sum(axis=0)
        dh += dz @ p.arrays[f"head_{name}_W"].T
    for i in range(len(p.config.hidden) - 1, -1, -1):
        out = cache.acts[i + 1]
        dpre = dh * (1.0 - out * out)
        grads[f"W{i}"] = cache.acts[i].T @ dpre
        grads[f"b{i}"] = dpre.sum(axis=0)
        if i > 0:
            dh = dpre @ p.arrays[f"W{i}"].T
    return grads
