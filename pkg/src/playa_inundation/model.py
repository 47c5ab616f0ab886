"""Single-layer LSTM with categorical entity embeddings and a per-month logit head.

Parameters live in a plain ``dict[str, np.ndarray]``. Names, always iterated
in sorted order (serialization, optimizer state):

    b_hh (4H,)  b_ih (4H,)  emb_author (n_author, d)  emb_huc8 (n_huc8, d)
    emb_playa (n_playa, d)  head_b (1,)  head_w (1, H)  w_hh (4H, H)
    w_ih (4H, F + d_playa + d_huc8 + d_author)

Gate blocks along the 4H axis are packed [input, forget, cell-candidate, output].
The LSTM input at every month is ``concat(numeric features, emb_playa[id],
emb_huc8[huc], emb_author[author])``.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from . import kernels
from .numeric import bce_with_logits, sigmoid

ModelParameters = Dict[str, np.ndarray]

# order of the categorical columns in ``cats`` arrays and in the LSTM input
CATEGORICALS = ("playa", "huc8", "author")

TRAIN, VALIDATION, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "validation", "test")


def split_code(name) -> int:
    if isinstance(name, (int, np.integer)):
        if int(name) not in (TRAIN, VALIDATION, TEST):
            raise ValueError(f"unknown split code {name}")
        return int(name)
    try:
        return SPLIT_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}") from None


@dataclass
class ModelConfig:
    hidden_size: int = 128
    numeric_feature_count: int = 24
    embed_dims: Dict[str, int] = field(default_factory=lambda: {"playa": 16, "huc8": 8, "author": 4})
    vocab_sizes: Dict[str, int] = field(default_factory=lambda: {"playa": 1, "huc8": 1, "author": 1})

    def __post_init__(self):
        for key in CATEGORICALS:
            if self.vocab_sizes.get(key, 0) < 1:
                raise ValueError(f"vocab size for {key!r} must be >= 1, got {self.vocab_sizes.get(key)}")
            if self.embed_dims.get(key, 0) < 1:
                raise ValueError(f"embedding dim for {key!r} must be >= 1")
        if self.hidden_size < 1 or self.numeric_feature_count < 1:
            raise ValueError("hidden_size and numeric_feature_count must be >= 1")

    @property
    def input_width(self) -> int:
        return self.numeric_feature_count + sum(self.embed_dims[k] for k in CATEGORICALS)

    def to_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "numeric_feature_count": self.numeric_feature_count,
            "embed_dims": {k: self.embed_dims[k] for k in CATEGORICALS},
            "vocab_sizes": {k: self.vocab_sizes[k] for k in CATEGORICALS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            hidden_size=int(d["hidden_size"]),
            numeric_feature_count=int(d["numeric_feature_count"]),
            embed_dims={k: int(v) for k, v in d["embed_dims"].items()},
            vocab_sizes={k: int(v) for k, v in d["vocab_sizes"].items()},
        )


@dataclass
class SequenceSample:
    """One playa's complete monthly record.

    ``split`` holds codes TRAIN/VALIDATION/TEST per month; ``months`` is a
    (T, 2) array of (year, month).
    """

    playa_id: str
    playa_index: int
    huc8_index: int
    author_index: int
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    months: np.ndarray

    def __post_init__(self):
        T = self.features.shape[0]
        if not (len(self.labels) == len(self.split) == len(self.months) == T):
            raise ValueError(f"sample {self.playa_id}: arrays must share length T={T}")
        if T > 1:
            serial = self.months[:, 0] * 12 + self.months[:, 1]
            if not np.all(np.diff(serial) == 1):
                raise ValueError(f"sample {self.playa_id}: months must be contiguous and increasing")

    @property
    def cats(self) -> np.ndarray:
        return np.array([self.playa_index, self.huc8_index, self.author_index], dtype=np.int64)


def param_names(params: ModelParameters):
    return sorted(params)


def param_shapes(config: ModelConfig) -> Dict[str, tuple]:
    H = config.hidden_size
    return {
        "b_hh": (4 * H,),
        "b_ih": (4 * H,),
        "emb_author": (config.vocab_sizes["author"], config.embed_dims["author"]),
        "emb_huc8": (config.vocab_sizes["huc8"], config.embed_dims["huc8"]),
        "emb_playa": (config.vocab_sizes["playa"], config.embed_dims["playa"]),
        "head_b": (1,),
        "head_w": (1, H),
        "w_hh": (4 * H, H),
        "w_ih": (4 * H, config.input_width),
    }


def init_parameters(config: ModelConfig, seed: int) -> ModelParameters:
    """Deterministic initialization.

    Weight matrices ~ U(-1/sqrt(H), 1/sqrt(H)), embeddings ~ U(-0.1, 0.1),
    biases zero except the forget block of ``b_ih`` which starts at 1.
    Arrays are drawn in sorted-name order from one generator.
    """
    rng = np.random.default_rng(seed)
    H = config.hidden_size
    bound = 1.0 / np.sqrt(H)
    params = {}
    for name, shape in sorted(param_shapes(config).items()):
        if name.startswith("emb_"):
            params[name] = rng.uniform(-0.1, 0.1, size=shape)
        elif name in ("w_ih", "w_hh", "head_w"):
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    params["b_ih"][H : 2 * H] = 1.0
    return params


def embed_lookup(table: np.ndarray, index, name: str = "category") -> np.ndarray:
    idx = np.asarray(index)
    n = table.shape[0]
    if np.any(idx < 0) or np.any(idx >= n):
        bad = idx[(idx < 0) | (idx >= n)].reshape(-1)[0]
        raise IndexError(f"{name} index {int(bad)} out of range [0, {n})")
    return table[idx].copy()


def embed_backward(table_shape, index, upstream: np.ndarray) -> np.ndarray:
    """Scatter-add upstream row gradients into a zero table gradient."""
    grad = np.zeros(table_shape)
    np.add.at(grad, np.asarray(index), upstream)
    return grad


def lstm_cell_forward(x, h_prev, c_prev, params: ModelParameters):
    """One LSTM step for a single input vector; returns ``(h, c, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    w_ih, w_hh = params["w_ih"], params["w_hh"]
    if x.shape[-1] != w_ih.shape[1] or np.shape(h_prev)[-1] != w_hh.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} / hidden {np.shape(h_prev)[-1]} do not match weights")
    H = w_hh.shape[1]
    pre = w_ih @ x + w_hh @ h_prev + params["b_ih"] + params["b_hh"]
    i = sigmoid(pre[:H])
    f = sigmoid(pre[H : 2 * H])
    g = np.tanh(pre[2 * H : 3 * H])
    o = sigmoid(pre[3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = {"x": x, "h_prev": h_prev, "c_prev": c_prev, "i": i, "f": f, "g": g, "o": o, "c": c}
    return h, c, cache


@dataclass
class ForwardCache:
    inputs: np.ndarray  # (T, B, D)
    cats: np.ndarray  # (B, 3)
    gates: np.ndarray
    c: np.ndarray
    h: np.ndarray
    tanh_c: np.ndarray
    logits: np.ndarray  # (T, B)
    numeric_width: int


def build_inputs(features: np.ndarray, cats: np.ndarray, params: ModelParameters) -> np.ndarray:
    """Concatenate (T, B, F) numeric features with time-constant embeddings."""
    T, B, _ = features.shape
    parts = [features]
    for k, key in enumerate(CATEGORICALS):
        rows = embed_lookup(params[f"emb_{key}"], cats[:, k], key)
        parts.append(np.broadcast_to(rows, (T, B, rows.shape[1])))
    return np.ascontiguousarray(np.concatenate(parts, axis=2))


def forward_batch(features, cats, params: ModelParameters):
    """Logits (T, B) for a time-major batch of equal-length sequences."""
    features = np.asarray(features, dtype=np.float64)
    cats = np.asarray(cats, dtype=np.int64).reshape(-1, len(CATEGORICALS))
    numeric_width = params["w_ih"].shape[1] - sum(params[f"emb_{k}"].shape[1] for k in CATEGORICALS)
    if features.ndim != 3 or features.shape[2] != numeric_width:
        raise ValueError(f"feature width {features.shape[-1]} does not match model width {numeric_width}")
    if features.shape[1] != cats.shape[0]:
        raise ValueError("batch size of features and categorical indices differ")
    T, B, _ = features.shape
    X = build_inputs(features, cats, params)
    G = params["w_ih"].shape[0]
    xproj = (X.reshape(T * B, -1) @ params["w_ih"].T + (params["b_ih"] + params["b_hh"])).reshape(T, B, G)
    gates, c, h, tanh_c = kernels.lstm_forward(np.ascontiguousarray(xproj), np.ascontiguousarray(params["w_hh"]))
    logits = h[1:] @ params["head_w"][0] + params["head_b"][0]
    return logits, ForwardCache(X, cats, gates, c, h, tanh_c, logits, numeric_width)


def backward_batch(cache: ForwardCache, labels, loss_mask, params: ModelParameters):
    """Mean BCE over ``loss_mask`` and gradients for every parameter."""
    labels = np.asarray(labels, dtype=np.float64)
    loss_mask = np.asarray(loss_mask, dtype=bool)
    n = int(np.count_nonzero(loss_mask))
    if n == 0:
        raise ValueError("empty loss window")
    logits = cache.logits
    loss = float(np.sum(np.where(loss_mask, bce_with_logits(logits, labels), 0.0)) / n)

    dlogits = np.where(loss_mask, sigmoid(logits) - labels, 0.0) / n
    T, B, D = cache.inputs.shape
    H = params["w_hh"].shape[1]
    h_out = cache.h[1:]
    grads = {
        "head_w": np.einsum("tb,tbh->h", dlogits, h_out)[None, :],
        "head_b": np.array([dlogits.sum()]),
    }
    dh_out = np.ascontiguousarray(dlogits[:, :, None] * params["head_w"][0])
    dpre = kernels.lstm_backward(dh_out, cache.gates, cache.c, cache.tanh_c, np.ascontiguousarray(params["w_hh"]))

    dpre2 = dpre.reshape(T * B, 4 * H)
    grads["w_ih"] = dpre2.T @ cache.inputs.reshape(T * B, D)
    grads["w_hh"] = dpre2.T @ cache.h[:-1].reshape(T * B, H)
    grads["b_ih"] = dpre2.sum(axis=0)
    grads["b_hh"] = grads["b_ih"].copy()

    dX = (dpre2 @ params["w_ih"]).reshape(T, B, D)
    offset = cache.numeric_width
    for k, key in enumerate(CATEGORICALS):
        table = params[f"emb_{key}"]
        width = table.shape[1]
        per_row = dX[:, :, offset : offset + width].sum(axis=0)
        grads[f"emb_{key}"] = embed_backward(table.shape, cache.cats[:, k], per_row)
        offset += width
    return loss, grads


def stack_samples(samples: Sequence[SequenceSample], stop: Optional[int] = None):
    """Time-major arrays ``(features, cats, labels, split)`` for a batch."""
    if not samples:
        raise ValueError("empty batch")
    T = samples[0].features.shape[0]
    if any(s.features.shape[0] != T for s in samples):
        raise ValueError("all samples in a batch must share one timeline")
    sl = slice(0, stop)
    features = np.stack([s.features[sl] for s in samples], axis=1)
    cats = np.stack([s.cats for s in samples])
    labels = np.stack([s.labels[sl] for s in samples], axis=1).astype(np.float64)
    split = np.stack([s.split[sl] for s in samples], axis=1)
    return features, cats, labels, split


def sequence_forward(sample: SequenceSample, params: ModelParameters, config: Optional[ModelConfig] = None):
    """Per-month logits (T,) for one playa plus the cache for backward."""
    if config is not None and sample.features.shape[1] != config.numeric_feature_count:
        raise ValueError(
            f"sample {sample.playa_id} has {sample.features.shape[1]} features, config expects {config.numeric_feature_count}"
        )
    logits, cache = forward_batch(sample.features[:, None, :], sample.cats[None, :], params)
    return logits[:, 0], cache


def sequence_backward(cache: ForwardCache, labels, split_mask, loss_split, params: ModelParameters):
    """Loss over months tagged ``loss_split`` and the full BPTT gradients.

    ``labels`` and ``split_mask`` are (T,) for a single sample or (T, B)
    matching the cache.
    """
    labels = np.asarray(labels).reshape(cache.logits.shape)
    split_mask = np.asarray(split_mask).reshape(cache.logits.shape)
    return backward_batch(cache, labels, split_mask == split_code(loss_split), params)


def batch_loss(samples: Sequence[SequenceSample], params: ModelParameters, loss_split, stop: Optional[int] = None):
    """Loss and gradients for a list of samples, as used by training."""
    features, cats, labels, split = stack_samples(samples, stop)
    _, cache = forward_batch(features, cats, params)
    return backward_batch(cache, labels, split == split_code(loss_split), params)


def predict_logits(samples: Sequence[SequenceSample], params: ModelParameters, batch_size: int = 256) -> np.ndarray:
    """Logits (n_samples, T) over each sample's full timeline."""
    out = []
    for start in range(0, len(samples), batch_size):
        features, cats, _, _ = stack_samples(samples[start : start + batch_size])
        logits, _ = forward_batch(features, cats, params)
        out.append(logits.T)
    return np.concatenate(out, axis=0)


def predict_proba(samples: Sequence[SequenceSample], params: ModelParameters, batch_size: int = 256) -> np.ndarray:
    return sigmoid(predict_logits(samples, params, batch_size))
