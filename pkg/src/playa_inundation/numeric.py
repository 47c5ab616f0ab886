"""Dense float64 arithmetic, activations, stable BCE and a gradient checker.

Matrices are plain 2-D ``float64`` numpy arrays (C order).
"""

from typing import Callable, Mapping, Union

import numpy as np

ArrayOrParams = Union[np.ndarray, Mapping[str, np.ndarray]]


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    """Logistic function, overflow-free for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def tanh(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def bce_with_logits(logit, target):
    """Elementwise binary cross-entropy on logits.

    Uses ``max(x, 0) - x*y + log1p(exp(-|x|))`` so extreme logits stay finite.
    """
    x = np.asarray(logit, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    out = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def bce_mean(logits, targets, mask=None) -> float:
    """Mean BCE over the entries selected by ``mask`` (all entries if None)."""
    losses = bce_with_logits(logits, targets)
    if mask is None:
        mask = np.ones(np.shape(losses), dtype=bool)
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise ValueError("empty loss window")
    return float(np.sum(np.where(mask, losses, 0.0)) / n)


def relative_error(a, n) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_gradients(
    loss_fn: Callable[[ArrayOrParams], tuple],
    params: ArrayOrParams,
    epsilon: float = 1e-5,
) -> ArrayOrParams:
    """Central-difference gradients, same structure as ``params``.

    Every entry is perturbed in place by ``+-epsilon`` and restored.
    """
    single = isinstance(params, np.ndarray)
    named = {"_": params} if single else dict(params)
    out = {}
    for name in sorted(named):
        theta = named[name]
        flat = theta.reshape(-1)
        if not np.shares_memory(flat, theta):
            raise ValueError(f"parameter {name!r} must be contiguous to perturb in place")
        num = np.empty(flat.size)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            lp = float(loss_fn(params)[0])
            flat[k] = orig - epsilon
            lm = float(loss_fn(params)[0])
            flat[k] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError(f"non-finite loss perturbing {name}[{k}]")
            num[k] = (lp - lm) / (2.0 * epsilon)
        out[name] = num.reshape(theta.shape)
    return out["_"] if single else out


def finite_diff_check(
    loss_fn: Callable[[ArrayOrParams], tuple],
    params: ArrayOrParams,
    epsilon: float = 1e-5,
) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn(params)`` must return ``(loss, grads)`` where ``grads`` has the
    same structure as ``params``. Returns the maximum relative error
    ``|a - n| / max(|a|, |n|, 1e-8)`` over all entries.
    """
    _, grads = loss_fn(params)
    numeric = numeric_gradients(loss_fn, params, epsilon)
    if isinstance(params, np.ndarray):
        grads, numeric = {"_": grads}, {"_": numeric}
    worst = 0.0
    for name in sorted(numeric):
        err = relative_error(np.asarray(grads[name], dtype=np.float64), numeric[name])
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
