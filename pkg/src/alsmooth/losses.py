"""Softmax, cross-entropy against arbitrary target vectors, and its gradient.

All functions accept a single logit vector of length K or a batch shaped
(N, K); the class axis is always the last one.  Log-probabilities are
computed with a max shift followed by log-sum-exp so confident predictions
never underflow inside a log.
"""

from __future__ import annotations

import numpy as np


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise ValueError(f"{name} must be a length-K vector or an (N, K) batch, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def softmax(logits) -> np.ndarray:
    """Probability vector(s) from unnormalized logits."""
    z = _as_float_array(logits, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = _as_float_array(logits, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, target):
    """-sum_k target[k] * log softmax(logits)[k].

    With a one-hot target this is the negative log-probability of the true
    class; with any soft target it is the general form every labeling policy
    trains against.  Returns a scalar for a single sample, an (N,) array for
    a batch.
    """
    z = _as_float_array(logits, "logits")
    t = _as_float_array(target, "target")
    if z.shape != t.shape:
        raise ValueError(f"logits shape {z.shape} does not match target shape {t.shape}")
    loss = -(t * log_softmax(z)).sum(axis=-1)
    return float(loss) if loss.ndim == 0 else loss


def cross_entropy_grad(logits, target) -> np.ndarray:
    """Gradient of :func:`cross_entropy` in the logits: softmax(z) - target."""
    z = _as_float_array(logits, "logits")
    t = _as_float_array(target, "target")
    if z.shape != t.shape:
        raise ValueError(f"logits shape {z.shape} does not match target shape {t.shape}")
    return softmax(z) - t
