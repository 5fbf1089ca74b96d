"""
Task losses as fused kernels, all mean-reduced.

  cross_entropy       logits (N, C), integer labels (N,)     log-sum-exp form
  bce_with_logits     logits and 0/1 targets of equal shape  max(z,0) − z·t + log(1 + e^{−|z|})

`loss(kind, logits, labels)` dispatches on the model task.
"""

from __future__ import annotations

import numpy as np

from engine.tensor import Tensor, custom_op
from errors import DimensionError, ValidationError


def cross_entropy(logits: Tensor, labels) -> Tensor:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != len(y):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs {len(y)} labels")
    n, c = logits.shape
    if n == 0:
        raise ValidationError("cross_entropy needs at least one labelled example")
    bad = y[(y < 0) | (y >= c)]
    if bad.size:
        raise ValidationError(f"label {int(bad[0])} out of range for {c} classes")

    z = logits.data
    peak = z.max(axis=1, keepdims=True)
    e = np.exp(z - peak)
    total = e.sum(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(total[:, 0])
    value = np.mean(lse - z[np.arange(n), y])

    grad = e / total
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return custom_op(np.asarray(value), (logits,), lambda g: (g * grad,), "cross_entropy")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise DimensionError(f"bce_with_logits: logits {logits.shape} vs targets {t.shape}")
    if t.size == 0:
        raise ValidationError("bce_with_logits needs at least one target")
    if np.any((t != 0.0) & (t != 1.0)):
        raise ValidationError("binary targets must be 0 or 1")

    z = logits.data
    value = np.mean(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z))))
    e = np.exp(-np.abs(z))
    sig = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    grad = (sig - t) / t.size
    return custom_op(np.asarray(value), (logits,), lambda g: (g * grad,), "bce_with_logits")


def loss(kind: str, logits: Tensor, labels) -> Tensor:
    if kind in ("graph-class", "node-class"):
        return cross_entropy(logits, labels)
    if kind == "multi-label":
        return bce_with_logits(logits, labels)
    if kind == "link-pred":
        return bce_with_logits(logits, np.asarray(labels).reshape(-1))
    raise ValidationError(f"no loss defined for task {kind!r}")
