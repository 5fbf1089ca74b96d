"""
Neural-network and graph kernels built on the tensor engine.

softmax_rows / segment_softmax
    Max-subtracted softmax over matrix rows, or over groups of a 1-D score
    vector (one group per receiving node).
gather_rows / segment_sum
    Row gather and its transpose (scatter-add).  Together they express every
    sparse aggregation the message-passing layers need.
scale_rows / diagonal / concat_cols
    Small shape utilities with their own backward rules.
batchnorm
    Batch normalisation over the rows of a matrix with running statistics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from engine.tensor import DTYPE, Tensor, custom_op
from errors import DimensionError, NumericError

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# ── Softmax ───────────────────────────────────────────────────────────────────

def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of an (m, n) matrix, n >= 1."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"softmax_rows expects an (m, n>=1) matrix, got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax_rows received non-finite input")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return custom_op(y, (x,), rule, "softmax_rows")


def segment_softmax(scores: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each group `segment[i]`."""
    if scores.ndim != 1 or scores.shape[0] != len(segment):
        raise DimensionError(
            f"segment_softmax: scores {scores.shape} vs {len(segment)} segment ids"
        )
    seg = np.asarray(segment, dtype=np.int64)
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, seg, scores.data)
    e = np.exp(scores.data - peak[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, e)
    y = e / denom[seg]

    def rule(g):
        t = g * y
        group = np.zeros(num_segments)
        np.add.at(group, seg, t)
        return (t - y * group[seg],)

    return custom_op(y, (scores,), rule, "segment_softmax")


# ── Gather / scatter ──────────────────────────────────────────────────────────

def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """out[i] = x[index[i]] (works for 1-D and 2-D tensors)."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DimensionError(f"gather_rows: index out of range for {x.shape[0]} rows")
    src_shape = x.shape

    def rule(g):
        out = np.zeros(src_shape, dtype=DTYPE)
        np.add.at(out, idx, g)
        return (out,)

    return custom_op(x.data[idx], (x,), rule, "gather_rows")


def segment_sum(x: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """out[s] = sum of x[i] over all i with segment[i] == s."""
    seg = np.asarray(segment, dtype=np.int64)
    if x.shape[0] != len(seg):
        raise DimensionError(f"segment_sum: {x.shape[0]} rows vs {len(seg)} segment ids")
    out = np.zeros((num_segments,) + x.shape[1:], dtype=DTYPE)
    np.add.at(out, seg, x.data)
    return custom_op(out, (x,), lambda g: (g[seg],), "segment_sum")


# ── Shape utilities ───────────────────────────────────────────────────────────

def scale_rows(x: Tensor, s: Tensor | np.ndarray) -> Tensor:
    """Multiply row i of the (m, n) matrix `x` by the scalar s[i]."""
    if not isinstance(s, Tensor):
        s = Tensor(s)
    if x.ndim != 2 or s.shape != (x.shape[0],):
        raise DimensionError(f"scale_rows: matrix {x.shape} vs row scales {s.shape}")
    xv, sv = x.data, s.data
    return custom_op(
        xv * sv[:, None], (x, s),
        lambda g: (g * sv[:, None], (g * xv).sum(axis=1)),
        "scale_rows",
    )


def diagonal(x: Tensor) -> Tensor:
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"diagonal expects a square matrix, got {x.shape}")
    n = x.shape[0]

    def rule(g):
        out = np.zeros((n, n), dtype=DTYPE)
        out[np.arange(n), np.arange(n)] = g
        return (out,)

    return custom_op(np.diagonal(x.data).copy(), (x,), rule, "diagonal")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat_cols needs at least one tensor")
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1 or any(p.ndim != 2 for p in parts):
        raise DimensionError(f"concat_cols: shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([p.shape[1] for p in parts])[:-1]
    return custom_op(
        np.concatenate([p.data for p in parts], axis=1), tuple(parts),
        lambda g: tuple(np.split(g, bounds, axis=1)),
        "concat_cols",
    )


# ── Batch normalisation ───────────────────────────────────────────────────────

@dataclass
class BatchNormState:
    """Running statistics of one batchnorm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    updates: int = field(default=0)

    @classmethod
    def fresh(cls, width: int) -> "BatchNormState":
        return cls(np.zeros(width), np.ones(width))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """
    y = (x - mu) / sqrt(var + eps) * gamma + beta, per column.

    Train mode uses the batch mean and (biased) variance and folds them into
    the running statistics with `state.momentum`; eval mode uses the running
    statistics.  A single-row train batch has variance 0 and is normalised by
    sqrt(eps).  A zero-row input passes through unchanged.
    """
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(
            f"batchnorm: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    m, n = x.shape
    if m == 0:
        return custom_op(
            x.data.copy(), (x, gamma, beta),
            lambda g: (g, np.zeros(n), np.zeros(n)),
            "batchnorm",
        )

    gv = gamma.data
    if training:
        mu = x.data.mean(axis=0)
        var = ((x.data - mu) ** 2).mean(axis=0)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.data - mu) * inv
        state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mu
        state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var
        state.updates += 1

        def rule(g):
            gx = g * gv
            dx = (inv / m) * (m * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0))
            return dx, (g * xhat).sum(axis=0), g.sum(axis=0)
    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean) * inv

        def rule(g):
            return g * gv * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    return custom_op(xhat * gv + beta.data, (x, gamma, beta), rule, "batchnorm")
