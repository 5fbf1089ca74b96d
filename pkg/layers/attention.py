"""
Global multi-head self-attention with per-head differential encoding.

For each head i, with Q = H W_Q, K = H W_K, V = H W_V (all n × d_h):

    A     = softmax_rows(Q Kᵀ / sqrt(d_h) + mask)
    O     = A V
    delta = O − 2 · diag(A) ⊙ V          row u: O[u] − 2 A[u,u] V[u]
    head  = O + [use_diff] diff_enc_i(delta)

and the block output is concat(head_1 … head_N) W_MHA.

`delta` is "everything the node attends to except itself, minus itself":
O[u] − A[u,u]V[u] is the contribution of the other nodes, and a second
A[u,u]V[u] is subtracted as the node's own message.

Nodes of different graphs in one batch never see each other: the mask adds
−1e30 to every cross-graph score, which underflows to an exact zero weight.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from engine.functional import concat_cols, diagonal, scale_rows, softmax_rows
from engine.tensor import Tensor, constant, parameter, scale, transpose
from errors import ConfigError, DimensionError
from layers.ffn import FFN, diff_enc
from layers.module import Module, glorot

logger = logging.getLogger(__name__)

MASK_VALUE = -1e30


def segment_mask(segment: np.ndarray) -> np.ndarray:
    """Additive (n, n) mask: 0 within a graph, MASK_VALUE across graphs."""
    seg = np.asarray(segment, dtype=np.int64)
    return np.where(seg[:, None] == seg[None, :], 0.0, MASK_VALUE)


class AttentionHead(Module):
    def __init__(self, d: int, d_head: int, rng: np.random.Generator, use_diff: bool):
        self.W_Q = parameter(glorot(rng, d, d_head))
        self.W_K = parameter(glorot(rng, d, d_head))
        self.W_V = parameter(glorot(rng, d, d_head))
        self.diff_enc = FFN(d_head, d_head, rng) if use_diff else None

    @property
    def width(self) -> int:
        return self.W_Q.shape[1]

    def weights(self, H: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """Attention matrix A and values V for this head."""
        Q = H @ self.W_Q
        K = H @ self.W_K
        V = H @ self.W_V
        scores = scale(Q @ transpose(K), 1.0 / math.sqrt(self.width))
        return softmax_rows(scores + constant(mask)), V

    def forward(self, H: Tensor, mask: np.ndarray, use_diff: bool) -> Tensor:
        A, V = self.weights(H, mask)
        O = A @ V
        if not use_diff:
            return O
        delta = O - scale(scale_rows(V, diagonal(A)), 2.0)
        return O + diff_enc(delta, self.diff_enc)


class MultiHeadAttention(Module):
    """MHAParams: N_h heads of width d_h = d / N_h plus the output map W_MHA."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, use_diff: bool = False):
        if heads < 1 or d % heads:
            raise ConfigError(f"hidden width {d} is not divisible by {heads} attention heads")
        self.width = d
        self.heads = [AttentionHead(d, d // heads, rng, use_diff) for _ in range(heads)]
        self.W_MHA = parameter(glorot(rng, d, d))

    @property
    def has_diff(self) -> bool:
        return all(h.diff_enc is not None for h in self.heads)

    def forward(self, H: Tensor, segment: np.ndarray, use_diff: bool | None = None) -> Tensor:
        if use_diff is None:
            use_diff = self.has_diff
        elif use_diff and not self.has_diff:
            raise ConfigError("attention was built without differential encoders")
        if H.ndim != 2 or H.shape[1] != self.width:
            raise DimensionError(f"attention expects (n, {self.width}) input, got {H.shape}")
        if len(segment) != H.shape[0]:
            raise DimensionError(f"segment has {len(segment)} entries for {H.shape[0]} nodes")
        mask = segment_mask(segment)
        outs = [head(H, mask, use_diff) for head in self.heads]
        joined = outs[0] if len(outs) == 1 else concat_cols(outs)
        return joined @ self.W_MHA


def mha_diff_forward(H: Tensor, p: MultiHeadAttention, segment: np.ndarray, use_diff: bool) -> Tensor:
    return p(H, segment, use_diff=use_diff)
