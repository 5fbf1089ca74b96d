"""
Hybrid encoder block: a local message-passing branch and a global attention
branch run in parallel on the same input and are fused with residuals.

    h̄   = BN_local(MPNN(H)) + BN_global(MHA(H)) + H
    out = FFN(h̄) + h̄

Either branch may be absent (ablations); an absent branch contributes
nothing and owns no parameters.
"""

from __future__ import annotations

import numpy as np

from engine.tensor import Tensor
from errors import ConfigError
from graphs.containers import Batch, Graph, as_batch
from layers.attention import MultiHeadAttention
from layers.ffn import FFN
from layers.module import BatchNorm, Module
from layers.mpnn import MPNNLayer


class EncoderBlock(Module):
    def __init__(self, d: int, rng: np.random.Generator, mpnn: MPNNLayer | None,
                 mha: MultiHeadAttention | None, ffn_ratio: int = 2):
        if mpnn is None and mha is None:
            raise ConfigError("an encoder block needs a local or a global branch")
        self.mpnn = mpnn
        self.bn_local = BatchNorm(d) if mpnn is not None else None
        self.mha = mha
        self.bn_global = BatchNorm(d) if mha is not None else None
        self.ffn = FFN(d, ffn_ratio * d, rng)

    def forward(self, g: Graph | Batch, H_prev: Tensor, E: Tensor | None = None):
        batch = as_batch(g)
        branches = []
        if self.mpnn is not None:
            local, E = self.mpnn(batch, H_prev, E=E)
            branches.append(self.bn_local(local))
        if self.mha is not None:
            branches.append(self.bn_global(self.mha(H_prev, batch.graph_index)))

        h_bar = branches[0]
        for part in branches[1:]:
            h_bar = h_bar + part
        h_bar = h_bar + H_prev
        return self.ffn(h_bar) + h_bar, E


def encoder_block(g: Graph | Batch, H_prev: Tensor, p: EncoderBlock,
                  E: Tensor | None = None) -> tuple[Tensor, Tensor | None]:
    return p(g, H_prev, E=E)
