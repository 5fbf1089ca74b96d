"""
Position-wise feed-forward network and the differential encoder built on it.

    FFN(x)         = fc2(ReLU(fc1(x)))        applied to every row
    diff_enc(delta) = FFN(delta)

The differential encoder receives (aggregate of the other nodes' messages)
minus (the node's own message) and its output is added to the plain
aggregate.  With every parameter at zero it returns exactly zero, so a layer
with a zeroed encoder reproduces the layer without one.
"""

from __future__ import annotations

import numpy as np

from engine.tensor import Tensor, parameter, relu, tag
from errors import DimensionError
from layers.module import Module, glorot

# op name under which every differential-encoder output is recorded
DIFF_ENC_OP = "diff_enc"


class FFN(Module):
    """Two fully connected layers with a ReLU in between (FFNParams)."""

    def __init__(self, d: int, d_hidden: int, rng: np.random.Generator):
        self.W1 = parameter(glorot(rng, d, d_hidden))
        self.b1 = parameter(np.zeros(d_hidden))
        self.W2 = parameter(glorot(rng, d_hidden, d))
        self.b2 = parameter(np.zeros(d))

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        return ffn_forward(x, self)

    def zero_(self) -> "FFN":
        for p in (self.W1, self.b1, self.W2, self.b2):
            p.data[...] = 0.0
        return self


def ffn_forward(x: Tensor, p: FFN) -> Tensor:
    if x.ndim != 2 or x.shape[1] != p.W1.shape[0]:
        raise DimensionError(f"FFN: input {x.shape} vs W1 {p.W1.shape}")
    return relu(x @ p.W1 + p.b1) @ p.W2 + p.b2


def diff_enc(delta: Tensor, p: FFN) -> Tensor:
    """Encode the differential representation `delta` row-wise."""
    return tag(ffn_forward(delta, p), DIFF_ENC_OP)
