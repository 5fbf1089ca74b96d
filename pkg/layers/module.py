"""
Minimal module system: parameter ownership, stable names, train/eval mode.

A `Module` discovers its parameters, child modules and batchnorm state by
walking its attributes in assignment order, so names are stable across runs:

    blocks.0.mpnn.diff_enc.W1
    blocks.0.bn_local.state          (buffer)

Parameters are plain `Tensor`s with `requires_grad=True`.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from engine.functional import BatchNormState, batchnorm
from engine.tensor import Tensor, parameter
from errors import DimensionError


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform Glorot initialisation for a (fan_in, fan_out) weight matrix."""
    bound = math.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # ── traversal ────────────────────────────────────────────────────────────
    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item
            else:
                yield name, value

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, BatchNormState]]:
        out = []
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, BatchNormState):
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_buffers(full + "."))
        return out

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    # ── mode / gradients ─────────────────────────────────────────────────────
    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    """y = x W (+ b)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.W = parameter(glorot(rng, d_in, d_out))
        self.b = parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.W.shape[0]:
            raise DimensionError(f"Linear: input {x.shape} vs weight {self.W.shape}")
        out = x @ self.W
        return out + self.b if self.b is not None else out


class BatchNorm(Module):
    def __init__(self, width: int):
        self.gamma = parameter(np.ones(width))
        self.beta = parameter(np.zeros(width))
        self.state = BatchNormState.fresh(width)

    def forward(self, x: Tensor) -> Tensor:
        return batchnorm(x, self.gamma, self.beta, self.state, self.training)
