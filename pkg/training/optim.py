"""
AdamW with decoupled weight decay, plus global-norm gradient clipping.

    m ← β₁ m + (1 − β₁) g
    v ← β₂ v + (1 − β₂) g²
    θ ← θ − lr · ( m̂ / (sqrt(v̂) + eps) + wd · θ )

with m̂ = m / (1 − β₁ᵗ) and v̂ = v / (1 − β₂ᵗ).  Decay uses θ before the
update and is scaled by the scheduled learning rate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import numpy as np

from engine.tensor import Tensor
from errors import ConfigError, StateError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 0
    total_steps: int = 0            # 0: epochs × batches per epoch
    clip_norm: float = 5.0          # <= 0 disables clipping
    batch_size: int = 32
    epochs: int = 200

    def validate(self) -> "OptimizerConfig":
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ConfigError("base_lr and weight_decay must be >= 0")
        if self.warmup_steps < 0 or self.total_steps < 0:
            raise ConfigError("warmup_steps and total_steps must be >= 0")
        if self.total_steps and self.warmup_steps > self.total_steps:
            raise ConfigError(
                f"warmup_steps ({self.warmup_steps}) exceeds total_steps ({self.total_steps})"
            )
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        return self

    def with_total_steps(self, total: int) -> "OptimizerConfig":
        return replace(self, total_steps=total).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "OptimizerConfig":
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown optimizer config keys: {sorted(unknown)}")
        return cls(**raw).validate()


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, p: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(p), np.zeros_like(p))


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: Sequence[AdamState],
               cfg: OptimizerConfig, step: int, lr: float | None = None) -> list[np.ndarray]:
    """One AdamW update; moments in `state` are advanced in place, new params returned."""
    if step < 1:
        raise StateError(f"step must be >= 1, got {step}")
    if not len(params) == len(grads) == len(state):
        raise StateError(f"{len(params)} params, {len(grads)} grads, {len(state)} states")
    lr = cfg.base_lr if lr is None else lr
    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1.0 - b1 ** step, 1.0 - b2 ** step

    updated = []
    for i, (p, g, s) in enumerate(zip(params, grads, state)):
        if g.shape != p.shape or s.m.shape != p.shape or s.v.shape != p.shape:
            raise StateError(
                f"parameter {i}: shape {p.shape}, grad {g.shape}, moments {s.m.shape}/{s.v.shape}"
            )
        s.m = b1 * s.m + (1.0 - b1) * g
        s.v = b2 * s.v + (1.0 - b2) * g * g
        m_hat = s.m / c1
        v_hat = s.v / c2
        updated.append(p - lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p))
    return updated


class AdamW:
    """Per-parameter AdamW state bound to a model's named parameters."""

    def __init__(self, named_params: Sequence[tuple[str, Tensor]], cfg: OptimizerConfig):
        self.cfg = cfg.validate()
        self.names = [name for name, _ in named_params]
        self.params = [p for _, p in named_params]
        self.state = [AdamState.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, lr: float | None = None) -> None:
        self.step_count += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new = adamw_step([p.data for p in self.params], grads, self.state, self.cfg, self.step_count, lr)
        for p, value in zip(self.params, new):
            p.data[...] = value

    def state_dict(self) -> dict:
        return {
            "step": self.step_count,
            "config": self.cfg.to_dict(),
            "m": {n: s.m.copy() for n, s in zip(self.names, self.state)},
            "v": {n: s.v.copy() for n, s in zip(self.names, self.state)},
        }

    def load_state_dict(self, sd: dict) -> None:
        for moment in ("m", "v"):
            missing = [n for n in self.names if n not in sd[moment]]
            if missing:
                raise StateError(f"optimizer state has no {moment!r} moment for {missing[0]!r}")
        for name, p, s in zip(self.names, self.params, self.state):
            m, v = np.asarray(sd["m"][name]), np.asarray(sd["v"][name])
            if m.shape != p.shape or v.shape != p.shape:
                raise StateError(f"optimizer moments for {name!r} have shape {m.shape}, parameter has {p.shape}")
            s.m, s.v = m.astype(np.float64), v.astype(np.float64)
        self.step_count = int(sd["step"])


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
        logger.debug("Clipped gradient norm %.4f to %.4f", total, max_norm)
    return total
