"""Linear warmup followed by a half-cosine decay to zero."""

from __future__ import annotations

import math

from training.optim import OptimizerConfig


def lr_at(step: int, cfg: OptimizerConfig) -> float:
    """
    Learning rate for `step` (0 … total_steps).

        step <= warmup      base_lr · step / warmup
        afterwards          base_lr · ½ (1 + cos(π · progress))

    where progress runs from 0 at the end of warmup to 1 at total_steps.
    Steps outside the range are clamped.
    """
    base, warmup, total = cfg.base_lr, cfg.warmup_steps, cfg.total_steps
    step = max(step, 0)
    if total:
        step = min(step, total)
    if warmup and step < warmup:
        return base * step / warmup
    if total <= warmup:
        return base
    progress = (step - warmup) / (total - warmup)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))
