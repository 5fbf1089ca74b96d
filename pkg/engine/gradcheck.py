"""
Central finite-difference gradient checker.

    report = grad_check(lambda x: (x * x * x).sum(), [x])
    assert report.max_error < 1e-7

Each input coordinate is perturbed by ±h and the scalar output is
re-evaluated with recording disabled.  The relative error of a coordinate is

    |analytic - numeric| / max(|analytic|, |numeric|, floor)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from engine.tensor import Tape, Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_error: float
    per_input: list[float]
    analytic: list[np.ndarray] = field(repr=False)
    numeric: list[np.ndarray] = field(repr=False)
    names: list[str] = field(default_factory=list)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error < tol

    def worst(self) -> str:
        """Name of the input holding the largest error."""
        if not self.per_input:
            return ""
        i = int(np.argmax(self.per_input))
        return self.names[i] if i < len(self.names) else f"input[{i}]"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = DEFAULT_STEP,
    floor: float = DEFAULT_FLOOR,
) -> GradCheckReport:
    """
    Compare the tape gradient of the scalar `f(*inputs)` with central differences.

    Inputs are switched to `requires_grad=True` and their `.grad` is reset.
    `f` must be deterministic for a fixed input (it is called 2·N + 1 times).
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.grad = None

    with Tape():
        out = f(*inputs)
    backward(out)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    numeric = []
    with no_grad():
        for t in inputs:
            num = np.zeros_like(t.data)
            for idx in np.ndindex(t.data.shape):
                orig = t.data[idx]
                t.data[idx] = orig + h
                f_plus = f(*inputs).item()
                t.data[idx] = orig - h
                f_minus = f(*inputs).item()
                t.data[idx] = orig
                num[idx] = (f_plus - f_minus) / (2.0 * h)
            numeric.append(num)

    per_input = [
        float(relative_error(a, n, floor).max()) if a.size else 0.0
        for a, n in zip(analytic, numeric)
    ]
    names = [t.name or f"input[{i}]" for i, t in enumerate(inputs)]
    report = GradCheckReport(max(per_input, default=0.0), per_input, analytic, numeric, names)
    logger.debug("grad_check: max relative error %.3e (%s)", report.max_error, report.worst())
    return report
