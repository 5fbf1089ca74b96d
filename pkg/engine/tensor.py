"""
Tensor engine: dense float64 arrays with define-by-run reverse-mode autodiff.

Every operation in this module (and in `engine.functional`) computes its value
eagerly with numpy and, when a `Tape` is active and at least one input
requires a gradient, records a backward rule on that tape.  `backward(loss)`
replays the tape in reverse and accumulates gradients into every input that
requires one.

Usage
-----
    from engine.tensor import Tensor, Tape, backward

    x = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape():
        loss = (x * x).sum()
    backward(loss)
    x.grad          # array([[2., 4.]])

Broadcasting
------------
Only three shape combinations are accepted by the binary elementwise ops:
exact match, a scalar (0-d tensor or Python number) against anything, and a
row vector of width n (shape (n,) or (1, n)) against an (m, n) matrix.
Anything else raises `DimensionError`.
"""

from __future__ import annotations

import itertools
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from numbers import Number
from typing import Callable, Iterator, Sequence

import numpy as np

from errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

DTYPE = np.float64

BackwardRule = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_tape_ids = itertools.count(1)
_local = threading.local()

# op name -> transform applied to the incoming gradient of that op (test hooks)
_faults: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


# ── Tape ──────────────────────────────────────────────────────────────────────

@dataclass
class _Record:
    inputs: tuple["Tensor", ...]
    output: "Tensor"
    rule: BackwardRule
    name: str


class Tape:
    """
    Ordered list of recorded operations for one forward pass.

    Records are appended as operations execute, so every record's inputs are
    produced by earlier records (or are leaves).  Open one per forward pass:

        with Tape() as tape:
            loss = model_loss(...)
        backward(loss)
    """

    def __init__(self):
        self.id = next(_tape_ids)
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: "Tensor", inputs: Sequence["Tensor"], rule: BackwardRule, name: str) -> None:
        output._tape = self
        self.records.append(_Record(tuple(inputs), output, rule, name))

    def backward(self, loss: "Tensor") -> None:
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        # intermediate gradients restart from zero on every replay; leaves accumulate
        for rec in self.records:
            rec.output.grad = None
        loss.grad = np.ones_like(loss.data)

        for rec in reversed(self.records):
            g = rec.output.grad
            if g is None:
                continue
            fault = _faults.get(rec.name)
            if fault is not None:
                g = fault(g)
            grads = rec.rule(g)
            for inp, gi in zip(rec.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                inp._accumulate(gi)


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    """Return the innermost open tape of this thread, or None when recording is off."""
    if getattr(_local, "paused", 0):
        return None
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording inside the block, even when a tape is open."""
    _local.paused = getattr(_local, "paused", 0) + 1
    try:
        yield
    finally:
        _local.paused -= 1


@contextmanager
def fault_injection(op_name: str, transform: Callable[[np.ndarray], np.ndarray]) -> Iterator[None]:
    """
    Temporarily rewrite the incoming gradient of every op recorded as `op_name`.

    Used by the mutation checks of the verification suite: a correct gradient
    checker must notice the corrupted backward rule.
    """
    previous = _faults.get(op_name)
    _faults[op_name] = transform
    try:
        yield
    finally:
        if previous is None:
            _faults.pop(op_name, None)
        else:
            _faults[op_name] = previous


# ── Tensor ────────────────────────────────────────────────────────────────────

class Tensor:
    """Dense float64 array with an optional accumulated gradient."""

    __array_priority__ = 100  # numpy defers to our operators

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, value: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(value, dtype=DTYPE)
        out.grad = None
        out.requires_grad = False
        out.name = None
        out._tape = None
        return out

    # ── views ────────────────────────────────────────────────────────────────
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def tape_id(self) -> int | None:
        return self._tape.id if self._tape is not None else None

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a 1-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        g = np.asarray(g, dtype=DTYPE)
        if g.shape != self.data.shape:
            raise DimensionError(f"gradient of shape {g.shape} for tensor of shape {self.shape}")
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # ── operators ────────────────────────────────────────────────────────────
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return tsum(self)

    def mean(self) -> "Tensor":
        return mean(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)


def constant(value) -> Tensor:
    """Wrap `value` as a tensor that never requires a gradient."""
    return Tensor(value, requires_grad=False)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def custom_op(value: np.ndarray, inputs: Sequence[Tensor], rule: BackwardRule, name: str = "op") -> Tensor:
    """
    Build the output tensor of an operation and record it on the active tape.

    `rule(g)` receives dL/d(output) and must return one gradient (or None) per
    input, each shaped like that input.
    """
    out = Tensor._wrap(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, rule, name)
    return out


def backward(loss: Tensor) -> None:
    """Populate `.grad` of every tensor that requires one and feeds `loss`."""
    if not isinstance(loss, Tensor):
        raise ContractError(f"backward expects a Tensor, got {type(loss).__name__}")
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss is not on a live tape; compute it inside `with Tape():`")
    loss._tape.backward(loss)


# ── broadcasting helpers ─────────────────────────────────────────────────────

def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (Number, np.ndarray, list, tuple)):
        return constant(x)
    raise ContractError(f"cannot use {type(x).__name__} as a tensor operand")


def _check_broadcast(a: tuple[int, ...], b: tuple[int, ...], op: str) -> None:
    if a == b or a == () or b == ():
        return
    for mat, vec in ((a, b), (b, a)):
        if len(mat) == 2 and (vec == (mat[1],) or vec == (1, mat[1])):
            return
    raise DimensionError(f"{op}: incompatible shapes {a} and {b}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    if len(shape) == 1:
        return g.sum(axis=0)
    return g.sum(axis=0, keepdims=True)


# ── elementwise ops ──────────────────────────────────────────────────────────

def add(a, b) -> Tensor:
    if isinstance(b, Number) and isinstance(a, Tensor):
        return add_scalar(a, float(b))
    if isinstance(a, Number) and isinstance(b, Tensor):
        return add_scalar(b, float(a))
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return custom_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a, b) -> Tensor:
    if isinstance(b, Number) and isinstance(a, Tensor):
        return add_scalar(a, -float(b))
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return custom_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
        "sub",
    )


def add_scalar(x: Tensor, c: float) -> Tensor:
    return custom_op(x.data + c, (x,), lambda g: (g,), "add_scalar")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return custom_op(x.data * c, (x,), lambda g: (g * c,), "scale")


def mul(a, b) -> Tensor:
    """Hadamard product (or scalar scaling when one side is a number)."""
    if isinstance(b, Number) and isinstance(a, Tensor):
        return scale(a, b)
    if isinstance(a, Number) and isinstance(b, Tensor):
        return scale(b, a)
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, "mul")
    av, bv = a.data, b.data
    return custom_op(
        av * bv, (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    if isinstance(b, Number) and isinstance(a, Tensor):
        return scale(a, 1.0 / float(b))
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, "div")
    av, bv = a.data, b.data
    return custom_op(
        av / bv, (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)),
        "div",
    )


def relu(x: Tensor) -> Tensor:
    # strict inequality: the subgradient at exactly 0 is 0
    mask = x.data > 0
    return custom_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    return custom_op(
        np.where(mask, x.data, slope * x.data), (x,),
        lambda g: (np.where(mask, g, slope * g),),
        "leaky_relu",
    )


def sigmoid(x: Tensor) -> Tensor:
    e = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return custom_op(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return custom_op(e, (x,), lambda g: (g * e,), "exp")


# ── linear algebra / shape ops ───────────────────────────────────────────────

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.data, b.data
    return custom_op(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return custom_op(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    try:
        value = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {src} -> {shape}: {exc}") from None
    return custom_op(value.copy(), (x,), lambda g: (g.reshape(src),), "reshape")


def tsum(x: Tensor) -> Tensor:
    src = x.shape
    return custom_op(np.asarray(x.data.sum()), (x,), lambda g: (np.full(src, float(g)),), "sum")


def mean(x: Tensor) -> Tensor:
    n = max(x.size, 1)
    return scale(tsum(x), 1.0 / n)


def tag(x: Tensor, name: str) -> Tensor:
    """Identity op recorded under `name`, so hooks can address it."""
    return custom_op(x.data, (x,), lambda g: (g,), name)
