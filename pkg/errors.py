"""
Exception hierarchy for diffgraph.

Every error raised on purpose by the toolkit derives from `DiffGraphError`,
so the command line can turn it into a one-line message.  Most categories
also derive from `ValueError` because they describe bad input.
"""


class DiffGraphError(Exception):
    """Root of all toolkit errors."""

    exit_code = 1


# ── Tensor engine ─────────────────────────────────────────────────────────────
class DimensionError(DiffGraphError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(DiffGraphError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NumericError(DiffGraphError, ArithmeticError):
    """Non-finite values reached an operation that requires finite input."""


# ── Data files ────────────────────────────────────────────────────────────────
class FormatError(DiffGraphError, ValueError):
    """Structurally incompatible data (e.g. mixed feature widths)."""


class ParseError(DiffGraphError, ValueError):
    """A dataset line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class ValidationError(DiffGraphError, ValueError):
    """Values are well-formed but out of their valid range."""


# ── Configuration / CLI ───────────────────────────────────────────────────────
class UsageError(DiffGraphError, ValueError):
    """Unknown command-level choice (e.g. dataset kind)."""

    exit_code = 2


class ConfigError(DiffGraphError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


# ── Training / checkpoints ────────────────────────────────────────────────────
class StateError(DiffGraphError, ValueError):
    """Optimizer state does not match the parameters it is applied to."""


class CheckpointError(DiffGraphError):
    """Base class for checkpoint load failures."""


class VersionMismatchError(CheckpointError):
    pass


class MissingTensorError(CheckpointError, KeyError):
    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class ShapeMismatchError(CheckpointError, ValueError):
    pass


class TrainingAborted(DiffGraphError):
    """Raised when the loss turns non-finite."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
