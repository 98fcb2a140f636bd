"""Exception types shared across the package.

Library errors subclass ValueError / RuntimeError so callers who do not
care about the fine-grained type can still catch the usual builtins.
The CLI maps these onto exit codes (see cli.py).
"""


class DimensionError(ValueError):
    """Operand shapes do not conform; the message names both shapes."""


class RankError(ValueError):
    """A rank, keep count, or dimension argument is out of its valid range."""


class BatchError(ValueError):
    """An activation or label batch violates its invariants (e.g. empty)."""


class NoActivationsError(ValueError):
    """Every neuron in the batch is inactive; rate statistics are undefined."""


class DecompositionError(RuntimeError):
    """An iterative decomposition routine failed to converge."""


class SingularSystemError(RuntimeError):
    """A linear system was not positive definite; a larger ridge term helps."""


class NumericalError(ArithmeticError):
    """An operation produced non-finite values."""
