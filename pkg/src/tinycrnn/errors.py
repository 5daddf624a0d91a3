"""Exception hierarchy shared across the package."""


class TinyCrnnError(Exception):
    """Base class for all package errors."""


class DimensionError(TinyCrnnError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(TinyCrnnError, FloatingPointError):
    """An operation produced NaN or Inf."""


class InputError(TinyCrnnError, ValueError):
    """Input data violates a precondition (too short, wrong layout, ...)."""


class BuildError(TinyCrnnError, ValueError):
    """A model config or stream state cannot be assembled."""


class FoldError(TinyCrnnError, ValueError):
    """Batchnorm statistics cannot be folded into the preceding conv."""


class ParameterError(TinyCrnnError, ValueError):
    """A scalar parameter is out of its admissible range."""


class SpecError(TinyCrnnError, ValueError):
    """A synthetic dataset spec is inconsistent."""


class EvaluationError(TinyCrnnError, ValueError):
    """Evaluation inputs are degenerate (single class, empty match set)."""


class TrainingError(TinyCrnnError, RuntimeError):
    """Training diverged or produced a non-finite loss.

    ``batch_index`` names the offending in-batch example when known and
    ``history`` carries whatever was recorded before the abort.
    """

    def __init__(self, message, batch_index=None, history=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.history = history if history is not None else []
