"""Exception types shared across the package.

Exit-code mapping in the CLI: ParameterError / FormatError are user errors
(exit 2); ConvergenceError and anything unexpected are internal (exit 1).
"""


class CateStackError(Exception):
    """Base class for all package errors."""


class ParameterError(CateStackError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(CateStackError, ValueError):
    """An input file does not match the expected schema."""


class ArmEmptyError(CateStackError):
    """A fit requires both treated and control rows but one arm is empty."""


class CandidateFitError(CateStackError):
    """A candidate model failed to fit; carries the model label."""

    def __init__(self, label: str, message: str):
        self.label = label
        super().__init__(f"candidate '{label}': {message}")


class ConvergenceError(CateStackError):
    """An iterative solver failed to reach tolerance; carries the residual."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (final KKT residual {residual:.3e})")


class StageError(CateStackError):
    """A replication stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
