"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit with
2, data problems with 3 and training divergence with 4.
"""


class HvisError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HvisError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(HvisError, ValueError):
    """An argument is outside its admissible range."""


class ContractError(HvisError, ValueError):
    """A precondition of an operation is violated."""


class DegenerateInputError(HvisError, ValueError):
    """Input is structurally valid but numerically degenerate."""


class FormatError(HvisError, ValueError):
    """A file does not follow the expected layout."""


class ParseError(FormatError):
    """A single cell of a file could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(HvisError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainingError(HvisError, RuntimeError):
    """Numerical failure during optimisation."""

    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message)
        self.parameter = parameter


class DivergenceError(TrainingError):
    """Loss exceeded the divergence threshold."""

    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = history or []


class CheckpointError(FormatError):
    """Checkpoint bundle is malformed or has an unsupported version."""
