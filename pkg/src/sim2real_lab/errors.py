"""Exception types shared by every module, with the CLI exit code each maps to."""


class LabError(Exception):
    exit_code = 1


class ConfigurationError(LabError, ValueError):
    """Bad shapes, out-of-range parameters, unknown config keys."""

    exit_code = 2


class BudgetError(LabError):
    """An episode budget is too small for the requested schedule, or a cap was hit."""

    exit_code = 4


class InvariantViolation(LabError):
    """A checked invariant or lemma bound failed."""

    exit_code = 3


class NumericalError(LabError, ArithmeticError):
    exit_code = 1


class GenerationError(LabError):
    exit_code = 1
