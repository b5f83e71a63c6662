"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class BudgetEWMError(Exception):
    exit_code = 1


class ConfigError(BudgetEWMError, ValueError):
    """Invalid configuration or grid specification."""

    exit_code = 2


class InvalidInputError(BudgetEWMError, ValueError):
    """Malformed data: bad CSV rows, out-of-range covariates, empty inputs."""

    exit_code = 3


class OverlapError(InvalidInputError):
    """A known propensity lies outside the open interval (0, 1)."""


class NumericError(BudgetEWMError, ArithmeticError):
    exit_code = 4


class DegenerateCellError(NumericError):
    """A confounder cell is missing one of the two treatment arms."""

    def __init__(self, cell, missing_arm):
        self.cell = cell
        self.missing_arm = missing_arm
        super().__init__(f"confounder cell {cell!r} has no records with d={missing_arm}")


class NotPSDError(NumericError):
    pass


class EmptyGridError(NumericError):
    pass


class IterationError(BudgetEWMError):
    """A Monte Carlo iteration failed; keeps the cause's exit code."""

    def __init__(self, iteration: int, seed: int, cause: BudgetEWMError):
        self.iteration = iteration
        self.seed = seed
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"iteration {iteration} (sample seed {seed}): {cause}")
