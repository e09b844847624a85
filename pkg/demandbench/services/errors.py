"""
Domain errors raised by the services.

HTTP mapping lives in main.py and the CLI prints them as one machine-readable line.
"""


class DemandBenchError(Exception):
    """Base class for every error the services raise on purpose."""

    code = "demandbench_error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigurationError(DemandBenchError, ValueError):
    """A config object violates its invariants."""

    code = "configuration_error"


class DimensionError(DemandBenchError, ValueError):
    """Array shapes do not conform."""

    code = "dimension_error"


class InputError(DemandBenchError, ValueError):
    """Empty, non-finite or out-of-range input data."""

    code = "input_error"

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class RankDeficiencyError(DemandBenchError):
    """Design matrix is not of full column rank."""

    code = "rank_deficiency"

    def __init__(self, message: str, dependent_columns: list[int]):
        super().__init__(f"{message}; dependent columns: {dependent_columns}")
        self.dependent_columns = dependent_columns


class DegenerateVarianceError(DemandBenchError):
    """Price carries no variation once the other regressors are partialled out."""

    code = "degenerate_variance"


class UndefinedElasticityError(DemandBenchError):
    """Predicted quantity is not positive, so elasticity is undefined."""

    code = "undefined_elasticity"


class InfeasibleProblemError(DemandBenchError):
    """No feasible price vector was found."""

    code = "infeasible"

    def __init__(self, message: str, binding_constraint: str):
        super().__init__(f"{message}; binding constraint: {binding_constraint}")
        self.binding_constraint = binding_constraint


class TapeMismatchError(DemandBenchError):
    """Backward pass received a tape that does not belong to the parameters."""

    code = "tape_mismatch"
