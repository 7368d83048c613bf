"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for validation problems, 3 for convergence failures, 4 for
internal-consistency failures.
"""


class GravabError(Exception):
    exit_code = 1


class ValidationError(GravabError, ValueError):
    """Bad input: out-of-range parameters, malformed configs, unknown labels."""

    exit_code = 2


class ConfigurationError(ValidationError):
    pass


class GeometryError(ValidationError):
    """Sources overlap or a scenario places bodies where the model breaks down."""


class SingularityError(GeometryError):
    """Field or potential requested at (or inside the exclusion ball of) a point source."""


class ProximityError(GeometryError):
    pass


class ScenarioError(ValidationError):
    pass


class NumericError(GravabError, ArithmeticError):
    exit_code = 2


class ConvergenceError(GravabError):
    exit_code = 3

    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class AccuracyError(ConvergenceError):
    pass


class ConsistencyError(GravabError):
    exit_code = 4


class RankError(ValidationError):
    """Degenerate design: the fit abscissae do not determine a slope."""
