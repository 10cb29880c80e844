"""Exception hierarchy shared by every module of the package."""


class HybridAttitudeError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInputError(HybridAttitudeError, ValueError):
    pass


class GeometrySynthesisError(HybridAttitudeError):
    pass


class CovarianceNotSPDError(HybridAttitudeError, ValueError):
    pass


class ConfigurationError(HybridAttitudeError, ValueError):
    """Invalid scenario or radio configuration.

    ``field`` names the offending configuration key and ``line`` the line of the
    source file it was read from, when known.
    """

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where += f"field '{field}'"
        if line is not None:
            where += f" (line {line})" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ParameterizationSingularityError(HybridAttitudeError, ValueError):
    pass


class SingularFIMError(HybridAttitudeError, ValueError):
    pass


class ModelError(HybridAttitudeError, ValueError):
    pass


class RankDeficiencyError(HybridAttitudeError, ValueError):
    """Normal matrix singular or too ill-conditioned to invert.

    ``block`` is ``"ambiguity"``, ``"attitude"`` or ``"joint"``.
    """

    def __init__(self, message, block="joint", condition=None):
        self.block = block
        self.condition = condition
        super().__init__(message)


class NonConvergenceError(HybridAttitudeError):
    """Raised when no SO(3) restart converged; carries the best iterate."""

    def __init__(self, message, best_rotation=None, best_cost=None):
        self.best_rotation = best_rotation
        self.best_cost = best_cost
        super().__init__(message)


class ObservabilityError(HybridAttitudeError, ValueError):
    pass
