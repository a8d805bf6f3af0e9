"""Exception hierarchy shared by all modules."""


class FlowLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(FlowLabError, ValueError):
    """A chart point lies outside the domain of the ambient chart."""


class DegenerateMetricError(FlowLabError):
    """The ambient metric lost positive definiteness."""


class KindError(FlowLabError, TypeError):
    """An operation was requested for an ambient kind that does not support it."""


class DegenerateSurfaceError(FlowLabError):
    """The induced metric of the surface is not positive definite somewhere."""


class NonpositiveMeanCurvatureError(FlowLabError):
    """Total mean curvature is not positive, so h0 is undefined."""


class GraphDegenerationError(FlowLabError):
    """The surface is about to leave the class of radial graphs."""


class StepRejectedError(FlowLabError):
    """A time step failed even after the maximal number of halvings."""


class SingularFitError(FlowLabError):
    """The least-squares sphere fit is singular."""


class NonpositiveSeriesError(FlowLabError, ValueError):
    """A decay fit was requested on a series with non-positive values."""


class ConfigError(FlowLabError):
    """Base class for scenario configuration problems."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        # every problem found in the same text, in line order (this one first)
        self.errors = [self]


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass
