"""Exception hierarchy shared across the package."""


class NNReduceError(Exception):
    """Base class for all package errors."""


class InputShapeError(NNReduceError, ValueError):
    pass


class NetworkParseError(NNReduceError, ValueError):
    pass


class PreconditionError(NNReduceError, ValueError):
    pass


class RepresentationError(NNReduceError):
    pass


class BudgetError(NNReduceError):
    """Raised when a partition would exceed the configured cell cap."""


class EnclosureError(NNReduceError):
    """Raised when no a-priori enclosure is found within the Picard budget."""


class PrecisionDomainError(NNReduceError):
    """Raised when controller inputs leave the box a precision was computed on."""


class TrainingError(NNReduceError):
    pass


class SimulationError(NNReduceError):
    pass


class ConfigError(NNReduceError, ValueError):
    pass
