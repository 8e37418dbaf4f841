"""Exception hierarchy.

CLI exit codes are keyed on the three top-level families: configuration and
parameter problems exit 2, synthesis infeasibility exits 3 and simulation
divergence exits 4.
"""


class GridShapeError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GridShapeError, ValueError):
    """A model or tuning parameter violates its invariant.

    ``field`` names the offending attribute so callers can build diagnostics.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigError(ParameterError):
    """Scenario file could not be parsed or failed schema validation."""


class InvalidCoefficientError(GridShapeError, ValueError):
    pass


class PoleEvaluationError(GridShapeError, ZeroDivisionError):
    pass


class ImproperTransferError(GridShapeError, ValueError):
    pass


class DegenerateLoopError(GridShapeError, ValueError):
    pass


class SynthesisError(GridShapeError):
    """Controller synthesis or numerical reduction could not be carried out."""


class InstabilityError(SynthesisError):
    pass


class IllConditionedError(SynthesisError):
    pass


class NonMinimalError(SynthesisError):
    pass


class InfeasibleAllocationError(SynthesisError):
    pass


class DivergenceError(GridShapeError, ArithmeticError):
    """Simulated state became non-finite."""


class LossOfSynchronismError(DivergenceError):
    pass


class MissingSignalError(GridShapeError, KeyError):
    pass


class HorizonTooShortError(GridShapeError):
    pass
