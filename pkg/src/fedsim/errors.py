"""Exception hierarchy shared by all fedsim modules."""


class FedSimError(Exception):
    """Base class for every error raised by fedsim."""


class DimensionError(FedSimError, ValueError):
    """Vectors or parameter blocks have incompatible lengths or shapes."""


class EmptyDistributionError(FedSimError, ValueError):
    pass


class EmptyPopulationError(FedSimError, ValueError):
    pass


class ReferenceClassEmptyError(FedSimError, ValueError):
    """The class used to scale EMD values has no samples in the population."""


class DataFormatError(FedSimError, ValueError):
    """A data file is malformed (bad magic number, truncated payload)."""


class ConsistencyError(FedSimError, ValueError):
    pass


class ScenarioError(FedSimError, ValueError):
    """A Maverick scenario or fixed selection policy cannot be realised."""


class StratificationError(FedSimError, ValueError):
    pass


class ConfigurationError(FedSimError, ValueError):
    """Invalid configuration. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class NumericError(FedSimError, ArithmeticError):
    pass


class EmptyCoalitionError(FedSimError, ValueError):
    pass


class IdentityError(FedSimError, KeyError):
    """A client id is not among the updates being aggregated."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class CoalitionSizeError(FedSimError, ValueError):
    pass


class InfeasibleSampleError(FedSimError, ValueError):
    pass


class ComparabilityError(FedSimError, ValueError):
    """Runs cannot be compared (different class count or test split)."""
