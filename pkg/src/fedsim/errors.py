class FedSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedSimError, ValueError):
    """Invalid configuration; `key` names the offending config path when known."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ShapeError(FedSimError, ValueError):
    pass


class NumericError(FedSimError, ValueError):
    pass


class FormatError(FedSimError, ValueError):
    pass


class ConsistencyError(FedSimError, ValueError):
    pass


class PartitionError(FedSimError, ValueError):
    pass


class CorruptionError(FedSimError, ValueError):
    pass


class AggregationError(FedSimError, ValueError):
    pass


class EvaluationError(FedSimError, ValueError):
    pass


class RoundError(FedSimError, RuntimeError):
    def __init__(self, message: str, round_index: int | None = None):
        self.round_index = round_index
        prefix = f"round {round_index}: " if round_index is not None else ""
        super().__init__(prefix + message)


class ComparisonError(FedSimError, ValueError):
    pass


class EmptyClientData(FedSimError):
    """Raised by local training when a client holds no samples; the engine skips it."""
