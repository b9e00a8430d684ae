"""Exception taxonomy shared across the engine.

Every error raised by library code derives from EngineError so callers
(and the CLI) can distinguish usage problems from runtime failures.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class InvalidArgumentError(EngineError):
    """An argument violates a documented precondition."""


class CapacityError(EngineError):
    """The request exceeds a hard size guard (memory or runtime)."""


class ConfigError(EngineError):
    """A provider or run description is malformed or names an unknown kind."""


class ProviderError(EngineError):
    """A value-function provider failed to answer a query.

    batch_index identifies the offending batch when the failure happened
    inside a batched evaluation loop; None otherwise.
    """

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index
