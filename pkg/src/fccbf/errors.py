"""Exception hierarchy shared across the package."""


class FccbfError(Exception):
    pass


class ConfigurationError(FccbfError, ValueError):
    """A model, spec or scenario is malformed or inconsistent."""


class DomainError(FccbfError, ValueError):
    """A numeric routine was called outside its domain."""


class SimulationError(FccbfError, RuntimeError):
    """The closed loop produced a non-finite state."""


class ScenarioError(ConfigurationError):
    """Scenario file failed validation; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
