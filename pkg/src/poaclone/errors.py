"""Exceptions raised while configuring or planning simulations."""


class ConfigError(ValueError):
    """A scenario, sweep, or partition setup is inconsistent.

    ``problems`` lists field-level diagnostics when available.
    """

    def __init__(self, message: str, problems: list[str] | None = None):
        super().__init__(message)
        self.problems = problems or [message]


class PlanError(ConfigError):
    """An attack plan cannot be built for the requested parameters."""
