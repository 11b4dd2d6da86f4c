"""Exceptions shared across the solver, aggregation protocol, and runtime."""


class ConfigError(ValueError):
    """An invalid or inconsistent run configuration."""


class DivergenceError(RuntimeError):
    """The optimization state became non-finite."""


class ProtocolError(RuntimeError):
    """A message violated the aggregation protocol's rules."""


class ChannelClosed(Exception):
    """The update channel ended; the master should shut down gracefully."""
