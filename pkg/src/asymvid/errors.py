"""Exception types shared across the package."""

from .tensor import ShapeError


class ConfigError(ValueError):
    """Invalid configuration or hyper-parameter."""


class StageError(RuntimeError):
    """An operation was used outside the training stage it belongs to."""


__all__ = ["ConfigError", "ShapeError", "StageError"]
