"""
Exceptions raised across the fairgrid package.

They derive from the built-in types so callers that already catch
ValueError / RuntimeError keep working.
"""


class ShapeError(ValueError):
    """Array shapes are incompatible for the requested operation."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""

    def __init__(self, message, residual, measure="residual"):
        super().__init__(f"{message} ({measure}={residual:.3e})")
        self.residual = residual
        self.measure = measure


class ConfigError(ValueError):
    """A configuration field is missing or outside its allowed range."""


class ManifestError(ValueError):
    """A manifest row could not be turned into a sample record."""

    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line = line


class ImageFormatError(ValueError):
    """Image bytes are unsupported, truncated or otherwise undecodable."""


class GridError(ValueError):
    """Grid dimensions or layout contents are invalid."""


class DatasetError(ValueError):
    """A dataset is empty or carries invalid labels."""


class ModelFormatError(ValueError):
    """A persisted model document is malformed or incompatible."""


class BackwardStateError(RuntimeError):
    """Backward was requested without matching forward caches."""
