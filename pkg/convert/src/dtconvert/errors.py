"""Failure taxonomy for the conversion tooling."""


class ToolError(Exception):
    """Base class; the CLI maps these to exit code 3."""


class ConversionError(ToolError):
    """A checkpoint could not be mapped onto the archive schema."""


class PreparationError(ToolError):
    """A dataset source did not match its expected layout."""
