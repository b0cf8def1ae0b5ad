"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes, so raising the right class matters:
format/compatibility problems must stay distinguishable from numeric
divergence and from plain usage errors.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EngineError):
    """Operand shapes are inconsistent (names both shapes in the message)."""


class ConfigError(EngineError):
    """A prefix or weight structure disagrees with the model config."""


class CapacityError(EngineError):
    """Requested positions exceed the model's position budget."""


class InputError(EngineError):
    """A token id is outside the vocabulary."""


class FormatError(EngineError):
    """An archive has a bad magic, version, or unparseable header."""


class CorruptionError(FormatError):
    """An archive is truncated or its records point outside the file."""


class CompatibilityError(EngineError):
    """A stored KV state was produced by a different model."""


class StorageError(EngineError):
    """An archive could not be read or written (wraps the OS error)."""


class StateError(EngineError):
    """Optimizer state shapes drifted between steps (should never happen)."""


class DivergenceError(EngineError):
    """An update produced non-finite values."""

    def __init__(self, step: int, layer: int, what: str = "kv update"):
        self.step = step
        self.layer = layer
        super().__init__(
            f"non-finite values in {what} at step {step}, layer {layer}"
        )


class DataError(EngineError):
    """A dataset cannot supply what was asked of it (e.g. too few demos)."""


class ParseError(EngineError):
    """A dataset line is malformed."""

    def __init__(self, path: str, line_no: int, reason: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")
