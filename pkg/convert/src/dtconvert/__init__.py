"""Conversion tooling for the deepthink engine's file formats."""
from .container import MODEL_MAGIC, read_archive, write_archive
from .convert import (
    config_meta,
    convert_checkpoint,
    load_checkpoint,
    read_tokenizer_tables,
    weight_tensors,
)
from .datasets import DEFAULT_SAMPLE, prepare_dataset
from .errors import ConversionError, PreparationError, ToolError
from .fixture import PROMPTS, build_checkpoint, build_fixture
from .golden import export_reference, load_tokenizer

__version__ = "0.1.0"

__all__ = [
    "MODEL_MAGIC",
    "read_archive",
    "write_archive",
    "config_meta",
    "convert_checkpoint",
    "load_checkpoint",
    "read_tokenizer_tables",
    "weight_tensors",
    "DEFAULT_SAMPLE",
    "prepare_dataset",
    "ConversionError",
    "PreparationError",
    "ToolError",
    "PROMPTS",
    "build_checkpoint",
    "build_fixture",
    "export_reference",
    "load_tokenizer",
    "__version__",
]
