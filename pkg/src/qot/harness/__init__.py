"""I/O formats, configuration, training, accounting and the command-line interface."""

from .config import PRESETS, RunConfig, load_config, parse_config
from .tensorio import (
    Checkpoint, FormatError, load_checkpoint, read_manifest, read_tensor, save_checkpoint,
    write_manifest, write_tensor,
)

__all__ = [
    "PRESETS", "Checkpoint", "FormatError", "RunConfig", "load_checkpoint", "load_config",
    "parse_config", "read_manifest", "read_tensor", "save_checkpoint", "write_manifest", "write_tensor",
]
