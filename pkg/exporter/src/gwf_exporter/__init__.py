"""Export tiny torch generators to GWF v1 and validate them cross-engine."""

__version__ = "0.1.0"

from .arch import ArchConfig, ExportError, LayerCfg, check_exportable
from .blotch import make_blotch_model
from .export import ExportReport, export_gwf, validation_latents
from .torchmodel import TinyGenerator, toy_config, train_toy_generator
