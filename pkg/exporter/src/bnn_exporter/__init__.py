"""Desk-scale binarized CNN training and model-bundle export."""

from .presets import PRESETS, preset_layers
from .train import TrainSpec, train
from .export import export

__version__ = "0.1.0"
