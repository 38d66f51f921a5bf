"""Flyweight salient-object detection trained from user-drawn image markers.

Convolutional filters are estimated directly from labeled marker patches
(either per-block clustering or a single bag-of-feature-points pass), decoded
by a training-free adaptive decoder, and refined by seed-competition
delineation.  No backpropagation anywhere.
"""

__version__ = "0.1.0"

from .accel import numba_enabled
from .core import ChannelStats, FeatureMap, Patch
from .decoder import DecoderConfig, SaliencyMap
from .encoder import (
    BagOfFeaturePoints,
    BlockSpec,
    EncoderModel,
    KernelBank,
    count_parameters,
    forward_encoder,
    train_encoder,
)
from .markers import Marker, MarkerSet

__all__ = [
    "__version__",
    "numba_enabled",
    "ChannelStats",
    "FeatureMap",
    "Patch",
    "DecoderConfig",
    "SaliencyMap",
    "BagOfFeaturePoints",
    "BlockSpec",
    "EncoderModel",
    "KernelBank",
    "count_parameters",
    "forward_encoder",
    "train_encoder",
    "Marker",
    "MarkerSet",
]
