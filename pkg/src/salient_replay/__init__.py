"""Saliency-protected rational-rate compression and budgeted replay for
multichannel EEG-like segments."""

from .codec import compress, deserialize, reconstruct, serialize
from .saliency import PRESETS, SaliencyConfig, get_preset
from .types import (
    BufferEntry,
    CompressedSegment,
    PredictionLog,
    ProtectedSet,
    RationalRate,
    Segment,
    cost,
)

__version__ = "0.1.0"

__all__ = [
    "BufferEntry",
    "CompressedSegment",
    "PRESETS",
    "PredictionLog",
    "ProtectedSet",
    "RationalRate",
    "SaliencyConfig",
    "Segment",
    "compress",
    "cost",
    "deserialize",
    "get_preset",
    "reconstruct",
    "serialize",
]
