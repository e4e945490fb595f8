"""Keypoint files, preprocessing and the synthetic dataset."""

from .dataset import KeypointDataset, prepare_sequence
from .skel import KeypointSequence, SkelChecksumError, SkelFormatError
from .synth import synth_dataset
from .transforms import AugmentConfig, augment, mirror, normalize, reduce_graph, rotate, sample_clip

__all__ = [
    "AugmentConfig",
    "KeypointDataset",
    "KeypointSequence",
    "SkelChecksumError",
    "SkelFormatError",
    "augment",
    "mirror",
    "normalize",
    "prepare_sequence",
    "reduce_graph",
    "rotate",
    "sample_clip",
    "synth_dataset",
]
