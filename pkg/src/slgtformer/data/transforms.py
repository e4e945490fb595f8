"""Keypoint preprocessing: joint reduction, normalisation, augmentation and clip sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..tensor import DegenerateInputError

CLIP_FRAMES = 150
CROP_FRAMES = 120


def reduce_graph(frames: np.ndarray, reduction_map) -> np.ndarray:
    """Select the keypoints listed in ``reduction_map`` (one per graph node)."""
    idx = np.asarray(reduction_map, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= frames.shape[1]):
        raise IndexError(f"reduction map needs {idx.max() + 1} source keypoints, input has {frames.shape[1]}")
    return frames[:, idx, :]


def normalize(frames: np.ndarray) -> np.ndarray:
    """Affinely map the sequence's joint bounding box onto [-1, 1] per axis.

    The box is taken over all frames at once; a confidence channel is left alone.
    """
    out = np.array(frames, dtype=np.float64, copy=True)
    for axis in (0, 1):
        lo, hi = out[..., axis].min(), out[..., axis].max()
        if not hi > lo:
            raise DegenerateInputError(f"bounding box has zero extent along {'xy'[axis]}")
        out[..., axis] = (out[..., axis] - lo) * (2.0 / (hi - lo)) - 1.0
    return out


@dataclass(frozen=True)
class AugmentConfig:
    mirror_prob: float = 0.5
    rotate_max_deg: float = 13.0
    scale_range: tuple = (0.9, 1.1)
    jitter_std: float = 0.01
    shift_max: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValueError(f"mirror_prob {self.mirror_prob} outside [0, 1]")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range {self.scale_range} must satisfy 0 < min <= max")
        for name in ("rotate_max_deg", "jitter_std", "shift_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def off(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, (1.0, 1.0), 0.0, 0.0)


def mirror(frames: np.ndarray, permutation) -> np.ndarray:
    """Negate x and swap left/right nodes."""
    out = frames[:, np.asarray(permutation), :].copy()
    out[..., 0] = -out[..., 0]
    return out


def rotate(frames: np.ndarray, degrees: float) -> np.ndarray:
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    out = frames.copy()
    x, y = frames[..., 0], frames[..., 1]
    out[..., 0] = c * x - s * y
    out[..., 1] = s * x + c * y
    return out


def augment(frames: np.ndarray, cfg: AugmentConfig, rng, mirror_perm) -> np.ndarray:
    """Mirror, rotate, scale, jitter and shift, in that order.

    Every random draw is made regardless of whether its transform is active,
    so the stream position does not depend on the configuration.
    """
    gen = getattr(rng, "generator", rng)
    out = np.array(frames, dtype=np.float64, copy=True)
    do_mirror = gen.random() < cfg.mirror_prob
    angle = gen.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg)
    scale = gen.uniform(*cfg.scale_range)
    noise = gen.normal(0.0, 1.0, out[..., :2].shape)
    shift = gen.uniform(-cfg.shift_max, cfg.shift_max, 2)
    if do_mirror:
        out = mirror(out, mirror_perm)
    if cfg.rotate_max_deg:
        out = rotate(out, angle)
    if cfg.scale_range != (1.0, 1.0):
        out[..., :2] *= scale
    if cfg.jitter_std:
        out[..., :2] += cfg.jitter_std * noise
    if cfg.shift_max:
        out[..., :2] += shift
    return out


def pad_or_truncate(frames: np.ndarray, length: int = CLIP_FRAMES) -> np.ndarray:
    t = frames.shape[0]
    if t == 0:
        raise DegenerateInputError("empty keypoint sequence")
    if t >= length:
        return frames[:length]
    return np.concatenate([frames, np.repeat(frames[-1:], length - t, axis=0)])


def crop_offset(train: bool, rng=None, clip: int = CLIP_FRAMES, crop: int = CROP_FRAMES) -> int:
    if not train:
        return (clip - crop) // 2
    gen = getattr(rng, "generator", rng)
    return int(gen.integers(0, clip - crop + 1))


def sample_clip(frames: np.ndarray, train: bool, rng=None, offset=None) -> np.ndarray:
    """Pad/truncate to 150 frames, then take 120 contiguous ones.

    Training draws the offset uniformly from 0..30; evaluation uses 15.
    """
    full = pad_or_truncate(frames)
    if offset is None:
        offset = crop_offset(train, rng)
    if not 0 <= offset <= CLIP_FRAMES - CROP_FRAMES:
        raise ValueError(f"crop offset {offset} outside 0..{CLIP_FRAMES - CROP_FRAMES}")
    return full[offset : offset + CROP_FRAMES]
