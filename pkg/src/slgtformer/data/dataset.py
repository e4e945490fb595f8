"""Manifest-backed dataset producing model-ready ``B x N x C x T`` batches."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..graph import SkeletonGraph
from ..tensor import Rng
from . import skel
from .transforms import AugmentConfig, augment, normalize, reduce_graph, sample_clip


def prepare_sequence(frames: np.ndarray, graph: SkeletonGraph, channels: int | None = None,
                     source: str = "<sequence>") -> np.ndarray:
    """Reduce raw keypoints to the graph's nodes, keep ``channels`` channels and normalise."""
    if graph.reduction_map:
        frames = reduce_graph(frames, graph.reduction_map)
    if frames.shape[1] != graph.node_count:
        raise skel.SkelFormatError(f"{source}: {frames.shape[1]} joints for a {graph.node_count}-node graph")
    if channels is not None:
        if frames.shape[2] < channels:
            raise skel.SkelFormatError(f"{source}: has {frames.shape[2]} channels, model needs {channels}")
        frames = frames[..., :channels]
    return normalize(frames)


class KeypointDataset:
    """Loads every sample once, reduced to the graph's nodes and normalised."""

    def __init__(self, manifest_path, graph: SkeletonGraph, channels: int | None = None):
        self.manifest_path = Path(manifest_path)
        doc = skel.read_manifest(self.manifest_path)
        self.classes = list(doc["classes"])
        self.entries = doc["samples"]
        self.graph = graph
        self.mirror_perm = graph.mirror_permutation()
        root = self.manifest_path.parent
        self.sequences = []
        for e in self.entries:
            seq = skel.load(root / e["file"])
            if seq.label >= 0 and seq.label != e["label"]:
                raise skel.SkelFormatError(f"{e['file']}: file label {seq.label} != manifest label {e['label']}")
            self.sequences.append(prepare_sequence(seq.frames, graph, channels, source=e["file"]))
        self.labels = np.array([e["label"] for e in self.entries], dtype=np.int64)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __len__(self):
        return len(self.entries)

    def indices(self, split: str | None = None) -> np.ndarray:
        if split is None:
            return np.arange(len(self))
        return np.array([i for i, e in enumerate(self.entries) if e.get("split", "train") == split], dtype=np.int64)

    def clip(self, i: int, train: bool, rng=None, aug: AugmentConfig | None = None) -> np.ndarray:
        """Sample ``i`` as an ``N x C x 120`` array."""
        frames = sample_clip(self.sequences[i], train, rng)
        if train and aug is not None:
            frames = augment(frames, aug, rng, self.mirror_perm)
        return np.ascontiguousarray(frames.transpose(1, 2, 0))

    def batch(self, idx, train: bool, seed: int = 0, epoch: int = 0, aug: AugmentConfig | None = None):
        """Stacked clips and labels.  Sample ``i`` in epoch ``e`` draws from ``Rng(seed, e, i)``."""
        xs = [self.clip(int(i), train, Rng(seed, epoch, int(i)) if train else None, aug) for i in idx]
        return np.stack(xs), self.labels[np.asarray(idx, dtype=np.int64)]
