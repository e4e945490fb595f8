"""Synthetic gesture glosses for desk-scale experiments.

Each class is a parametric family of two-arm motions on the 27-node
skeleton: a class-specific arm pose plus one of two rhythms, each fixing
the forearm swing amplitude and frequency and the finger opening
frequency.  Both arms follow the same recipe mirrored through the body
midline, so the left/right flip used in augmentation maps every class onto
itself.  Samples vary in timing, phase, pose, body scale,
position, length and per-joint noise.  The 27 nodes are scattered into a
133-point whole-body layout; unmapped points sit near the head.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..graph import builtin_slgt27
from ..tensor import Rng
from . import skel

SOURCE_POINTS = 133
UPPER_ARM, FOREARM, PALM, FINGER = 0.45, 0.4, 0.09, 0.08
FINGER_SPREAD = np.radians([-50.0, -20.0, 0.0, 20.0, 45.0])  # thumb .. pinky
DEFAULT_CLASSES = 10
DEFAULT_PER_CLASS = 50


def class_params(label: int, num_classes: int) -> dict:
    """Classes form a grid of arm poses times two motion rhythms.

    Adjacent poses are 25 degrees apart at ten classes, wider than the
    rotation augmentation, so augmented samples stay closest to their own
    class.  The two rhythms are a small slow forearm swing with fast finger
    motion, and a wide fast swing with slow finger motion.
    """
    poses = -(-num_classes // 2)
    pose, rhythm = label % poses, label // poses
    frac = pose / max(poses - 1, 1)
    return {
        "shoulder_deg": -150.0 + 100.0 * frac,
        "elbow_deg": 30.0 + 90.0 * ((2 * pose) % poses) / max(poses - 1, 1),
        "cycles": 1.0 if rhythm == 0 else 3.0,
        "grip_cycles": 3.0 if rhythm == 0 else 1.0,
        "swing_deg": 10.0 if rhythm == 0 else 40.0,
    }


def _arm(shoulder, sh_deg, el_deg, opening, side):
    """Joint positions for one arm; ``side`` is +1 for the left arm (image right)."""
    a = math.radians(sh_deg)
    elbow = shoulder + UPPER_ARM * np.array([side * -math.cos(a), math.sin(a)])
    b = a + math.radians(el_deg)
    direction = np.array([side * -math.cos(b), math.sin(b)])
    wrist = elbow + FOREARM * direction
    fingers = []
    for spread in FINGER_SPREAD:
        phi = b + side * spread
        d = np.array([side * -math.cos(phi), math.sin(phi)])
        base = wrist + PALM * d
        bend = phi + side * (1.0 - opening) * 1.2
        tip = base + FINGER * np.array([side * -math.cos(bend), math.sin(bend)])
        fingers += [base, tip]
    return elbow, wrist, fingers


def generate_sequence(label: int, num_classes: int, rng, length=None, channels: int = 2) -> np.ndarray:
    """One ``T x 133 x C`` sample of class ``label``."""
    gen = getattr(rng, "generator", rng)
    cp = class_params(label, num_classes)
    t = int(gen.integers(80, 151)) if length is None else int(length)
    sh = cp["shoulder_deg"] + gen.normal(0, 4.0)
    el = cp["elbow_deg"] + gen.normal(0, 4.0)
    cycles = cp["cycles"] * gen.uniform(0.9, 1.1)
    grip = cp["grip_cycles"] * gen.uniform(0.9, 1.1)
    phase = gen.uniform(0, 2 * math.pi)
    lag = gen.normal(0, 0.3)
    scale = gen.uniform(0.9, 1.1)
    offset = gen.uniform(-0.2, 0.2, 2)
    head_pts = gen.normal(0, 0.05, (SOURCE_POINTS, 2))

    graph = builtin_slgt27()
    src = np.asarray(graph.reduction_map)
    out = np.zeros((t, SOURCE_POINTS, channels))
    nose = np.array([0.0, 1.65])
    shoulders = {+1: np.array([0.4, 1.2]), -1: np.array([-0.4, 1.2])}
    for f in range(t):
        u = f / 150.0
        nodes = np.zeros((27, 2))
        nodes[0] = nose
        nodes[1], nodes[2] = shoulders[+1], shoulders[-1]
        for side, (ei, wi, fi) in ((+1, (3, 5, 7)), (-1, (4, 6, 17))):
            p = phase + (lag if side > 0 else 0.0)
            swing = cp["swing_deg"] * math.sin(2 * math.pi * cycles * u + p)
            opening = 0.5 + 0.5 * math.sin(2 * math.pi * grip * u + p)
            elbow, wrist, fingers = _arm(shoulders[side], sh, el + swing, opening, side)
            nodes[ei], nodes[wi] = elbow, wrist
            nodes[fi : fi + 10] = fingers
        pts = nose + head_pts
        pts[src] = nodes
        out[f, :, :2] = pts * scale + offset
    out[..., :2] += gen.normal(0, 0.01, (t, SOURCE_POINTS, 2))
    if channels == 3:
        out[..., 2] = gen.uniform(0.7, 1.0, (t, SOURCE_POINTS))
    return out


def synth_dataset(out_dir, num_classes: int = DEFAULT_CLASSES, samples_per_class: int = DEFAULT_PER_CLASS,
                  seed: int = 0, test_fraction: float = 0.2, channels: int = 2) -> Path:
    """Write SKEL1 files plus ``manifest.json`` to ``out_dir``; returns the manifest path.

    Within each class a seeded ``test_fraction`` of the samples is marked
    ``"split": "test"``.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = Rng(seed)
    n_test = int(round(samples_per_class * test_fraction))
    samples = []
    for c in range(num_classes):
        test_ids = set(root.spawn(1, c).permutation(samples_per_class)[:n_test].tolist())
        for i in range(samples_per_class):
            frames = generate_sequence(c, num_classes, root.spawn(0, c, i), channels=channels)
            name = f"c{c:03d}_{i:04d}.skel"
            skel.save(out / name, skel.KeypointSequence(frames.astype(np.float32), label=c, signer_id=i % 5, fps=25.0))
            samples.append({"file": name, "label": c, "split": "test" if i in test_ids else "train"})
    manifest = out / "manifest.json"
    skel.write_manifest(manifest, [f"gloss{c:03d}" for c in range(num_classes)], samples)
    return manifest
