"""SKEL1 keypoint files and the dataset manifest.

SKEL1 layout, all integers little-endian::

    magic      5 bytes  b"SKEL1"
    version    u8       1
    T          u32      frames
    N          u32      keypoints per frame
    C          u8       channels per keypoint (2 = x, y; 3 = x, y, confidence)
    label      i32      class id, -1 when unlabelled
    signer     i32      signer id, -1 when unknown
    fps        f32      frames per second, 0 when unknown
    payload    T*N*C float32, frame-major then keypoint then channel
    crc32      u32      zlib.crc32 of every preceding byte

The manifest is a JSON object::

    {"format": "slgt-manifest", "version": 1,
     "classes": ["name0", ...],
     "samples": [{"file": "relative/path.skel", "label": 0, "split": "train"}, ...]}
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"SKEL1"
VERSION = 1
_HEADER = struct.Struct("<5sBIIBiif")
MANIFEST_FORMAT = "slgt-manifest"


class SkelFormatError(ValueError):
    pass


class SkelChecksumError(SkelFormatError):
    pass


@dataclass
class KeypointSequence:
    frames: np.ndarray  # T x N x C
    label: int = -1
    signer_id: Optional[int] = None
    fps: Optional[float] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] not in (2, 3):
            raise SkelFormatError(f"frames must be T x N x C with C in (2, 3), got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise SkelFormatError("keypoint coordinates must be finite")
        if self.frames.shape[2] == 3:
            conf = self.frames[..., 2]
            if conf.min(initial=0.0) < 0 or conf.max(initial=0.0) > 1:
                raise SkelFormatError("confidence values must lie in [0, 1]")


def dumps(seq: KeypointSequence) -> bytes:
    t, n, c = seq.frames.shape
    header = _HEADER.pack(
        MAGIC, VERSION, t, n, c, int(seq.label),
        -1 if seq.signer_id is None else int(seq.signer_id),
        0.0 if seq.fps is None else float(seq.fps),
    )
    body = header + np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> KeypointSequence:
    if len(blob) < _HEADER.size + 4 or blob[:5] != MAGIC:
        raise SkelFormatError("not a SKEL1 file (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise SkelChecksumError("SKEL1 checksum mismatch: file is corrupted")
    _, version, t, n, c, label, signer, fps = _HEADER.unpack_from(body)
    if version != VERSION:
        raise SkelFormatError(f"unsupported SKEL1 version {version}")
    expected = _HEADER.size + 4 * t * n * c
    if len(body) != expected:
        raise SkelFormatError(f"payload size {len(body)} does not match header ({expected} bytes)")
    frames = np.frombuffer(body, dtype="<f4", offset=_HEADER.size).reshape(t, n, c).astype(np.float64)
    return KeypointSequence(frames, label, None if signer < 0 else signer, None if fps == 0 else float(fps))


def save(path, seq: KeypointSequence):
    Path(path).write_bytes(dumps(seq))


def load(path) -> KeypointSequence:
    return loads(Path(path).read_bytes())


def write_manifest(path, classes, samples):
    doc = {"format": MANIFEST_FORMAT, "version": 1, "classes": list(classes), "samples": list(samples)}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MANIFEST_FORMAT:
        raise SkelFormatError(f"{path}: not a dataset manifest")
    if doc.get("version") != 1:
        raise SkelFormatError(f"{path}: unsupported manifest version {doc.get('version')}")
    k = len(doc["classes"])
    for s in doc["samples"]:
        if not 0 <= s["label"] < k:
            raise SkelFormatError(f"{path}: label {s['label']} of {s['file']} outside {k} classes")
    return doc
