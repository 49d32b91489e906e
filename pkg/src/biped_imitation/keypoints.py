"""Reading, writing and gap-filling of 18-point body keypoint sequences.

Two on-disk layouts are understood:

* a single JSON document ``{"frame_rate": 30, "frames": [...]}`` where every
  frame is a list of 18 ``[x, y, confidence]`` triples (or, equivalently, a
  flat list of 54 numbers);
* a directory with one JSON file per frame, as written by OpenPose with
  ``--write_json``.  Each file holds ``{"people": [{"pose_keypoints_2d":
  [54 numbers]}]}``; the first person is used and an empty ``people`` list is
  an all-missing frame.  A bare list of 54 numbers per file is accepted too.

Coordinates are image pixels, ``y`` pointing down.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KEYPOINT_NAMES = (
    "nose", "neck",
    "r-shoulder", "r-elbow", "r-wrist",
    "l-shoulder", "l-elbow", "l-wrist",
    "r-hip", "r-knee", "r-ankle",
    "l-hip", "l-knee", "l-ankle",
    "r-eye", "l-eye", "r-ear", "l-ear",
)
N_KEYPOINTS = len(KEYPOINT_NAMES)
KEYPOINT_INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}

DEFAULT_FRAME_RATE = 30.0
DEFAULT_MIN_CONFIDENCE = 0.05


class KeypointError(ValueError):
    """Base class for keypoint input problems."""


class KeypointParseError(KeypointError):
    pass


class KeypointStructureError(KeypointError):
    pass


class UnrecoverableTrackError(KeypointError):
    pass


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class KeypointFrame:
    keypoints: tuple
    timestamp: int

    def __post_init__(self):
        if len(self.keypoints) != N_KEYPOINTS:
            raise KeypointStructureError(
                f"frame {self.timestamp}: expected {N_KEYPOINTS} keypoints, got {len(self.keypoints)}")

    def __getitem__(self, name: str) -> Keypoint:
        return self.keypoints[KEYPOINT_INDEX[name]]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KeypointSequence:
    """Time-ordered keypoints of a single subject.

    ``xy`` has shape ``(n_frames, 18, 2)`` and ``confidence`` shape
    ``(n_frames, 18)``.  Frame ``i`` has timestamp ``i``.  A keypoint is missing
    when its confidence is zero or below ``min_confidence``.
    """

    xy: np.ndarray
    confidence: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE
    min_confidence: float = DEFAULT_MIN_CONFIDENCE

    def __post_init__(self):
        object.__setattr__(self, "xy", _frozen(self.xy))
        object.__setattr__(self, "confidence", _frozen(self.confidence))
        n = self.xy.shape[0]
        if self.xy.shape != (n, N_KEYPOINTS, 2) or self.confidence.shape != (n, N_KEYPOINTS):
            raise KeypointStructureError(
                f"bad array shapes xy={self.xy.shape} confidence={self.confidence.shape}")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be > 0")
        bad = ~((self.confidence >= 0.0) & (self.confidence <= 1.0))
        if bad.any():
            f, k = np.argwhere(bad)[0]
            raise KeypointStructureError(
                f"frame {f}: {KEYPOINT_NAMES[k]} confidence {self.confidence[f, k]} outside [0, 1]")

    def __len__(self) -> int:
        return self.xy.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, KeypointSequence):
            return NotImplemented
        return (self.frame_rate == other.frame_rate
                and self.min_confidence == other.min_confidence
                and np.array_equal(self.xy, other.xy)
                and np.array_equal(self.confidence, other.confidence))

    @property
    def missing(self) -> np.ndarray:
        c = self.confidence
        return (c <= 0.0) | (c < self.min_confidence)

    def frame(self, i: int) -> KeypointFrame:
        kps = tuple(Keypoint(float(x), float(y), float(c))
                    for (x, y), c in zip(self.xy[i], self.confidence[i]))
        return KeypointFrame(kps, i)

    @property
    def frames(self) -> list[KeypointFrame]:
        return [self.frame(i) for i in range(len(self))]

    @classmethod
    def from_frames(cls, frames: Sequence[KeypointFrame], frame_rate=DEFAULT_FRAME_RATE,
                    min_confidence=DEFAULT_MIN_CONFIDENCE) -> "KeypointSequence":
        for i, fr in enumerate(frames):
            if fr.timestamp != i:
                raise KeypointStructureError(f"frame {i}: timestamp {fr.timestamp} out of sequence")
        arr = np.array([[(k.x, k.y, k.confidence) for k in fr.keypoints] for fr in frames],
                       dtype=np.float64).reshape(len(frames), N_KEYPOINTS, 3)
        return cls(arr[..., :2], arr[..., 2], frame_rate, min_confidence)


def _frame_from_json(raw, index: int) -> np.ndarray:
    """Return an (18, 3) array from one frame in any accepted shape."""
    if isinstance(raw, dict):
        people = raw.get("people")
        if people is None:
            raise KeypointParseError(f"frame {index}: object without 'people'")
        if not people:
            return np.zeros((N_KEYPOINTS, 3))
        raw = people[0].get("pose_keypoints_2d")
        if raw is None:
            raise KeypointParseError(f"frame {index}: person without 'pose_keypoints_2d'")
    if not isinstance(raw, list):
        raise KeypointParseError(f"frame {index}: expected a list, got {type(raw).__name__}")
    try:
        if raw and all(isinstance(v, (int, float)) for v in raw):
            if len(raw) % 3:
                raise KeypointStructureError(
                    f"frame {index}: flat layout length {len(raw)} is not a multiple of 3")
            arr = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
        else:
            for j, kp in enumerate(raw):
                if not isinstance(kp, list) or len(kp) != 3:
                    raise KeypointParseError(f"frame {index}: keypoint {j} is not an [x, y, confidence] triple")
            arr = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, KeypointError):
            raise
        raise KeypointParseError(f"frame {index}: non-numeric keypoint data") from exc
    if arr.shape[0] != N_KEYPOINTS:
        raise KeypointStructureError(
            f"frame {index}: expected {N_KEYPOINTS} keypoints, got {arr.shape[0]}")
    return arr


def _load_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise KeypointParseError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _build(frames: Iterable[np.ndarray], frame_rate, min_confidence) -> KeypointSequence:
    arr = np.stack(list(frames)) if frames else np.zeros((0, N_KEYPOINTS, 3))
    return KeypointSequence(arr[..., :2], arr[..., 2], frame_rate, min_confidence)


def parse_keypoint_file(path, frame_rate: float | None = None,
                        min_confidence: float = DEFAULT_MIN_CONFIDENCE) -> KeypointSequence:
    """Load a keypoint sequence from a JSON file or a per-frame JSON directory.

    ``frame_rate`` overrides the value stored in the file; directories carry no
    rate and fall back to 30 fps.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"keypoint input not found: {path}")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".json")
        if not files:
            raise KeypointParseError(f"{path}: directory contains no .json frame files")
        frames = [_frame_from_json(_load_json(p), i) for i, p in enumerate(files)]
        rate = DEFAULT_FRAME_RATE if frame_rate is None else frame_rate
        return _build(frames, rate, min_confidence)

    doc = _load_json(path)
    if not isinstance(doc, dict) or "frames" not in doc:
        raise KeypointParseError(f"{path}: top-level object must contain 'frames'")
    if not isinstance(doc["frames"], list) or not doc["frames"]:
        raise KeypointParseError(f"{path}: 'frames' must be a nonempty list")
    rate = doc.get("frame_rate", DEFAULT_FRAME_RATE) if frame_rate is None else frame_rate
    if not isinstance(rate, (int, float)) or rate <= 0:
        raise KeypointParseError(f"{path}: frame_rate must be a positive number")
    frames = [_frame_from_json(f, i) for i, f in enumerate(doc["frames"])]
    return _build(frames, float(rate), min_confidence)


def write_keypoint_file(seq: KeypointSequence, path) -> None:
    """Write ``seq`` in the single-document layout; floats round-trip exactly."""
    frames = [
        [[float(x), float(y), float(c)] for (x, y), c in zip(seq.xy[i], seq.confidence[i])]
        for i in range(len(seq))
    ]
    doc = {"frame_rate": float(seq.frame_rate), "frames": frames}
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def _runs(mask: np.ndarray):
    """Yield (start, stop) of each run of True in a 1-D boolean array."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return zip(edges[::2], edges[1::2])


def fill_gaps(seq: KeypointSequence, max_gap: int,
              keypoints: Iterable[str] | None = None) -> KeypointSequence:
    """Fill missing keypoints along time.

    Interior runs of at most ``max_gap`` frames are linearly interpolated
    (x, y and confidence alike); runs touching either end of the sequence take
    the nearest valid sample.  Longer interior runs stay missing.  Only the
    tracks named in ``keypoints`` are touched (all 18 by default).
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    names = KEYPOINT_NAMES if keypoints is None else tuple(keypoints)
    xy = np.array(seq.xy)
    conf = np.array(seq.confidence)
    missing = seq.missing
    n = len(seq)
    for name in names:
        k = KEYPOINT_INDEX[name]
        miss = missing[:, k]
        if not miss.any():
            continue
        if miss.all():
            raise UnrecoverableTrackError(f"keypoint '{name}' is missing in every frame")
        for start, stop in _runs(miss):
            if start == 0:
                xy[start:stop, k] = xy[stop, k]
                conf[start:stop, k] = conf[stop, k]
            elif stop == n:
                xy[start:stop, k] = xy[start - 1, k]
                conf[start:stop, k] = conf[start - 1, k]
            elif stop - start <= max_gap:
                lo, hi = start - 1, stop
                w = (np.arange(start, stop) - lo) / (hi - lo)
                xy[start:stop, k] = (1 - w)[:, None] * xy[lo, k] + w[:, None] * xy[hi, k]
                conf[start:stop, k] = (1 - w) * conf[lo, k] + w * conf[hi, k]
    return KeypointSequence(xy, conf, seq.frame_rate, seq.min_confidence)
