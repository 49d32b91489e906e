"""Planar joint angles from body keypoints.

Eight joints are measured, always in this order::

    r-shoulder, l-shoulder, r-elbow, l-elbow, r-hip, l-hip, r-knee, l-knee

Each angle is the signed turn from a reference direction to the distal limb
segment.  For elbows and knees the reference is the proximal segment
(shoulder->elbow, hip->knee), so a straight limb reads 0.  For shoulders and
hips the reference is a point straight below the joint, so an arm or leg
hanging vertically reads 0.  Positive angles rotate from +x towards +y in the
coordinates the keypoints are given in (image pixels, y down).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .keypoints import KEYPOINT_INDEX, KeypointSequence

JOINT_NAMES = (
    "r-shoulder", "l-shoulder", "r-elbow", "l-elbow",
    "r-hip", "l-hip", "r-knee", "l-knee",
)
N_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
CSV_COLUMNS = ("frame",) + tuple(n.replace("-", "_") for n in JOINT_NAMES)

VERTICAL_REF = "VERTICAL_REF"
DEFAULT_DROP = 100.0


class DegenerateSegmentError(ValueError):
    pass


class AngleFileError(ValueError):
    pass


@dataclass(frozen=True)
class JointDefinition:
    name: str
    p1: str
    p2: str
    p3: str

    def __post_init__(self):
        if self.p2 == VERTICAL_REF:
            raise ValueError("the vertex of a joint must be a real keypoint")

    @property
    def keypoints(self) -> tuple[str, ...]:
        return tuple(p for p in (self.p1, self.p2, self.p3) if p != VERTICAL_REF)


def _side_defs(side: str) -> dict[str, JointDefinition]:
    s = side
    return {
        f"{s}-shoulder": JointDefinition(f"{s}-shoulder", VERTICAL_REF, f"{s}-shoulder", f"{s}-elbow"),
        f"{s}-elbow": JointDefinition(f"{s}-elbow", f"{s}-shoulder", f"{s}-elbow", f"{s}-wrist"),
        f"{s}-hip": JointDefinition(f"{s}-hip", VERTICAL_REF, f"{s}-hip", f"{s}-knee"),
        f"{s}-knee": JointDefinition(f"{s}-knee", f"{s}-hip", f"{s}-knee", f"{s}-ankle"),
    }


_DEFS = {**_side_defs("r"), **_side_defs("l")}
DEFAULT_JOINTS = tuple(_DEFS[name] for name in JOINT_NAMES)


def three_point_angle(p1, p2, p3) -> float:
    """Signed angle (radians) between directions p1->p2 and p2->p3.

    Computed as ``atan2(cross, dot)`` of the two direction vectors, so it is
    defined for vertical segments and perpendicular slopes alike.  Agrees
    with the slope formula ``atan((m2 - m1) / (1 + m1*m2))`` modulo pi.
    """
    ux, uy = p2[0] - p1[0], p2[1] - p1[1]
    vx, vy = p3[0] - p2[0], p3[1] - p2[1]
    if (ux == 0 and uy == 0) or (vx == 0 and vy == 0):
        raise DegenerateSegmentError(f"coincident points in {p1}, {p2}, {p3}")
    return math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)


def slope_angle(p1, p2, p3) -> float:
    """The textbook two-slope formula; undefined for vertical segments."""
    m1 = (p2[1] - p1[1]) / (p2[0] - p1[0])
    m2 = (p3[1] - p2[1]) / (p3[0] - p2[0])
    return math.atan((m2 - m1) / (1 + m1 * m2))


def vertical_reference(p, drop: float = DEFAULT_DROP) -> tuple[float, float]:
    """Point ``drop`` pixels straight below ``p`` (image y grows downward)."""
    return (p[0], p[1] + drop)


def _angles_vectorized(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]
    return np.arctan2(cross, dot)


@dataclass(frozen=True, eq=False)
class AngleTrajectory:
    """Per-frame joint angles in radians with validity flags.

    ``angles`` and ``valid`` have shape ``(n_frames, 8)``.
    """

    angles: np.ndarray
    valid: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        angles = np.array(self.angles, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if angles.ndim != 2 or angles.shape[1] != N_JOINTS or angles.shape[0] == 0:
            raise ValueError(f"angles must have shape (n>0, {N_JOINTS}), got {angles.shape}")
        if valid.shape != angles.shape:
            raise ValueError("valid flags must match angles in shape")
        angles.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return self.angles.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AngleTrajectory):
            return NotImplemented
        return (np.array_equal(self.valid, other.valid)
                and np.array_equal(np.where(self.valid, self.angles, 0.0),
                                   np.where(other.valid, other.angles, 0.0)))

    def joint(self, name: str) -> np.ndarray:
        return self.angles[:, JOINT_INDEX[name]]

    @classmethod
    def from_degrees(cls, degrees, valid=None, frame_rate=30.0) -> "AngleTrajectory":
        degrees = np.asarray(degrees, dtype=np.float64)
        if valid is None:
            valid = np.ones(degrees.shape, dtype=bool)
        return cls(np.radians(degrees), valid, frame_rate)


def extract_trajectory(seq: KeypointSequence,
                       defs: Sequence[JointDefinition] = DEFAULT_JOINTS,
                       drop: float = DEFAULT_DROP) -> AngleTrajectory:
    """Measure the joint angles of every frame of ``seq``.

    An angle is invalid when any keypoint it depends on is missing, or when a
    limb segment has zero length.
    """
    if len(seq) == 0:
        raise ValueError("keypoint sequence is empty")
    if len(defs) != N_JOINTS:
        raise ValueError(f"expected {N_JOINTS} joint definitions")
    missing = seq.missing
    xy = seq.xy
    angles = np.zeros((len(seq), N_JOINTS))
    valid = np.zeros((len(seq), N_JOINTS), dtype=bool)
    for j, d in enumerate(defs):
        vertex = xy[:, KEYPOINT_INDEX[d.p2]]
        distal = xy[:, KEYPOINT_INDEX[d.p3]]
        if d.p1 == VERTICAL_REF:
            # reference runs from the vertex down to the dropped point
            below = np.stack(vertical_reference((vertex[:, 0], vertex[:, 1]), drop), axis=-1)
            u = below - vertex
        else:
            u = vertex - xy[:, KEYPOINT_INDEX[d.p1]]
        v = distal - vertex
        ok = ~missing[:, [KEYPOINT_INDEX[k] for k in d.keypoints]].any(axis=1)
        ok &= (np.abs(u).sum(axis=1) > 0) & (np.abs(v).sum(axis=1) > 0)
        angles[:, j] = np.where(ok, _angles_vectorized(u, v), 0.0)
        valid[:, j] = ok
    return AngleTrajectory(angles, valid, seq.frame_rate)


def write_angle_csv(traj: AngleTrajectory, path) -> None:
    """Degrees, six decimals, invalid angles as empty cells."""
    deg = np.degrees(traj.angles)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(traj)):
            row = [str(i)]
            for j in range(N_JOINTS):
                row.append(f"{deg[i, j] + 0.0:.6f}" if traj.valid[i, j] else "")
            w.writerow(row)


def read_angle_csv(path, frame_rate: float = 30.0) -> AngleTrajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise AngleFileError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise AngleFileError(f"{path}: no data rows")
    deg = np.zeros((len(body), N_JOINTS))
    valid = np.zeros((len(body), N_JOINTS), dtype=bool)
    for i, row in enumerate(body):
        if len(row) != len(CSV_COLUMNS):
            raise AngleFileError(f"{path}: line {i + 2}: expected {len(CSV_COLUMNS)} cells, got {len(row)}")
        if row[0] != str(i):
            raise AngleFileError(f"{path}: line {i + 2}: frame index {row[0]!r}, expected {i}")
        for j, cell in enumerate(row[1:]):
            if cell.strip():
                try:
                    deg[i, j] = float(cell)
                except ValueError:
                    raise AngleFileError(f"{path}: line {i + 2}: bad number {cell!r}") from None
                valid[i, j] = True
    return AngleTrajectory(np.radians(deg), valid, frame_rate)
