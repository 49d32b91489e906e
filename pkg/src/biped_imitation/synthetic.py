"""Synthetic demonstrations: a sinusoidal side-view gait and its keypoints."""
from __future__ import annotations

import math

import numpy as np

from .angles import JOINT_INDEX, N_JOINTS, AngleTrajectory
from .keypoints import KEYPOINT_INDEX, N_KEYPOINTS, KeypointSequence

# (mean, amplitude) in degrees and phase offset in cycles, right side; the
# left side runs half a cycle behind.  Amplitudes are kept small enough that a
# 2 degree, one-joint-per-step controller can keep up over a 100-frame cycle.
GAIT_PROFILE = {
    "shoulder": (-2.0, 5.0, 0.5),
    "elbow": (-15.0, 3.0, 0.45),
    "hip": (-6.0, 7.0, 0.0),
    "knee": (14.0, 8.0, 0.2),
}


def gait_degrees(n_frames: int = 100, cycles: float = 1.0, profile=None) -> np.ndarray:
    profile = profile or GAIT_PROFILE
    t = np.arange(n_frames) / n_frames
    out = np.zeros((n_frames, N_JOINTS))
    for part, (mean, amp, phase) in profile.items():
        for side, shift in (("r", 0.0), ("l", 0.5)):
            out[:, JOINT_INDEX[f"{side}-{part}"]] = mean + amp * np.sin(2 * math.pi * (cycles * t + phase + shift))
    return out


def gait_trajectory(n_frames: int = 100, cycles: float = 1.0, frame_rate: float = 30.0,
                    profile=None) -> AngleTrajectory:
    return AngleTrajectory.from_degrees(gait_degrees(n_frames, cycles, profile), frame_rate=frame_rate)


def constant_trajectory(n_frames: int, degrees: dict[str, float]) -> AngleTrajectory:
    deg = np.zeros((n_frames, N_JOINTS))
    for name, value in degrees.items():
        deg[:, JOINT_INDEX[name]] = value
    return AngleTrajectory.from_degrees(deg)


def _limb(theta):
    # image frame, y down: rotate the straight-down unit vector by theta
    return np.stack((-np.sin(theta), np.cos(theta)), axis=-1)


def render_keypoints(traj: AngleTrajectory, scale: float = 400.0, origin=(320.0, 240.0),
                     limbs=(0.15, 0.14, 0.18, 0.18, 0.27), noise_px: float = 0.0,
                     dropout: float = 0.0, seed: int = 0) -> KeypointSequence:
    """Draw keypoints whose measured angles reproduce ``traj``.

    ``limbs`` are upper arm, forearm, thigh, shank and torso lengths in
    metres, ``scale`` pixels per metre.  Optional pixel noise and random
    dropouts (confidence 0) imitate a pose estimator.
    """
    rng = np.random.default_rng(seed)
    upper, fore, thigh, shank, torso = (scale * v for v in limbs)
    a = traj.angles
    n = len(traj)
    xy = np.zeros((n, N_KEYPOINTS, 2))
    hip = np.array(origin, dtype=np.float64)
    shoulder = hip + (0.0, -torso)
    neck = shoulder + (0.0, -0.15 * torso)
    head = neck + (0.0, -0.25 * torso)

    def put(name, value):
        xy[:, KEYPOINT_INDEX[name]] = value

    put("neck", neck)
    put("nose", head + (0.08 * torso, 0.0))
    for side, dy in (("r", 0.0), ("l", 0.0)):
        th_s, th_e = a[:, JOINT_INDEX[f"{side}-shoulder"]], a[:, JOINT_INDEX[f"{side}-elbow"]]
        th_h, th_k = a[:, JOINT_INDEX[f"{side}-hip"]], a[:, JOINT_INDEX[f"{side}-knee"]]
        elbow = shoulder + upper * _limb(th_s)
        knee = hip + thigh * _limb(th_h)
        put(f"{side}-shoulder", shoulder)
        put(f"{side}-elbow", elbow)
        put(f"{side}-wrist", elbow + fore * _limb(th_s + th_e))
        put(f"{side}-hip", hip)
        put(f"{side}-knee", knee)
        put(f"{side}-ankle", knee + shank * _limb(th_h + th_k))
        put(f"{side}-eye", head + (0.05 * torso, -0.03 * torso + dy))
        put(f"{side}-ear", head + (-0.02 * torso, -0.02 * torso + dy))
    conf = np.full((n, N_KEYPOINTS), 0.9)
    if noise_px > 0:
        xy = xy + rng.normal(0.0, noise_px, xy.shape)
    if dropout > 0:
        conf[rng.random(conf.shape) < dropout] = 0.0
    return KeypointSequence(xy, conf, traj.frame_rate)


TOY_CONFIG = {
    "env": {"joints": ["r-knee"], "step_deg": 1.0, "initial_pose": "zero"},
    "network": {"hidden": [64, 64, 64]},
    "trainer": {"epochs": 300},
}
GAIT_CONFIG = {
    "network": {"hidden": [64, 64, 64]},
    "trainer": {"epochs": 500},
}


def write_bundled_data(out_dir) -> None:
    """Regenerate the demonstration files shipped in ``biped_imitation/data``."""
    import json
    from pathlib import Path

    from .angles import write_angle_csv
    from .env import DEFAULT_LIMITS, SkeletonModel, write_body_config
    from .keypoints import write_keypoint_file

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_body_config(out / "body_default.json", SkeletonModel(), DEFAULT_LIMITS)
    write_angle_csv(constant_trajectory(20, {"r-knee": 10.0}), out / "toy_demo.csv")
    write_angle_csv(gait_trajectory(100), out / "gait_demo.csv")
    seq = render_keypoints(gait_trajectory(100), noise_px=0.5, dropout=0.02, seed=0)
    write_keypoint_file(seq, out / "walking_keypoints.json")
    for name, cfg in (("toy_config.json", TOY_CONFIG), ("gait_config.json", GAIT_CONFIG)):
        with open(out / name, "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
