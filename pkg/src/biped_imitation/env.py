"""Planar kinematic biped that imitates a joint-angle demonstration.

The figure is a side view: both hips sit at the origin, both shoulders one
torso length above, and every limb hangs straight down when all angles are
zero.  Actions nudge one controlled joint by a fixed step, after which the
joint is clamped to its limits.  The reward of a step is how much it lowered
the summed absolute angle error against the demonstration, so the rewards of
an episode add up to ``first error - last error``.

A demonstration of ``T`` frames gives an episode of ``T`` steps with phase
``t / T``.  State ``t`` is compared with frame ``min(t, T - 1)``, so the last
step is scored against the final frame a second time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .angles import JOINT_INDEX, JOINT_NAMES, N_JOINTS, AngleTrajectory

LIMB_NAMES = ("upper_arm", "forearm", "thigh", "shank", "torso")

# proportions of a small (about 80 cm) humanoid robot, metres
DEFAULT_LIMBS = {"upper_arm": 0.15, "forearm": 0.14, "thigh": 0.18, "shank": 0.18, "torso": 0.27}

# degrees, for a figure facing +x in image coordinates (flexion of hip,
# shoulder and elbow is negative, knee flexion positive)
DEFAULT_LIMITS_DEG = {
    "r-shoulder": (-155.0, 60.0), "l-shoulder": (-155.0, 60.0),
    "r-elbow": (-145.0, 5.0), "l-elbow": (-145.0, 5.0),
    "r-hip": (-120.0, 30.0), "l-hip": (-120.0, 30.0),
    "r-knee": (-5.0, 135.0), "l-knee": (-5.0, 135.0),
}

POSITION_NAMES = (
    "r-shoulder", "r-elbow", "r-wrist", "l-shoulder", "l-elbow", "l-wrist",
    "r-hip", "r-knee", "r-ankle", "l-hip", "l-knee", "l-ankle",
)
_POS = {name: i for i, name in enumerate(POSITION_NAMES)}

# (position, coordinate) feeding the 11 position slots of the state vector
POSITION_SLOTS = (
    ("r-knee", 0), ("r-knee", 1), ("l-knee", 0), ("l-knee", 1),
    ("r-ankle", 0), ("r-ankle", 1), ("l-ankle", 0), ("l-ankle", 1),
    ("r-wrist", 0), ("r-wrist", 1), ("l-wrist", 0),
)


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonModel:
    upper_arm: float = DEFAULT_LIMBS["upper_arm"]
    forearm: float = DEFAULT_LIMBS["forearm"]
    thigh: float = DEFAULT_LIMBS["thigh"]
    shank: float = DEFAULT_LIMBS["shank"]
    torso: float = DEFAULT_LIMBS["torso"]

    def __post_init__(self):
        for name in LIMB_NAMES:
            if not getattr(self, name) > 0:
                raise EnvError(f"limb length {name} must be > 0")

    @property
    def total_length(self) -> float:
        return sum(getattr(self, n) for n in LIMB_NAMES)


@dataclass(frozen=True, eq=False)
class JointLimits:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64)
        hi = np.array(self.upper, dtype=np.float64)
        if lo.shape != (N_JOINTS,) or hi.shape != (N_JOINTS,):
            raise EnvError(f"joint limits need {N_JOINTS} entries")
        bad = [JOINT_NAMES[j] for j in np.flatnonzero(~(lo < hi))]
        if bad:
            raise EnvError(f"min must be < max for joints {bad}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_degrees(cls, limits: dict) -> "JointLimits":
        lo = [math.radians(limits[n][0]) for n in JOINT_NAMES]
        hi = [math.radians(limits[n][1]) for n in JOINT_NAMES]
        return cls(lo, hi)

    def to_degrees(self) -> dict:
        # rounded so that whole-degree limits print as such
        return {n: [round(math.degrees(self.lower[j]), 9), round(math.degrees(self.upper[j]), 9)]
                for j, n in enumerate(JOINT_NAMES)}

    def clamp(self, angles) -> np.ndarray:
        return np.clip(angles, self.lower, self.upper)

    def contains(self, angles) -> bool:
        a = np.asarray(angles)
        return bool(np.all((a >= self.lower) & (a <= self.upper)))


DEFAULT_LIMITS = JointLimits.from_degrees(DEFAULT_LIMITS_DEG)


def load_body_config(path) -> tuple[SkeletonModel, JointLimits]:
    """Read ``{"limb_lengths": {...}, "limits_deg": {joint: [min, max]}}``.

    Missing entries fall back to the shipped defaults.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    limbs = {**DEFAULT_LIMBS, **doc.get("limb_lengths", {})}
    unknown = set(limbs) - set(LIMB_NAMES)
    if unknown:
        raise EnvError(f"{path}: unknown limbs {sorted(unknown)}")
    limits = {**DEFAULT_LIMITS_DEG, **{k: tuple(v) for k, v in doc.get("limits_deg", {}).items()}}
    unknown = set(limits) - set(JOINT_NAMES)
    if unknown:
        raise EnvError(f"{path}: unknown joints {sorted(unknown)}")
    return SkeletonModel(**limbs), JointLimits.from_degrees(limits)


def write_body_config(path, model: SkeletonModel, limits: JointLimits) -> None:
    doc = {"limb_lengths": {n: getattr(model, n) for n in LIMB_NAMES},
           "limits_deg": limits.to_degrees()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _down(theta):
    """Unit vector of a limb rotated ``theta`` from straight down."""
    return np.array([math.sin(theta), -math.cos(theta)])


def forward_kinematics(angles, model: SkeletonModel) -> np.ndarray:
    """Joint positions, shape ``(12, 2)`` in ``POSITION_NAMES`` order.

    Hips are the fixed root at the origin; y points up.  Child segments add
    their joint angle to the parent's absolute orientation.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.shape != (N_JOINTS,) or not np.all(np.isfinite(a)):
        raise EnvError("forward_kinematics needs 8 finite angles")
    pos = np.zeros((len(POSITION_NAMES), 2))
    shoulder = np.array([0.0, model.torso])
    for side in "rl":
        th_s = a[JOINT_INDEX[f"{side}-shoulder"]]
        th_e = a[JOINT_INDEX[f"{side}-elbow"]]
        elbow = shoulder + model.upper_arm * _down(th_s)
        pos[_POS[f"{side}-shoulder"]] = shoulder
        pos[_POS[f"{side}-elbow"]] = elbow
        pos[_POS[f"{side}-wrist"]] = elbow + model.forearm * _down(th_s + th_e)
        th_h = a[JOINT_INDEX[f"{side}-hip"]]
        th_k = a[JOINT_INDEX[f"{side}-knee"]]
        knee = model.thigh * _down(th_h)
        pos[_POS[f"{side}-knee"]] = knee
        pos[_POS[f"{side}-ankle"]] = knee + model.shank * _down(th_h + th_k)
    return pos


@dataclass(frozen=True)
class EnvConfig:
    """``joints`` are the controlled joints (2 actions each).

    ``initial_pose`` is ``"demo"`` (clamped first demo frame), ``"zero"`` or a
    sequence of 8 angles in degrees.  ``start_noise_deg`` adds seeded uniform
    noise to the controlled joints at reset.
    """

    joints: tuple = JOINT_NAMES
    step_deg: float = 2.0
    state_dim: int = 28
    initial_pose: str | tuple = "demo"
    start_noise_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not isinstance(self.initial_pose, str):
            object.__setattr__(self, "initial_pose", tuple(float(v) for v in self.initial_pose))
        errors = self.validate()
        if errors:
            raise EnvError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if not self.joints:
            errors.append("env.joints must name at least one joint")
        unknown = [j for j in self.joints if j not in JOINT_INDEX]
        if unknown:
            errors.append(f"env.joints has unknown names {unknown}")
        if len(set(self.joints)) != len(self.joints):
            errors.append("env.joints has duplicates")
        if not self.step_deg > 0:
            errors.append("env.step_deg must be > 0")
        if self.state_dim < 1:
            errors.append("env.state_dim must be >= 1")
        if isinstance(self.initial_pose, str):
            if self.initial_pose not in ("demo", "zero"):
                errors.append("env.initial_pose must be 'demo', 'zero' or 8 angles")
        elif len(self.initial_pose) != N_JOINTS:
            errors.append("env.initial_pose must list 8 angles")
        if self.start_noise_deg < 0:
            errors.append("env.start_noise_deg must be >= 0")
        return errors

    @property
    def step(self) -> float:
        return math.radians(self.step_deg)

    @property
    def n_actions(self) -> int:
        return 2 * len(self.joints)

    def to_dict(self) -> dict:
        pose = self.initial_pose if isinstance(self.initial_pose, str) else list(self.initial_pose)
        return {"joints": list(self.joints), "step_deg": self.step_deg, "state_dim": self.state_dim,
                "initial_pose": pose, "start_noise_deg": self.start_noise_deg}


@dataclass(frozen=True, eq=False)
class EnvState:
    angles: np.ndarray
    velocities: np.ndarray
    t: int
    n_steps: int
    positions: np.ndarray = field(repr=False)

    @property
    def phase(self) -> float:
        return self.t / self.n_steps

    @property
    def terminal(self) -> bool:
        return self.t >= self.n_steps


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ImitationEnv:
    """Episode dynamics for one demonstration.

    The object itself is immutable; ``reset`` and ``step`` return new
    ``EnvState`` values, so ``step`` is a pure function of its arguments.
    """

    def __init__(self, demo: AngleTrajectory, model: SkeletonModel | None = None,
                 limits: JointLimits | None = None, config: EnvConfig | None = None):
        self.model = model or SkeletonModel()
        self.limits = limits or DEFAULT_LIMITS
        self.config = config or EnvConfig()
        if len(demo) < 1:
            raise EnvError("demonstration is empty")
        self.controlled = np.array([JOINT_INDEX[j] for j in self.config.joints])
        bad = ~demo.valid[:, self.controlled]
        if bad.any():
            f, j = np.argwhere(bad)[0]
            raise EnvError(f"demonstration frame {f} has no valid angle for {self.config.joints[j]}")
        self.demo = demo
        self.targets = self.limits.clamp(np.where(demo.valid, demo.angles, 0.0))
        self.targets.setflags(write=False)
        self.n_steps = len(demo)
        self._reach = self.model.thigh + self.model.shank

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    def error(self, angles, t: int) -> float:
        """Summed absolute error of the controlled joints at step ``t``."""
        c = self.controlled
        frame = min(t, self.n_steps - 1)
        return float(np.sum(np.abs(angles[c] - self.targets[frame, c])))

    def _state(self, angles, velocities, t) -> EnvState:
        angles.setflags(write=False)
        velocities.setflags(write=False)
        return EnvState(angles, velocities, t, self.n_steps, forward_kinematics(angles, self.model))

    def reset(self, seed: int | None = None) -> EnvState:
        pose = self.config.initial_pose
        if pose == "demo":
            angles = self.targets[0].copy()
        elif pose == "zero":
            angles = np.zeros(N_JOINTS)
        else:
            angles = np.radians(np.array(pose, dtype=np.float64))
        if self.config.start_noise_deg > 0:
            rng = np.random.default_rng(seed)
            noise = math.radians(self.config.start_noise_deg)
            angles[self.controlled] += rng.uniform(-noise, noise, len(self.controlled))
        return self._state(self.limits.clamp(angles), np.zeros(N_JOINTS), 0)

    def step(self, state: EnvState, action: int) -> tuple[EnvState, float, bool]:
        if not 0 <= action < self.n_actions:
            raise EnvError(f"action {action} outside [0, {self.n_actions})")
        if state.terminal:
            raise EnvError("episode already finished; call reset")
        j = self.controlled[action // 2]
        delta = self.config.step if action % 2 == 0 else -self.config.step
        angles = state.angles.copy()
        angles[j] = min(max(angles[j] + delta, self.limits.lower[j]), self.limits.upper[j])
        t = state.t + 1
        reward = self.error(state.angles, state.t) - self.error(angles, t)
        new = self._state(angles, angles - state.angles, t)
        return new, reward, new.terminal

    def encode_state(self, state: EnvState) -> np.ndarray:
        """Network input vector.

        Slots 0-7 joint angles mapped to [-1, 1] by their limits, 8-15 angle
        change over the last step divided by the action step, 16 phase,
        17-27 ``POSITION_SLOTS`` coordinates divided by leg length.  The
        vector is cut or zero-padded to ``config.state_dim``.
        """
        lo, hi = self.limits.lower, self.limits.upper
        pos = state.positions
        parts = np.concatenate((
            2.0 * (state.angles - lo) / (hi - lo) - 1.0,
            state.velocities / self.config.step,
            [state.phase],
            [pos[_POS[name], c] / self._reach for name, c in POSITION_SLOTS],
        ))
        dim = self.config.state_dim
        if parts.size >= dim:
            return parts[:dim]
        return np.concatenate((parts, np.zeros(dim - parts.size)))

    def executed(self, states: Sequence[EnvState]) -> AngleTrajectory:
        """Poses of the first ``T`` states, one per demonstration frame."""
        angles = np.array([s.angles for s in states[:self.n_steps]])
        return AngleTrajectory(angles, np.ones(angles.shape, dtype=bool), self.demo.frame_rate)
