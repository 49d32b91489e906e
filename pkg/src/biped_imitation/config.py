"""Pipeline configuration: JSON file, defaults, and command-line overrides.

Schema (every key optional; defaults shown by ``biped-imitation --help`` and
in ``DEFAULTS`` below)::

    {
      "seed": 0,
      "keypoints": {"frame_rate": null, "min_confidence": 0.05, "max_gap": 5},
      "angles": {"drop": 100.0},
      "smoothing": {"window": 7, "order": 2, "edge": "copy"},
      "body": {"config": null},
      "env": {"joints": [...8 names...], "step_deg": 2.0, "state_dim": 28,
              "initial_pose": "demo", "start_noise_deg": 0.0},
      "network": {"hidden": [768, 768, 768], "activation": "relu",
                  "variant": "dense", "conv_channels": 4, "output_dim": 25},
      "trainer": {"epochs": 500, "gamma": 0.9, "batch_size": 64, "lr": 0.001,
                  "sync_every": 250, "capacity": 10000, "eps_start": 1.0,
                  "eps_end": 0.05, "eps_decay_fraction": 0.5,
                  "reward_scale": null, "checkpoint_every": 0}
    }
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass

from .angles import JOINT_NAMES
from .dqn import TrainerConfig
from .env import DEFAULT_LIMITS, EnvConfig, JointLimits, SkeletonModel, load_body_config
from .nn import NetworkSpec
from .smoothing import EDGE_MODES, sg_coefficients

DEFAULTS = {
    "seed": 0,
    "keypoints": {"frame_rate": None, "min_confidence": 0.05, "max_gap": 5},
    "angles": {"drop": 100.0},
    "smoothing": {"window": 7, "order": 2, "edge": "copy"},
    "body": {"config": None},
    "env": {"joints": list(JOINT_NAMES), "step_deg": 2.0, "state_dim": 28,
            "initial_pose": "demo", "start_noise_deg": 0.0},
    "network": {"hidden": [768, 768, 768], "activation": "relu", "variant": "dense",
                "conv_channels": 4, "output_dim": 25},
    "trainer": {"epochs": 500, "gamma": 0.9, "batch_size": 64, "lr": 0.001,
                "sync_every": 250, "capacity": 10_000, "eps_start": 1.0, "eps_end": 0.05,
                "eps_decay_fraction": 0.5, "reward_scale": None, "checkpoint_every": 0},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    unknown = []
    for key, value in override.items():
        if key not in base:
            unknown.append(f"{where}{key}")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                unknown.append(f"{where}{key} must be an object")
            else:
                try:
                    out[key] = merge(base[key], value, f"{where}{key}.")
                except ConfigError as exc:
                    unknown += exc.errors
        else:
            out[key] = value
    if unknown:
        raise ConfigError([f"unknown or malformed key {u}" for u in unknown])
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}"]) from exc
        if not isinstance(doc, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        cfg = merge(cfg, doc)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


@dataclass
class Pipeline:
    """Typed objects built from a validated config dictionary."""

    raw: dict
    env: EnvConfig
    network: NetworkSpec
    trainer: TrainerConfig
    model: SkeletonModel
    limits: JointLimits
    checkpoint_every: int


def _try(errors, fn, prefix=""):
    try:
        return fn()
    except (ValueError, TypeError, OSError) as exc:
        # constructors join their validation messages with "; "
        msgs = getattr(exc, "errors", None) or str(exc).split("; ")
        errors.extend(prefix + m for m in msgs)
        return None


def build(cfg: dict) -> Pipeline:
    """Validate everything at once and raise one ``ConfigError`` listing all problems."""
    errors: list[str] = []
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        errors.append("seed must be a non-negative integer")
    kp = cfg["keypoints"]
    if not isinstance(kp["max_gap"], int) or kp["max_gap"] < 0:
        errors.append("keypoints.max_gap must be a non-negative integer")
    if not 0.0 <= kp["min_confidence"] <= 1.0:
        errors.append("keypoints.min_confidence must be in [0, 1]")
    if kp["frame_rate"] is not None and not kp["frame_rate"] > 0:
        errors.append("keypoints.frame_rate must be > 0")
    if not cfg["angles"]["drop"] > 0:
        errors.append("angles.drop must be > 0")
    sm = cfg["smoothing"]
    if sm["edge"] not in EDGE_MODES:
        errors.append(f"smoothing.edge must be one of {EDGE_MODES}")
    else:
        _try(errors, lambda: sg_coefficients(sm["window"], sm["order"], sm["edge"]), "smoothing: ")

    model, limits = SkeletonModel(), DEFAULT_LIMITS
    if cfg["body"]["config"] is not None:
        body = _try(errors, lambda: load_body_config(cfg["body"]["config"]), "body.config: ")
        if body:
            model, limits = body

    env_kwargs = dict(cfg["env"])
    env_kwargs["joints"] = tuple(env_kwargs["joints"])
    if not isinstance(env_kwargs["initial_pose"], str):
        env_kwargs["initial_pose"] = tuple(env_kwargs["initial_pose"])
    env = _try(errors, lambda: EnvConfig(**env_kwargs))

    net = cfg["network"]
    spec = None
    if env is not None:
        if net["output_dim"] < env.n_actions:
            errors.append(f"network.output_dim {net['output_dim']} < {env.n_actions} actions")
        sizes = (env.state_dim, *net["hidden"], net["output_dim"])
        spec = _try(errors, lambda: NetworkSpec(sizes, net["activation"], net["variant"], net["conv_channels"]),
                    "network: ")

    tr = dict(cfg["trainer"])
    every = tr.pop("checkpoint_every")
    if not isinstance(every, int) or every < 0:
        errors.append("trainer.checkpoint_every must be a non-negative integer")
    trainer = _try(errors, lambda: TrainerConfig(**tr, seed=cfg["seed"]))
    if errors:
        raise ConfigError(errors)
    return Pipeline(cfg, env, spec, trainer, model, limits, every)

