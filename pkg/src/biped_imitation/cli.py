"""Command-line driver: ``biped-imitation {extract,smooth,train,evaluate,pipeline}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric error.  Diagnostics go to stderr and name the failing stage.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .angles import AngleTrajectory, extract_trajectory, read_angle_csv, write_angle_csv
from .checkpoint import load_checkpoint, save_checkpoint
from .dqn import TrainResult, greedy_rollout, train
from .env import LIMB_NAMES, EnvConfig, ImitationEnv, JointLimits, SkeletonModel
from .keypoints import KEYPOINT_NAMES, fill_gaps, parse_keypoint_file
from .metrics import TAG_FOR_VARIANT, ComparisonReport, compare, emit_report
from .nn import init_network
from .smoothing import sg_coefficients, smooth_trajectory

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# face keypoints are not used by any joint; leave their gaps alone
_BODY_KEYPOINTS = tuple(k for k in KEYPOINT_NAMES if not k.endswith(("eye", "ear")))

D = cfgmod.DEFAULTS


class StageError(Exception):
    def __init__(self, stage: str, code: int, message: str):
        self.stage = stage
        self.code = code
        super().__init__(message)


@contextmanager
def stage(name: str):
    """Translate exceptions raised inside a pipeline stage into exit codes."""
    try:
        yield
    except StageError:
        raise
    except cfgmod.ConfigError as exc:
        raise StageError(name, EXIT_USAGE, str(exc)) from exc
    except ArithmeticError as exc:
        raise StageError(name, EXIT_NUMERIC, str(exc)) from exc
    except (ValueError, OSError, KeyError) as exc:
        raise StageError(name, EXIT_DATA, str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pose(text: str):
    if text in ("demo", "zero"):
        return text
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'demo', 'zero' or 8 comma-separated degrees") from None


# (flag, config path, type, help); help gets the default appended
_KEYPOINT_FLAGS = [
    ("--max-gap", ("keypoints", "max_gap"), int, "longest interior run of missing frames to interpolate"),
    ("--min-confidence", ("keypoints", "min_confidence"), float, "keypoints below this confidence are missing"),
    ("--frame-rate", ("keypoints", "frame_rate"), float, "override the frame rate (fps); CSVs carry none"),
    ("--drop", ("angles", "drop"), float, "pixel length of the vertical reference segment"),
]
_SMOOTH_FLAGS = [
    ("--sg-window", ("smoothing", "window"), int, "Savitzky-Golay window length (odd, >= 3)"),
    ("--sg-order", ("smoothing", "order"), int, "Savitzky-Golay polynomial order (< window)"),
    ("--sg-edge", ("smoothing", "edge"), str, "edge handling, 'copy' or 'mirror'"),
]
_TRAIN_FLAGS = [
    ("--epochs", ("trainer", "epochs"), int, "training episodes"),
    ("--gamma", ("trainer", "gamma"), float, "discount factor"),
    ("--batch-size", ("trainer", "batch_size"), int, "replay minibatch size"),
    ("--lr", ("trainer", "lr"), float, "Adam learning rate"),
    ("--sync-every", ("trainer", "sync_every"), int, "updates between target network copies"),
    ("--capacity", ("trainer", "capacity"), int, "replay memory size"),
    ("--eps-start", ("trainer", "eps_start"), float, "initial exploration rate"),
    ("--eps-end", ("trainer", "eps_end"), float, "final exploration rate"),
    ("--reward-scale", ("trainer", "reward_scale"), float, "reward multiplier in replay (null = 1/step)"),
    ("--checkpoint-every", ("trainer", "checkpoint_every"), int, "also write a checkpoint every N epochs (0 = off)"),
    ("--hidden", ("network", "hidden"), _int_list, "comma-separated hidden layer widths"),
    ("--activation", ("network", "activation"), str, "hidden activation, relu or tanh"),
    ("--variant", ("network", "variant"), str, "network variant, dense (F) or conv1d (C)"),
    ("--output-dim", ("network", "output_dim"), int, "network outputs; only the first 2*joints are actions"),
    ("--joints", ("env", "joints"), _csv_list, "comma-separated controlled joints"),
    ("--step-deg", ("env", "step_deg"), float, "angle change per action in degrees"),
    ("--initial-pose", ("env", "initial_pose"), _pose, "'demo', 'zero' or 8 comma-separated degrees"),
    ("--body", ("body", "config"), str, "JSON file with limb lengths and joint limits"),
]


def _show(value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return "null" if value is None else str(value)


def _add_flags(p, flags):
    for flag, (sect, key), typ, text in flags:
        p.add_argument(flag, type=typ, default=None, dest=f"{sect}.{key}", metavar=key.upper(),
                       help=f"{text} (default: {_show(D[sect][key])})")


def _overrides(args) -> dict:
    out: dict = {}
    for name, value in vars(args).items():
        if "." in name and value is not None:
            sect, key = name.split(".", 1)
            out.setdefault(sect, {})[key] = value
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def _pipeline(args) -> cfgmod.Pipeline:
    with stage("config"):
        raw = cfgmod.load_config(args.config, _overrides(args))
        return cfgmod.build(raw)


def _frame_rate(pipe) -> float:
    fr = pipe.raw["keypoints"]["frame_rate"]
    return 30.0 if fr is None else float(fr)


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    with stage("output"):
        out.mkdir(parents=True, exist_ok=True)
    return out / name


# stages ---------------------------------------------------------------------

def run_extract(pipe, path) -> AngleTrajectory:
    kp = pipe.raw["keypoints"]
    with stage("parse"):
        seq = parse_keypoint_file(path, kp["frame_rate"], kp["min_confidence"])
    with stage("fill_gaps"):
        seq = fill_gaps(seq, kp["max_gap"], _BODY_KEYPOINTS)
    with stage("extract"):
        return extract_trajectory(seq, drop=pipe.raw["angles"]["drop"])


def run_smooth(pipe, traj: AngleTrajectory) -> AngleTrajectory:
    sm = pipe.raw["smoothing"]
    with stage("smooth"):
        return smooth_trajectory(traj, sg_coefficients(sm["window"], sm["order"], sm["edge"]))


def _body_dict(pipe) -> dict:
    return {"limb_lengths": {n: getattr(pipe.model, n) for n in LIMB_NAMES},
            "limits_deg": pipe.limits.to_degrees()}


def _metadata(pipe, epochs_done: int) -> dict:
    tr = dict(pipe.raw["trainer"])
    tr["seed"] = pipe.raw["seed"]
    return {"env": pipe.env.to_dict(), "body": _body_dict(pipe), "trainer": tr, "epochs_done": epochs_done}


def write_train_log(log, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "mse", "rmse", "epsilon", "total_reward"))
        for e in log:
            w.writerow((e.epoch, repr(e.mse), repr(e.rmse), repr(e.epsilon), repr(e.total_reward)))


def read_train_log(path) -> list[tuple[int, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["epoch", "mse", "rmse"]:
        raise ValueError(f"{path}: not a training log")
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:]]


def run_train(pipe, demo: AngleTrajectory, out_dir: Path, name: str = "checkpoint") -> tuple[TrainResult, Path]:
    with stage("environment"):
        env = ImitationEnv(demo, pipe.model, pipe.limits, pipe.env)
    every = pipe.checkpoint_every

    def on_epoch(epoch, result):
        if every and (epoch + 1) % every == 0:
            save_checkpoint(out_dir / f"{name}_epoch{epoch + 1:04d}.ckpt", result.params, result.adam,
                            _metadata(pipe, epoch + 1))

    with stage("train"), np.errstate(over="raise", divide="raise", invalid="raise"):
        result = train(env, pipe.network, pipe.trainer, on_epoch=on_epoch)
        ckpt = out_dir / f"{name}.ckpt"
        save_checkpoint(ckpt, result.params, result.adam, _metadata(pipe, pipe.trainer.epochs))
        write_train_log(result.log, out_dir / "train_log.csv")
    return result, ckpt


def _env_from_metadata(meta: dict, demo: AngleTrajectory) -> ImitationEnv:
    body = meta.get("body", {})
    model = SkeletonModel(**body["limb_lengths"]) if "limb_lengths" in body else None
    limits = JointLimits.from_degrees(body["limits_deg"]) if "limits_deg" in body else None
    env_cfg = EnvConfig(**meta["env"]) if "env" in meta else None
    return ImitationEnv(demo, model, limits, env_cfg)


def run_evaluate(checkpoints, demo: AngleTrajectory, out_dir: Path, case: str = "demo",
                 logs=None, with_untrained: bool = False) -> ComparisonReport:
    report = ComparisonReport()
    logs = list(logs or [])
    if logs and len(logs) != len(checkpoints):
        raise StageError("evaluate", EXIT_USAGE, "--logs needs one training log per checkpoint")
    for i, path in enumerate(checkpoints):
        with stage("load_checkpoint"):
            params, _, meta = load_checkpoint(path)
        tag = TAG_FOR_VARIANT[params.spec.variant]
        if tag in report.cases.get(case, {}):
            raise StageError("evaluate", EXIT_USAGE, f"two checkpoints of the same network variant ({tag})")
        with stage("evaluate"):
            env = _env_from_metadata(meta, demo)
            if params.spec.input_dim != env.config.state_dim or params.spec.output_dim < env.n_actions:
                raise ValueError(
                    f"{path}: network {params.spec.input_dim}->{params.spec.output_dim} does not fit an "
                    f"environment with state size {env.config.state_dim} and {env.n_actions} actions")
            roll = greedy_rollout(params, env)
            limits_ok = env.limits.contains(roll.trajectory.angles)
            report.add(case, compare(roll.trajectory, demo, tag, limits_ok))
            if with_untrained:
                base = greedy_rollout(init_network(params.spec, params.seed), env)
                report.add(f"{case}_untrained", compare(base.trajectory, demo, tag,
                                                        env.limits.contains(base.trajectory.angles)))
            if logs:
                report.loss_curves[tag] = read_train_log(logs[i])
    with stage("report"):
        emit_report(report, out_dir)
    return report


def _print_report(report: ComparisonReport, out) -> None:
    for case, by_tag in report.cases.items():
        for tag, res in by_tag.items():
            euc = " ".join(f"{g}={v:.4f}" for g, v in res.euclidean.items())
            print(f"{case} [{tag}] euclidean(deg): {euc}; limits_ok={res.limits_ok}", file=out)


# subcommands ------------------------------------------------------------------

def cmd_extract(args) -> int:
    pipe = _pipeline(args)
    traj = run_extract(pipe, args.input)
    dest = Path(args.output) if args.output else _out(args, "angles.csv")
    with stage("write"):
        write_angle_csv(traj, dest)
    print(f"wrote {len(traj)} frames to {dest}")
    return EXIT_OK


def cmd_smooth(args) -> int:
    pipe = _pipeline(args)
    with stage("read"):
        traj = read_angle_csv(args.input, _frame_rate(pipe))
    traj = run_smooth(pipe, traj)
    dest = Path(args.output) if args.output else _out(args, "smoothed.csv")
    with stage("write"):
        write_angle_csv(traj, dest)
    print(f"wrote {len(traj)} frames to {dest}")
    return EXIT_OK


def cmd_train(args) -> int:
    pipe = _pipeline(args)
    with stage("read"):
        demo = read_angle_csv(args.demo, _frame_rate(pipe))
    out = _out(args, "")
    result, ckpt = run_train(pipe, demo, out)
    last = result.log[-1] if result.log else None
    msg = f"trained {len(result.log)} epochs ({result.updates} updates); checkpoint {ckpt}"
    if last is not None:
        msg += f"; final mse {last.mse:.6g}"
    print(msg)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pipe = _pipeline(args)
    with stage("read"):
        demo = read_angle_csv(args.demo, _frame_rate(pipe))
    report = run_evaluate(args.checkpoints, demo, _out(args, ""), args.case, args.logs, args.with_untrained)
    _print_report(report, sys.stdout)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    pipe = _pipeline(args)
    out = _out(args, "")
    raw = run_extract(pipe, args.input)
    with stage("write"):
        write_angle_csv(raw, out / "angles.csv")
    smoothed = run_smooth(pipe, raw)
    with stage("write"):
        write_angle_csv(smoothed, out / "smoothed.csv")
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(pipe.raw, fh, indent=2, sort_keys=True)
            fh.write("\n")
    # train and evaluate on exactly what was written to disk
    with stage("read"):
        demo = read_angle_csv(out / "smoothed.csv", smoothed.frame_rate)
    _, ckpt = run_train(pipe, demo, out)
    report = run_evaluate([ckpt], demo, out / "report", args.case, [out / "train_log.csv"],
                          args.with_untrained)
    _print_report(report, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON config file; flags override its values (default: built-in defaults)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"top-level random seed (default: {D['seed']})")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="directory for outputs (default: current directory)")

    parser = _Parser(prog="biped-imitation", description="Imitation of joint-angle demonstrations with DQN.",
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog="Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric error.")
    parser.add_argument("--config", default=None, help=argparse.SUPPRESS)
    parser.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    parser.add_argument("--out-dir", default=".", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="keypoint JSON -> joint angle CSV (degrees)")
    p.add_argument("input", help="keypoint JSON file or directory of per-frame OpenPose JSON files")
    p.add_argument("-o", "--output", help="output CSV (default: OUT_DIR/angles.csv)")
    p.add_argument("--degrees", action="store_true", default=True,
                   help="write angles in degrees; the only supported unit (default: on)")
    _add_flags(p, _KEYPOINT_FLAGS)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("smooth", parents=[common], help="Savitzky-Golay smoothing of an angle CSV")
    p.add_argument("input", help="angle CSV")
    p.add_argument("-o", "--output", help="output CSV (default: OUT_DIR/smoothed.csv)")
    _add_flags(p, _SMOOTH_FLAGS)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("train", parents=[common], help="train a Q-network to imitate an angle CSV")
    p.add_argument("demo", help="demonstration angle CSV")
    _add_flags(p, _TRAIN_FLAGS)
    p.epilog = "Writes OUT_DIR/checkpoint.ckpt and OUT_DIR/train_log.csv."
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="greedy rollout and comparison report")
    p.add_argument("demo", help="demonstration angle CSV")
    p.add_argument("checkpoints", nargs="+", help="one checkpoint per network variant (F dense, C conv1d)")
    p.add_argument("--logs", nargs="+", default=None,
                   help="training logs, one per checkpoint, for the loss curves (default: none)")
    p.add_argument("--case", default="demo", help="row label in the report tables (default: demo)")
    p.add_argument("--with-untrained", action="store_true",
                   help="add a row for the untrained network rebuilt from the checkpoint seed (default: off)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="extract, smooth, train and evaluate in one go")
    p.add_argument("input", help="keypoint JSON file or directory")
    p.add_argument("--case", default="demo", help="row label in the report tables (default: demo)")
    p.add_argument("--with-untrained", action="store_true",
                   help="add a row for the untrained network (default: off)")
    _add_flags(p, _KEYPOINT_FLAGS + _SMOOTH_FLAGS + _TRAIN_FLAGS)
    p.epilog = "Writes angles.csv, smoothed.csv, config.json, checkpoint.ckpt, train_log.csv and report/."
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"biped-imitation {args.command}: {exc.stage} failed: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
