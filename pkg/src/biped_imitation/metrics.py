"""Comparison metrics between demonstrated and produced joint angles.

All results are in degrees.  Frames where either trajectory marks a needed
angle invalid are left out pairwise.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angles import CSV_COLUMNS, JOINT_INDEX, JOINT_NAMES, AngleTrajectory

# reporting groups, with the left/right joint pair behind each
GROUPS = {
    "Shoulder": ("l-shoulder", "r-shoulder"),
    "Elbow": ("l-elbow", "r-elbow"),
    "Thigh": ("l-hip", "r-hip"),
    "Knee": ("l-knee", "r-knee"),
}
TAGS = ("F", "C")
TABLE_COLUMNS = ("case",) + tuple(f"{tag}.{g}" for tag in TAGS for g in GROUPS)
TAG_FOR_VARIANT = {"dense": "F", "conv1d": "C"}


class MetricError(ValueError):
    pass


def _check_pair(a: AngleTrajectory, b: AngleTrajectory):
    if len(a) != len(b):
        raise MetricError(f"trajectory lengths differ: {len(a)} vs {len(b)}")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{round(float(x), 6) + 0.0:.6f}"


def group_mask(pred: AngleTrajectory, orig: AngleTrajectory, group: str) -> np.ndarray:
    cols = [JOINT_INDEX[j] for j in GROUPS[group]]
    return pred.valid[:, cols].all(axis=1) & orig.valid[:, cols].all(axis=1)


def mean_angle_error(pred: AngleTrajectory, orig: AngleTrajectory, group: str) -> float:
    """Mean over frames of ``avg(orig L, R) - avg(pred L, R)``.

    Positive when the produced angles are smaller than the demonstrated ones.
    """
    _check_pair(pred, orig)
    left, right = (JOINT_INDEX[j] for j in GROUPS[group])
    mask = group_mask(pred, orig, group)
    if not mask.any():
        return math.nan
    p = np.degrees(pred.angles[mask])
    o = np.degrees(orig.angles[mask])
    diff = (o[:, left] + o[:, right]) / 2 - (p[:, left] + p[:, right]) / 2
    return float(np.mean(diff))


def euclidean_distance(pred, orig) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    orig = np.asarray(orig, dtype=np.float64)
    if pred.shape != orig.shape:
        raise MetricError(f"series shapes differ: {pred.shape} vs {orig.shape}")
    d = pred - orig
    return float(np.sqrt(np.sum(d * d)))


def group_euclidean(pred: AngleTrajectory, orig: AngleTrajectory, group: str) -> float:
    """Euclidean distance over both sides of a group, in degrees."""
    _check_pair(pred, orig)
    cols = [JOINT_INDEX[j] for j in GROUPS[group]]
    mask = group_mask(pred, orig, group)
    return euclidean_distance(np.degrees(pred.angles[mask][:, cols]),
                              np.degrees(orig.angles[mask][:, cols]))


def joint_euclidean(pred: AngleTrajectory, orig: AngleTrajectory) -> dict[str, float]:
    _check_pair(pred, orig)
    out = {}
    for j, name in enumerate(JOINT_NAMES):
        m = pred.valid[:, j] & orig.valid[:, j]
        out[name] = euclidean_distance(np.degrees(pred.angles[m, j]), np.degrees(orig.angles[m, j]))
    return out


def rms_error_series(pred: AngleTrajectory, orig: AngleTrajectory) -> np.ndarray:
    """Per-frame root mean square over the joints valid in both (NaN if none)."""
    _check_pair(pred, orig)
    m = pred.valid & orig.valid
    sq = np.where(m, np.degrees(pred.angles - orig.angles) ** 2, 0.0)
    n = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, np.sqrt(sq.sum(axis=1) / np.maximum(n, 1)), np.nan)


@dataclass
class CaseResult:
    """Metrics of one network on one demonstration."""

    tag: str
    mean_angle_error: dict
    euclidean: dict
    excluded_frames: dict
    demo: AngleTrajectory | None = None
    produced: AngleTrajectory | None = None
    limits_ok: bool = True


def compare(pred: AngleTrajectory, orig: AngleTrajectory, tag: str, limits_ok: bool = True) -> CaseResult:
    if tag not in TAGS:
        raise MetricError(f"tag must be one of {TAGS}")
    _check_pair(pred, orig)
    mae, euc, excl = {}, {}, {}
    for g in GROUPS:
        mae[g] = mean_angle_error(pred, orig, g)
        euc[g] = group_euclidean(pred, orig, g)
        excl[g] = int(len(pred) - group_mask(pred, orig, g).sum())
    return CaseResult(tag, mae, euc, excl, orig, pred, limits_ok)


@dataclass
class ComparisonReport:
    """Rows keyed by case name, each mapping tag -> ``CaseResult``."""

    cases: dict = field(default_factory=dict)
    loss_curves: dict = field(default_factory=dict)

    def add(self, case: str, result: CaseResult) -> None:
        self.cases.setdefault(case, {})[result.tag] = result

    def table(self, metric: str) -> list[list[str]]:
        rows = []
        for case, by_tag in self.cases.items():
            row = [case]
            for tag in TAGS:
                res = by_tag.get(tag)
                for g in GROUPS:
                    row.append(_fmt(getattr(res, metric)[g]) if res else "")
            rows.append(row)
        return rows


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: ComparisonReport, out_dir) -> list[Path]:
    """Write the report tables, loss curves and plot series into ``out_dir``.

    Always writes ``mean_angle_error.csv``, ``euclidean.csv`` and
    ``loss_curve.csv`` (header only when there is no training log).  The
    curve of the F network goes to ``loss_curve.csv``; when both networks
    have logs, the C network's goes to ``loss_curve_C.csv``.  Per case and
    network, ``series_<case>_<tag>.csv`` holds demonstrated and produced
    angles plus the per-frame RMS error, and ``summary.json`` records
    excluded frame counts and the joint-limit check.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"report directory {out} is not writable")
    written = []
    for name, metric in (("mean_angle_error.csv", "mean_angle_error"), ("euclidean.csv", "euclidean")):
        _write_csv(out / name, TABLE_COLUMNS, report.table(metric))
        written.append(out / name)

    curves = report.loss_curves
    names = {"F": "loss_curve.csv", "C": "loss_curve_C.csv" if "F" in curves else "loss_curve.csv"}
    if not curves:
        curves = {"F": []}
    for tag, curve in curves.items():
        rows = [[str(e), _fmt(m), _fmt(r)] for e, m, r in curve]
        _write_csv(out / names[tag], ("epoch", "mse", "rmse"), rows)
        written.append(out / names[tag])

    summary = {}
    joint_cols = CSV_COLUMNS[1:]
    for case, by_tag in report.cases.items():
        for tag, res in by_tag.items():
            summary[f"{case}/{tag}"] = {"excluded_frames": res.excluded_frames, "limits_ok": res.limits_ok}
            if res.demo is None or res.produced is None:
                continue
            header = ["frame"] + [f"demo_{c}" for c in joint_cols] + [f"pred_{c}" for c in joint_cols] + ["rms"]
            rms = rms_error_series(res.produced, res.demo)
            demo_deg = np.degrees(res.demo.angles)
            pred_deg = np.degrees(res.produced.angles)
            rows = []
            for i in range(len(res.demo)):
                row = [str(i)]
                row += [_fmt(demo_deg[i, j]) if res.demo.valid[i, j] else "" for j in range(len(joint_cols))]
                row += [_fmt(pred_deg[i, j]) if res.produced.valid[i, j] else "" for j in range(len(joint_cols))]
                row.append(_fmt(rms[i]))
                rows.append(row)
            path = out / f"series_{case}_{tag}.csv"
            _write_csv(path, header, rows)
            written.append(path)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(out / "summary.json")
    return written


def read_table(path) -> dict[str, dict[str, float | None]]:
    """Parse a table written by ``emit_report`` back into numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TABLE_COLUMNS:
        raise MetricError(f"{path}: unexpected header")
    return {r[0]: {c: (float(v) if v else None) for c, v in zip(TABLE_COLUMNS[1:], r[1:])}
            for r in rows[1:]}
