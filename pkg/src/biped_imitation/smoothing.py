"""Savitzky-Golay smoothing of joint-angle channels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .angles import JOINT_NAMES, AngleTrajectory

EDGE_MODES = ("copy", "mirror")


class FilterParameterError(ValueError):
    pass


class SignalLengthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SGFilterSpec:
    window: int
    polyorder: int
    coefficients: np.ndarray = field(repr=False)
    edge: str = "copy"

    @property
    def half(self) -> int:
        return (self.window - 1) // 2


def vandermonde(window: int, polyorder: int) -> np.ndarray:
    """Rows ``1, z, z**2, ...`` for offsets ``z = -(k-1)/2 .. (k-1)/2``."""
    z = np.arange(window, dtype=np.float64) - (window - 1) / 2
    return z[:, None] ** np.arange(polyorder + 1)


def sg_coefficients(window: int = 7, polyorder: int = 2, edge: str = "copy") -> SGFilterSpec:
    """Smoothing weights of a ``window``-point, order-``polyorder`` local fit.

    The weights are the row of the least-squares solution operator
    ``(U^T U)^-1 U^T`` that yields the fitted value at the window centre.  It
    is obtained from a QR factorization of the Vandermonde matrix ``U``.
    """
    if not isinstance(window, (int, np.integer)) or not isinstance(polyorder, (int, np.integer)):
        raise FilterParameterError("window and polyorder must be integers")
    if window < 3 or window % 2 == 0:
        raise FilterParameterError(f"window must be an odd integer >= 3, got {window}")
    if polyorder < 0 or polyorder >= window:
        raise FilterParameterError(f"polyorder must satisfy 0 <= polyorder < window, got {polyorder}")
    if edge not in EDGE_MODES:
        raise FilterParameterError(f"edge must be one of {EDGE_MODES}, got {edge!r}")
    q, r = np.linalg.qr(vandermonde(window, polyorder))
    # (U^T U)^-1 U^T = R^-1 Q^T
    solve = np.linalg.solve(r, q.T)
    coeffs = solve[0].copy()
    coeffs.setflags(write=False)
    return SGFilterSpec(int(window), int(polyorder), coeffs, edge)


def sg_apply(signal, spec: SGFilterSpec) -> np.ndarray:
    """Smooth a 1-D signal.

    Interior samples get the weighted window sum.  With ``edge="copy"`` the
    first and last ``(k-1)/2`` samples are passed through unchanged; with
    ``edge="mirror"`` the signal is reflected about its end samples and every
    output is filtered.
    """
    y = np.asarray(signal, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    k, h = spec.window, spec.half
    if y.size < k:
        raise SignalLengthError(f"signal of length {y.size} is shorter than the window {k}")
    c = spec.coefficients
    if spec.edge == "mirror":
        padded = np.concatenate((y[h:0:-1], y, y[-2:-h - 2:-1]))
        return np.correlate(padded, c, mode="valid")
    out = y.copy()
    out[h:y.size - h] = np.correlate(y, c, mode="valid")
    return out


def _valid_runs(valid: np.ndarray):
    padded = np.concatenate(([False], valid, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return zip(edges[::2], edges[1::2])


def smooth_trajectory(traj: AngleTrajectory, spec: SGFilterSpec) -> AngleTrajectory:
    """Filter each joint channel independently, keeping validity flags.

    Invalid samples split a channel into runs; runs of at least ``k`` samples
    are filtered on their own, shorter ones are left untouched.
    """
    out = np.array(traj.angles)
    for j, name in enumerate(JOINT_NAMES):
        valid = traj.valid[:, j]
        if valid.sum() < spec.window:
            raise SignalLengthError(
                f"joint {name}: {int(valid.sum())} valid samples, window needs {spec.window}")
        for start, stop in _valid_runs(valid):
            if stop - start >= spec.window:
                out[start:stop, j] = sg_apply(traj.angles[start:stop, j], spec)
    return AngleTrajectory(out, traj.valid, traj.frame_rate)
