"""Bezier segment math: bases, derivatives, jerk Gram matrix, sampling.

Degree is fixed at 5 per segment.  A segment stores one control polygon
per axis (s and d) plus its time window; a piecewise trajectory chains
segments over the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import TOutOfRange

DEGREE = 5
N_CTRL = DEGREE + 1


def bernstein_row(degree: int, u: float) -> np.ndarray:
    """Basis values [B_0^n(u), ..., B_n^n(u)]."""
    row = np.empty(degree + 1)
    for i in range(degree + 1):
        row[i] = math.comb(degree, i) * u**i * (1.0 - u) ** (degree - i)
    return row


def bernstein_gram(degree: int) -> np.ndarray:
    """Exact integral of B_i^n B_j^n over [0, 1]."""
    n = degree
    g = np.empty((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            g[i, j] = (math.comb(n, i) * math.comb(n, j)
                       / math.comb(2 * n, i + j) / (2 * n + 1))
    return g


def diff_matrix(order: int, n_ctrl: int = N_CTRL) -> np.ndarray:
    """Forward-difference operator of the given order on control points."""
    d = np.eye(n_ctrl)
    for _ in range(order):
        d = d[1:] - d[:-1]
    return d


_D1 = diff_matrix(1)
_D2 = diff_matrix(2)
_D3 = diff_matrix(3)
_GRAM2 = bernstein_gram(2)
# f''' of a degree-5 segment in u-space: 60 * third differences, degree 2
_JERK_SCALE = DEGREE * (DEGREE - 1) * (DEGREE - 2)


def jerk_gram(duration: float) -> np.ndarray:
    """Q with p^T Q p = integral of (d^3 f / dt^3)^2 over the segment."""
    core = _D3.T @ _GRAM2 @ _D3 * (_JERK_SCALE ** 2)
    return core / duration**5


def velocity_rows(duration: float) -> np.ndarray:
    """Rows mapping control points to hodograph velocity control points."""
    return DEGREE * _D1 / duration


def accel_rows(duration: float) -> np.ndarray:
    return DEGREE * (DEGREE - 1) * _D2 / duration**2


def endpoint_rows(duration: float, at_end: bool) -> np.ndarray:
    """(3, 6) rows for position, velocity, acceleration at a segment end."""
    rows = np.zeros((3, N_CTRL))
    if not at_end:
        rows[0, 0] = 1.0
        rows[1, :2] = (-DEGREE / duration, DEGREE / duration)
        rows[2, :3] = np.array([1.0, -2.0, 1.0]) * DEGREE * (DEGREE - 1) / duration**2
    else:
        rows[0, -1] = 1.0
        rows[1, -2:] = (-DEGREE / duration, DEGREE / duration)
        rows[2, -3:] = np.array([1.0, -2.0, 1.0]) * DEGREE * (DEGREE - 1) / duration**2
    return rows


@dataclass(frozen=True)
class BezierSegment:
    t0: float
    duration: float
    control_s: np.ndarray
    control_d: np.ndarray

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        for ctrl in (self.control_s, self.control_d):
            if np.asarray(ctrl).shape != (N_CTRL,):
                raise ValueError(f"expected {N_CTRL} control points per axis")

    def evaluate(self, t: float) -> dict[str, tuple[float, float, float, float]]:
        """(pos, vel, acc, jerk) per axis at absolute time t."""
        u = (t - self.t0) / self.duration
        u = min(max(u, 0.0), 1.0)
        out = {}
        for name, ctrl in (("s", self.control_s), ("d", self.control_d)):
            pos = float(bernstein_row(DEGREE, u) @ ctrl)
            v_ctrl = velocity_rows(self.duration) @ ctrl
            vel = float(bernstein_row(DEGREE - 1, u) @ v_ctrl)
            a_ctrl = accel_rows(self.duration) @ ctrl
            acc = float(bernstein_row(DEGREE - 2, u) @ a_ctrl)
            j_ctrl = _JERK_SCALE * (_D3 @ ctrl) / self.duration**3
            jerk = float(bernstein_row(DEGREE - 3, u) @ j_ctrl)
            out[name] = (pos, vel, acc, jerk)
        return out


@dataclass(frozen=True)
class PiecewiseTrajectory:
    segments: tuple[BezierSegment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("empty trajectory")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.t0 + a.duration - b.t0) > 1e-9:
                raise ValueError("segments must partition the horizon")

    @property
    def t0(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        last = self.segments[-1]
        return last.t0 + last.duration

    def segment_at(self, t: float) -> tuple[int, BezierSegment]:
        if t < self.t0 - 1e-9 or t > self.t_end + 1e-9:
            raise TOutOfRange(f"t={t} outside [{self.t0}, {self.t_end}]")
        for i, seg in enumerate(self.segments):
            if t <= seg.t0 + seg.duration + 1e-12:
                return i, seg
        return len(self.segments) - 1, self.segments[-1]

    def sample(self, t: float) -> dict[str, tuple[float, float, float, float]]:
        _, seg = self.segment_at(t)
        return seg.evaluate(t)

    def joint_mismatches(self) -> np.ndarray:
        """(n_joints, 2 axes, 3 orders) continuity errors at the joints."""
        out = np.zeros((len(self.segments) - 1, 2, 3))
        for k, (a, b) in enumerate(zip(self.segments, self.segments[1:])):
            t = b.t0
            ea, eb = a.evaluate(t), b.evaluate(t)
            for ax, name in enumerate(("s", "d")):
                for order in range(3):
                    out[k, ax, order] = eb[name][order] - ea[name][order]
        return out

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"t0": seg.t0, "duration": seg.duration,
                 "control_s": [float(c) for c in seg.control_s],
                 "control_d": [float(c) for c in seg.control_d]}
                for seg in self.segments
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseTrajectory":
        return cls(tuple(
            BezierSegment(t0=seg["t0"], duration=seg["duration"],
                          control_s=np.asarray(seg["control_s"], dtype=float),
                          control_d=np.asarray(seg["control_d"], dtype=float))
            for seg in data["segments"]))
