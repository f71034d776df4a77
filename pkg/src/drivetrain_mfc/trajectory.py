"""Reference trajectories for the load position.

The benchmark preset chains quintic rest-to-rest segments through a list of
waypoints, giving a C2 profile with several motion reversals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, TrajectoryFormatError

BENCHMARK_WAYPOINTS = (0.0, 1.0, -0.5, 0.75, -1.0, 0.0)
BENCHMARK_TIMES = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)

CSV_HEADER = ("t", "theta_ref", "dtheta_ref", "ddtheta_ref")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    theta_ref: np.ndarray
    dtheta_ref: np.ndarray
    ddtheta_ref: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in zip(self.t, self.theta_ref, self.dtheta_ref, self.ddtheta_ref):
                w.writerow([repr(float(v)) for v in row])


def quintic_segment(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized rest-to-rest quintic on ``s`` in [0, 1]: value, d/ds, d2/ds2."""
    p = 10 * s**3 - 15 * s**4 + 6 * s**5
    dp = 30 * s**2 - 60 * s**3 + 30 * s**4
    ddp = 60 * s - 180 * s**2 + 120 * s**3
    return p, dp, ddp


def waypoint_trajectory(times, points, h: float, name: str = "waypoints") -> Trajectory:
    """Chain quintic rest-to-rest segments through ``points`` at ``times``."""
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float)
    if times.shape != points.shape or times.size < 2 or np.any(np.diff(times) <= 0):
        raise InvalidParameterError("waypoint times must be strictly increasing and match the points")
    n = int(round((times[-1] - times[0]) / h))
    t = times[0] + h * np.arange(n + 1)
    # segment index for each sample; the last sample belongs to the last segment
    seg = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
    t0, t1 = times[seg], times[seg + 1]
    dur = t1 - t0
    amp = points[seg + 1] - points[seg]
    s = np.clip((t - t0) / dur, 0.0, 1.0)
    p, dp, ddp = quintic_segment(s)
    theta = points[seg] + amp * p
    dtheta = amp * dp / dur
    ddtheta = amp * ddp / dur**2
    meta = {"name": name, "times": times.tolist(), "points": points.tolist(), "h": h,
            "synthesized_derivatives": False}
    return Trajectory(t, theta, dtheta, ddtheta, meta)


def benchmark_trajectory(h_ctrl: float = 1e-3) -> Trajectory:
    if not (0 < h_ctrl <= 0.01):
        raise InvalidParameterError(f"h_ctrl must lie in (0, 0.01], got {h_ctrl}")
    return waypoint_trajectory(BENCHMARK_TIMES, BENCHMARK_WAYPOINTS, h_ctrl, name="benchmark")


def trajectory_from_file(path) -> Trajectory:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TrajectoryFormatError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["t", "theta_ref"]:
        raise TrajectoryFormatError(f"{path}: header must start with 't,theta_ref'")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise TrajectoryFormatError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != len(header):
        raise TrajectoryFormatError(f"{path}: need at least 3 rows with {len(header)} columns")
    t = data[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise TrajectoryFormatError(f"{path}: time column is not strictly increasing")
    h = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(dt - h)) > 1e-9:
        raise TrajectoryFormatError(f"{path}: time grid is not uniform")
    cols = dict(zip(header, data.T))
    theta = cols["theta_ref"]
    synthesized = not {"dtheta_ref", "ddtheta_ref"} <= cols.keys()
    if synthesized:
        dtheta = np.gradient(theta, h)
        ddtheta = np.gradient(dtheta, h)
    else:
        dtheta, ddtheta = cols["dtheta_ref"], cols["ddtheta_ref"]
    meta = {"name": path.stem, "source": str(path), "h": h, "synthesized_derivatives": synthesized}
    return Trajectory(t, theta, dtheta, ddtheta, meta)
