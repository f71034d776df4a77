"""Closed-loop simulation and tracking metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .control import ControllerConfig, ipip_kernel, model_ff, pack_params, ppi_kernel
from .errors import InvalidParameterError
from .plant import PlantParams, PlantStepper, _substeps
from .trajectory import Trajectory, benchmark_trajectory

SERIES_COLUMNS = ("t", "theta_ref", "theta_l", "omega_m", "omega_l", "u1", "u2",
                  "f_hat_outer", "f_hat_inner", "saturated")


@dataclass(frozen=True)
class Scenario:
    plant: PlantParams = field(default_factory=PlantParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    trajectory: Trajectory | str = "benchmark"
    h_ctrl: float = 1e-3
    h_plant: float = 5e-5
    T: float = 10.0
    w_u: float = 1e-6
    seed: int = 0
    noise_theta: float = 0.0    # std of additive noise on measured theta_l [rad]
    noise_omega: float = 0.0    # std of additive noise on measured omega_m [rad/s]

    @property
    def substeps(self) -> int:
        return int(round(self.h_ctrl / self.h_plant))

    def validate(self) -> None:
        if not (self.h_ctrl > 0 and self.h_plant > 0):
            raise InvalidParameterError("sim.h_ctrl and sim.h_plant must be positive")
        ratio = self.h_ctrl / self.h_plant
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise InvalidParameterError(
                f"sim.h_plant={self.h_plant} must divide sim.h_ctrl={self.h_ctrl} exactly")
        if not self.T > 0:
            raise InvalidParameterError("sim.T must be positive")
        if self.w_u < 0:
            raise InvalidParameterError("sim.w_u must be non-negative")
        if self.noise_theta < 0 or self.noise_omega < 0:
            raise InvalidParameterError("noise standard deviations must be non-negative")
        self.plant.validate()
        self.controller.validate()

    def resolve_trajectory(self) -> Trajectory:
        traj = self.trajectory
        if isinstance(traj, str):
            if traj != "benchmark":
                raise InvalidParameterError(f"unknown trajectory preset {traj!r}")
            traj = benchmark_trajectory(self.h_ctrl)
        if abs(traj.h - self.h_ctrl) > 1e-9:
            raise InvalidParameterError(
                f"trajectory grid step {traj.h} does not match sim.h_ctrl={self.h_ctrl}")
        n = int(round(self.T / self.h_ctrl))
        if traj.t.size < n + 1:
            raise InvalidParameterError(f"trajectory covers {traj.T} s, shorter than sim.T={self.T}")
        return traj


@dataclass
class RunResult:
    series: dict
    itae: float
    iau: float
    j: float
    diverged: bool = False
    fail_time: float | None = None

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        cols = [self.series[c] for c in SERIES_COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(float(v)) if i < 9 else str(int(v)) for i, v in enumerate(row)])
        return buf.getvalue()

    def metrics(self) -> dict:
        return {"itae": self.itae, "iau": self.iau, "j": self.j,
                "diverged": self.diverged, "fail_time": self.fail_time}

    def metrics_json(self) -> str:
        return json.dumps(self.metrics(), indent=2, sort_keys=True) + "\n"


def _trapz_uniform(y: np.ndarray, h: float) -> float:
    if y.size < 2:
        return 0.0
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def itae(t: np.ndarray, error: np.ndarray, h: float) -> float:
    """Trapezoidal ITAE: integral of ``t |error|``."""
    return _trapz_uniform(np.asarray(t) * np.abs(error), h)


def iau(u: np.ndarray, h: float) -> float:
    """Trapezoidal IAU: integral of ``|u|``."""
    return _trapz_uniform(np.abs(np.asarray(u, dtype=float)), h)


def feedforward_series(cfg: ControllerConfig, plant: PlantParams, traj: Trajectory, n: int):
    """Precompute the model-based feedforward channels ``(ff_speed, ff_current)``.

    The anticipatory filter is applied to the load-acceleration reference and
    scaled by ``Jm / Kt``; at DC it equals the rigid-body term
    ``(Jm + Jl) / Kt * domega_l*``, which it replaces.
    """
    ff_speed = np.zeros(n + 1)
    ff_current = np.zeros(n + 1)
    ff = cfg.ff
    if ff.model_based:
        acc = traj.ddtheta_ref[: n + 1]
        ff_current = plant.Jm / plant.Kt * model_ff(acc, ff.ff_f1, ff.ff_D1, plant.Jl / plant.Jm, traj.h)
    return ff_speed, ff_current


@njit(cache=True)
def _closed_loop(kind, P, S, B, refs, noise, h, nsub,
                 x, Ad, Bd, c_wm, c_wl, i_thl, Fc, Fv, Kt, eps, half, bl, rec):
    n = refs.shape[0]
    out = np.zeros(5)
    for k in range(n):
        theta_l = bl[0] + noise[k, 0]
        omega_m = noise[k, 1]
        for r in range(x.shape[0]):
            omega_m += c_wm[r] * x[r]
        ref = refs[k]
        if kind == 0:
            ppi_kernel(P, S, theta_l, omega_m, ref, h, out)
        else:
            ipip_kernel(P, S, B, theta_l, omega_m, ref, h, out)
        rec[k, 0] = bl[0]
        rec[k, 1] = omega_m - noise[k, 1]
        rec[k, 2] = bl[3]
        rec[k, 3] = out[0]
        rec[k, 4] = out[1]
        rec[k, 5] = out[2]
        rec[k, 6] = out[3]
        rec[k, 7] = out[4]
        if k < n - 1:
            bad = _substeps(x, Ad, Bd, c_wl, i_thl, out[1], nsub, Fc, Fv, Kt, eps, half, bl)
            if bad:
                return k + 1
    return 0


def run(scenario: Scenario) -> RunResult:
    """Simulate the closed loop over ``[0, T]`` and compute ITAE, IAU and J.

    A diverged run returns ``diverged=True`` with metrics computed up to the
    last finite control instant.
    """
    scenario.validate()
    traj = scenario.resolve_trajectory()
    cfg = scenario.controller
    p = scenario.plant
    h = scenario.h_ctrl
    n = int(round(scenario.T / h))

    plant = PlantStepper(p, scenario.h_plant)
    ff_gain = (p.Jm + p.Jl) / p.Kt
    P = pack_params(cfg, ff_gain)
    S = np.zeros(1 if cfg.kind == "ppi" else 5)
    B = np.zeros((4, cfg.n_d))
    ff_speed, ff_current = feedforward_series(cfg, p, traj, n)
    refs = np.ascontiguousarray(np.column_stack([
        traj.theta_ref[: n + 1], traj.dtheta_ref[: n + 1], traj.ddtheta_ref[: n + 1],
        ff_speed, ff_current]))
    noise = np.zeros((n + 1, 2))
    if scenario.noise_theta > 0 or scenario.noise_omega > 0:
        rng = np.random.default_rng(scenario.seed)
        noise[:, 0] = rng.normal(0.0, scenario.noise_theta, n + 1)
        noise[:, 1] = rng.normal(0.0, scenario.noise_omega, n + 1)
    rec = np.zeros((n + 1, 8))

    fail = _closed_loop(0 if cfg.kind == "ppi" else 1, P, S, B, refs, noise, h, scenario.substeps,
                        plant.x, plant.Ad, plant.Bd, plant.c_wm, plant.c_wl, plant.i_thl,
                        p.Fc, p.Fv, p.Kt, p.sgn_epsilon, 0.5 * p.backlash_width, plant._bl, rec)
    m = fail if fail else n + 1
    t = traj.t[:m] - traj.t[0]
    series = {
        "t": t,
        "theta_ref": refs[:m, 0],
        "theta_l": rec[:m, 0],
        "omega_m": rec[:m, 1],
        "omega_l": rec[:m, 2],
        "u1": rec[:m, 3],
        "u2": rec[:m, 4],
        "f_hat_outer": rec[:m, 5],
        "f_hat_inner": rec[:m, 6],
        "saturated": rec[:m, 7],
    }
    e = series["theta_l"] - series["theta_ref"]
    it = itae(t, e, h)
    ia = iau(series["u2"], h)
    return RunResult(series=series, itae=it, iau=ia, j=it + scenario.w_u * ia,
                     diverged=bool(fail), fail_time=float(t[-1]) if fail else None)
