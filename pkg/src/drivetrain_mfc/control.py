"""Cascade controllers for the drive-train: classical P-PI and model-free iP-iP.

Both controllers are written as numba kernels operating on flat parameter and
state arrays so the closed-loop simulation can run fully compiled. The
``PPIController`` and ``IPIPController`` classes wrap the same kernels for
step-by-step use.

Sign convention everywhere: ``e = reference - measurement``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import signal

from .errors import InvalidParameterError

ND_RANGE = (2, 21)


class NotReady(Exception):
    """Derivative window does not hold enough samples yet."""


@dataclass(frozen=True)
class PPIGains:
    Kp_o: float = 80.0              # outer proportional gain [1/s]
    Kp_i: float = 5.0               # inner proportional gain [A s/rad]
    Ki_i: float = 500.0             # inner integral gain [A/rad]
    integrator_limit: float = 10.0  # clamp on the integral contribution [A]

    def validate(self) -> None:
        if min(self.Kp_o, self.Kp_i, self.Ki_i) < 0:
            raise InvalidParameterError("P-PI gains must be non-negative")
        if not self.integrator_limit > 0:
            raise InvalidParameterError("integrator_limit must be positive")


@dataclass(frozen=True)
class IPGains:
    alpha1: float = 12.0
    alpha2: float = 150.0
    Kp_o_star: float = 65.0
    Kp_i_star: float = 55.0

    def validate(self) -> None:
        if self.alpha1 == 0 or self.alpha2 == 0:
            raise InvalidParameterError("alpha1 and alpha2 must be non-zero")
        if self.Kp_o_star < 0 or self.Kp_i_star < 0:
            raise InvalidParameterError("iP proportional gains must be non-negative")


@dataclass(frozen=True)
class FFConfig:
    kinematic_outer: bool = True
    kinematic_inner: bool = True
    model_based: bool = False
    ff_f1: float = 55.0
    ff_D1: float = 0.13

    def validate(self) -> None:
        if not self.ff_f1 > 0:
            raise InvalidParameterError("ff_f1 must be positive")
        if not (0 < self.ff_D1 < 1):
            raise InvalidParameterError("ff_D1 must lie in (0, 1)")


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "ppi"               # "ppi" or "ipip"
    ppi: PPIGains = field(default_factory=PPIGains)
    ip: IPGains = field(default_factory=IPGains)
    ff: FFConfig = field(default_factory=FFConfig)
    n_d: int = 2                    # derivative window length
    i_max: float = 20.0             # current saturation [A]

    def validate(self) -> None:
        if self.kind not in ("ppi", "ipip"):
            raise InvalidParameterError(f"controller.kind must be 'ppi' or 'ipip', got {self.kind!r}")
        if not (ND_RANGE[0] <= self.n_d <= ND_RANGE[1]):
            raise InvalidParameterError(f"controller.n_d must lie in {ND_RANGE}")
        if not self.i_max > 0:
            raise InvalidParameterError("controller.i_max must be positive")
        self.ppi.validate()
        self.ip.validate()
        self.ff.validate()


# --------------------------------------------------------------------------
# Scalar building blocks
# --------------------------------------------------------------------------

def derivative_estimate(window, h: float) -> float:
    """Causal least-squares slope of a line fitted to uniformly spaced samples.

    ``window`` is ordered oldest to newest. With two samples this is the
    backward difference.
    """
    y = np.asarray(window, dtype=float)
    if y.size < 2:
        raise NotReady("need at least 2 samples")
    return _ls_slope(y, h)


@njit(cache=True)
def _ls_slope(buf, h):
    n = buf.shape[0]
    mid = 0.5 * (n - 1)
    num = 0.0
    den = 0.0
    for j in range(n):
        c = j - mid
        num += c * buf[j]
        den += c * c
    return num / (den * h)


@njit(cache=True)
def _push(buf, v):
    n = buf.shape[0]
    for j in range(n - 1):
        buf[j] = buf[j + 1]
    buf[n - 1] = v


@dataclass
class EstimatorState:
    n_d: int = 5
    window: deque = field(default_factory=deque)
    last_u: float = 0.0
    F_hat: float = 0.0

    def __post_init__(self):
        self.window = deque(self.window, maxlen=self.n_d)


def f_hat_update(state: EstimatorState, y_k: float, u_prev: float, alpha: float, h: float) -> float:
    """Data-driven estimate of the lumped term of ``dy/dt = F + alpha u``.

    ``F_hat = dy_hat(t_k) - alpha * u(t_{k-1})``. Raises ``NotReady`` until the
    window holds ``n_d`` samples; the stored estimate then stays at 0.
    """
    if alpha == 0:
        raise InvalidParameterError("alpha must be non-zero")
    state.window.append(float(y_k))
    state.last_u = float(u_prev)
    if len(state.window) < state.n_d:
        raise NotReady(f"{len(state.window)}/{state.n_d} samples")
    state.F_hat = derivative_estimate(state.window, h) - alpha * u_prev
    return state.F_hat


def ip_law(e: float, dy_ref: float, F_hat: float, Kp: float, alpha: float) -> float:
    """Intelligent proportional law ``u = (Kp e + dy_ref - F_hat) / alpha``.

    With exact ``F_hat`` on ``dy/dt = F + alpha u`` the error obeys ``de/dt = -Kp e``.
    """
    return (Kp * e + dy_ref - F_hat) / alpha


def model_ff(series, ff_f1: float, ff_D1: float, inertia_ratio: float, h: float) -> np.ndarray:
    """Filter ``series`` through the anticipatory model

        (s^2 + 2 D2 w02 s + w02^2) / (s^2 + 2 D1 w01 s + w01^2)

    with ``w01 = 2 pi ff_f1``, ``w02 = w01 sqrt(1 + Jl/Jm)``, ``D2 = sqrt(1 + Jl/Jm) D1``.
    Discretized with the bilinear (Tustin) transform; zero initial state.
    """
    num, den = model_ff_tf(ff_f1, ff_D1, inertia_ratio)
    b, a, _ = signal.cont2discrete((num, den), h, method="bilinear")
    return signal.lfilter(np.ravel(b), a, np.asarray(series, dtype=float))


def model_ff_tf(ff_f1: float, ff_D1: float, inertia_ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """``inertia_ratio`` is Jl/Jm."""
    if not ff_f1 > 0 or not (0 < ff_D1 < 1) or not inertia_ratio > 0:
        raise InvalidParameterError("invalid feedforward model parameters")
    r = math.sqrt(1.0 + inertia_ratio)
    w01 = 2 * math.pi * ff_f1
    w02 = r * w01
    D2 = r * ff_D1
    return (np.array([1.0, 2 * D2 * w02, w02**2]),
            np.array([1.0, 2 * ff_D1 * w01, w01**2]))


# --------------------------------------------------------------------------
# Cascade kernels
# --------------------------------------------------------------------------
# Per-step reference vector: [theta*, dtheta*, domega_l*, ff_speed, ff_current]

PPI_NPAR = 8
IPIP_NPAR = 8


@njit(cache=True)
def _sat(v, lim):
    if v > lim:
        return lim, 1.0
    if v < -lim:
        return -lim, 1.0
    return v, 0.0


@njit(cache=True)
def ppi_kernel(P, S, theta_l, omega_m, ref, h, out):
    """P-PI cascade step. ``P = [Kp_o, Kp_i, Ki_i, ilim, kin_o, kin_i, ff_gain, i_max]``,
    ``S = [integral]``. Writes ``[u1, u2, 0, 0, saturated]`` into ``out``."""
    e1 = ref[0] - theta_l
    u1 = P[4] * ref[1] + P[0] * e1
    e_m = u1 + ref[3] - omega_m
    integ = S[0] + P[2] * e_m * h
    if integ > P[3]:
        integ = P[3]
    elif integ < -P[3]:
        integ = -P[3]
    S[0] = integ
    u2 = P[5] * P[6] * ref[2] + ref[4] + P[1] * e_m + integ
    u2, sat = _sat(u2, P[7])
    out[0] = u1
    out[1] = u2
    out[2] = 0.0
    out[3] = 0.0
    out[4] = sat


@njit(cache=True)
def ipip_kernel(P, S, B, theta_l, omega_m, ref, h, out):
    """iP-iP cascade step.

    ``P = [alpha1, alpha2, Kp_o*, Kp_i*, kin_o, kin_i, ff_gain, i_max]``,
    ``S = [count, phi1_prev, phi2_prev, F1, F2]``, ``B`` is a (4, n_d) array of
    windows for theta_l, omega_m, the motor-speed reference u1 and theta*.
    Each F_hat uses the previous iP output (not the feedforward-augmented
    command) as its ``u(t_{k-1})``. Both reference derivatives inside the iP
    terms come from the same window estimator as the measured derivatives, so
    estimator lag cancels in ``dy_ref - dy_hat``.
    """
    a1 = P[0]
    a2 = P[1]
    count = S[0] + 1.0
    S[0] = count
    ready = count >= B.shape[1]

    _push(B[0], theta_l)
    _push(B[3], ref[0])
    e1 = ref[0] - theta_l
    if ready:
        F1 = _ls_slope(B[0], h) - a1 * S[1]
        phi1 = (P[2] * e1 + _ls_slope(B[3], h) - F1) / a1
    else:
        F1 = 0.0
        phi1 = P[2] * e1 / a1
    u1 = P[4] * ref[1] + phi1
    S[1] = phi1

    w_ref = u1 + ref[3]
    _push(B[1], omega_m)
    _push(B[2], w_ref)
    e_m = w_ref - omega_m
    if ready:
        dw_ref = _ls_slope(B[2], h)
        F2 = _ls_slope(B[1], h) - a2 * S[2]
        phi2 = (P[3] * e_m + dw_ref - F2) / a2
    else:
        F2 = 0.0
        phi2 = P[3] * e_m / a2
    ff = P[5] * P[6] * ref[2] + ref[4]
    u2, sat = _sat(ff + phi2, P[7])
    S[2] = u2 - ff
    S[3] = F1
    S[4] = F2
    out[0] = u1
    out[1] = u2
    out[2] = F1
    out[3] = F2
    out[4] = sat


def pack_params(cfg: ControllerConfig, ff_gain: float) -> np.ndarray:
    ff = cfg.ff
    if cfg.kind == "ppi":
        g = cfg.ppi
        vals = [g.Kp_o, g.Kp_i, g.Ki_i, g.integrator_limit]
    else:
        g = cfg.ip
        vals = [g.alpha1, g.alpha2, g.Kp_o_star, g.Kp_i_star]
    # the model-based term replaces the rigid-body inertial term (equal at DC)
    kin_inner = ff.kinematic_inner and not ff.model_based
    vals += [float(ff.kinematic_outer), float(kin_inner), ff_gain, cfg.i_max]
    return np.array(vals, dtype=float)


class _Cascade:
    def __init__(self, cfg: ControllerConfig, ff_gain: float, h_ctrl: float):
        cfg.validate()
        if not h_ctrl > 0:
            raise InvalidParameterError("h_ctrl must be positive")
        self.cfg = cfg
        self.h = h_ctrl
        self.P = pack_params(cfg, ff_gain)
        self._ref = np.zeros(5)
        self._out = np.zeros(5)
        self.reset()

    def step(self, theta_l, omega_m, theta_ref, dtheta_ref, domega_ref, ff_speed=0.0, ff_current=0.0):
        """Returns ``(u1, u2, F_hat_outer, F_hat_inner)``."""
        r = self._ref
        r[0], r[1], r[2], r[3], r[4] = theta_ref, dtheta_ref, domega_ref, ff_speed, ff_current
        self._kernel(theta_l, omega_m)
        o = self._out
        self.saturated = bool(o[4])
        return float(o[0]), float(o[1]), float(o[2]), float(o[3])


class PPIController(_Cascade):
    """Outer P position loop feeding an inner PI motor-speed loop.

    ``ff_gain`` is ``(Jm + Jl) / Kt`` for the inertial feedforward term.
    """

    def reset(self):
        self.S = np.zeros(1)

    def _kernel(self, theta_l, omega_m):
        ppi_kernel(self.P, self.S, theta_l, omega_m, self._ref, self.h, self._out)


class IPIPController(_Cascade):
    """Outer iP on load position feeding an inner iP on motor speed."""

    def reset(self):
        self.S = np.zeros(5)
        self.B = np.zeros((4, self.cfg.n_d))

    def _kernel(self, theta_l, omega_m):
        ipip_kernel(self.P, self.S, self.B, theta_l, omega_m, self._ref, self.h, self._out)


def make_controller(cfg: ControllerConfig, ff_gain: float, h_ctrl: float) -> _Cascade:
    return (PPIController if cfg.kind == "ppi" else IPIPController)(cfg, ff_gain, h_ctrl)
