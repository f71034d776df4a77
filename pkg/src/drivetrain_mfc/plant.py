"""Two-mass drive-train plant with friction current loss and load-side backlash.

Signal chain (one plant step):

    i_cmd -> i_r = i_cmd - i_f(omega_l) -> M_m -> B_s -> omega_m -> C_s -> omega_l
          -> integrate -> backlash -> theta_l

The linear part (B_s, C_s and both angle integrators) is realized as a single
augmented state-space model and discretized with an exact zero-order hold.
Friction and backlash are evaluated once per step from the previous step's
load speed, which keeps every step explicit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import signal

from .errors import InvalidParameterError, SimulationDiverged

F1_RANGE = (30.0, 70.0)
D1_RANGE = (0.08, 0.15)
DIVERGENCE_LIMIT = 1e9

A_S_MODES = ("static", "integrator")
CS_DENOMINATORS = ("as_printed", "symmetric")


@dataclass(frozen=True)
class WearParams:
    """Wear-dependent parameters: first natural frequency ``f1`` [Hz] and damping ``D1``."""

    f1: float = 55.0
    D1: float = 0.13

    def validate(self, strict: bool = False) -> None:
        if not (self.f1 > 0 and math.isfinite(self.f1)):
            raise InvalidParameterError(f"f1 must be positive, got {self.f1}")
        if not (0 < self.D1 < 1):
            raise InvalidParameterError(f"D1 must lie in (0, 1), got {self.D1}")
        inside = (F1_RANGE[0] <= self.f1 <= F1_RANGE[1]) and (D1_RANGE[0] <= self.D1 <= D1_RANGE[1])
        if not inside:
            msg = f"wear parameters (f1={self.f1}, D1={self.D1}) outside the operating domain"
            if strict:
                raise InvalidParameterError(msg)
            warnings.warn(msg, stacklevel=2)


@dataclass(frozen=True)
class PlantParams:
    wear: WearParams = field(default_factory=WearParams)
    Jm: float = 1.0e-2          # motor inertia [kg m^2]
    Jl: float = 1.0e-2          # load inertia [kg m^2]
    Kt: float = 1.0             # torque constant [N m / A]
    Fc: float = 0.05            # Coulomb friction [N m]
    Fv: float = 5e-4            # viscous friction [N m s / rad]
    backlash_width: float = 1e-3  # total dead band at the load [rad]
    sgn_epsilon: float = 1e-3   # tanh regularization width of sgn [rad/s]
    a_s_mode: str = "static"
    cs_denominator: str = "as_printed"

    def validate(self, strict: bool = False) -> None:
        self.wear.validate(strict=strict)
        if not (self.Jm > 0 and self.Jl > 0):
            raise InvalidParameterError("inertias Jm and Jl must be positive")
        if not self.Kt > 0:
            raise InvalidParameterError("Kt must be positive")
        if self.Fc < 0 or self.Fv < 0:
            raise InvalidParameterError("friction coefficients must be non-negative")
        if self.backlash_width < 0:
            raise InvalidParameterError("backlash_width must be non-negative")
        if not self.sgn_epsilon > 0:
            raise InvalidParameterError("sgn_epsilon must be positive")
        if self.a_s_mode not in A_S_MODES:
            raise InvalidParameterError(f"a_s_mode must be one of {A_S_MODES}")
        if self.cs_denominator not in CS_DENOMINATORS:
            raise InvalidParameterError(f"cs_denominator must be one of {CS_DENOMINATORS}")

    def with_wear(self, f1: float, D1: float) -> "PlantParams":
        return replace(self, wear=WearParams(f1=f1, D1=D1))


@dataclass(frozen=True)
class DerivedParams:
    w01: float
    w02: float
    D2: float
    K_shaft: float
    B_shaft: float


def derive_params(p: PlantParams) -> DerivedParams:
    if not (p.Jm > 0 and p.Jl > 0):
        raise InvalidParameterError("inertias Jm and Jl must be positive")
    ratio = math.sqrt((p.Jm + p.Jl) / p.Jm)
    w01 = 2.0 * math.pi * p.wear.f1
    w02 = w01 * ratio
    D2 = ratio * p.wear.D1
    K = p.Jl * w01**2
    B = 2.0 * p.wear.D1 * K / w02
    return DerivedParams(w01=w01, w02=w02, D2=D2, K_shaft=K, B_shaft=B)


def motor_tf(p: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator of B_s(s) = omega_m / M_m."""
    d = derive_params(p)
    D1 = p.wear.D1
    num = np.array([1.0, 2 * D1 * d.w01, d.w01**2]) / p.Jm
    den = np.array([1.0, 2 * d.D2 * d.w02, d.w02**2, 0.0])
    return num, den


def load_tf(p: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator of C_s(s) = omega_l / omega_m."""
    d = derive_params(p)
    D1 = p.wear.D1
    damp = d.w02 if p.cs_denominator == "as_printed" else d.w01
    num = np.array([2 * D1 * d.w01, d.w01**2])
    den = np.array([1.0, 2 * D1 * damp, d.w01**2])
    return num, den


def friction_current(omega_l: float, p: PlantParams) -> float:
    """Current lost to Coulomb + viscous friction at load speed ``omega_l``."""
    return (p.Fc * math.tanh(omega_l / p.sgn_epsilon) + p.Fv * omega_l) / p.Kt


def backlash(theta_in: float, theta_out: float, width: float) -> tuple[float, float]:
    """Play operator step.

    ``theta_out`` is the previous output. Returns ``(theta_out, offset)`` where
    ``offset = theta_in - theta_out`` is kept within ``+-width/2``.
    """
    return _play(theta_in, theta_out, 0.5 * width)


@njit(cache=True)
def _play(theta_in, theta_out, half):
    off = theta_in - theta_out
    if off > half:
        off = half
    elif off < -half:
        off = -half
    return theta_in - off, off


@dataclass
class PlantState:
    x_b: np.ndarray
    x_c: np.ndarray
    theta_m: float
    theta_l: float
    backlash_offset: float
    last_if: float


# Layout of the augmented linear state vector.
_NB = 3
_NC = 2


@njit(cache=True)
def _substeps(x, Ad, Bd, c_wl, i_thl, i_cmd, n, Fc, Fv, Kt, eps, half, bl):
    """Advance ``n`` plant steps in place.

    ``bl`` holds ``[theta_l_out, offset, last_if, omega_l]``.
    Returns 0 on success or ``k + 1`` for the first non-finite/oversized step ``k``.
    """
    m = x.shape[0]
    xn = np.empty(m)
    for k in range(n):
        w_l = bl[3]
        i_f = (Fc * math.tanh(w_l / eps) + Fv * w_l) / Kt
        i_r = i_cmd - i_f
        for r in range(m):
            acc = Bd[r] * i_r
            for c in range(m):
                acc += Ad[r, c] * x[c]
            xn[r] = acc
        bad = False
        w_new = 0.0
        for r in range(m):
            v = xn[r]
            if not (abs(v) <= 1e9):
                bad = True
            x[r] = v
            w_new += c_wl[r] * v
        if bad:
            return k + 1
        bl[0], bl[1] = _play(x[i_thl], bl[0], half)
        bl[2] = i_f
        bl[3] = w_new
    return 0


class PlantStepper:
    """Discrete-time realization of the nonlinear drive-train at a fixed step ``h_plant``.

    Not thread-safe; build one instance per simulation.
    """

    def __init__(self, p: PlantParams, h_plant: float = 5e-5):
        if not h_plant > 0:
            raise InvalidParameterError(f"h_plant must be positive, got {h_plant}")
        p.validate()
        if h_plant > 1.0 / (10.0 * p.wear.f1):
            warnings.warn(f"h_plant={h_plant} under-resolves the {p.wear.f1} Hz resonance", stacklevel=2)
        self.params = p
        self.h = h_plant
        self.derived = derive_params(p)

        Ab, Bb, Cb, _ = signal.tf2ss(*motor_tf(p))
        Ac, Bc, Cc, _ = signal.tf2ss(*load_tf(p))
        self.Ab, self.Bb, self.Cb = Ab, Bb.ravel(), Cb.ravel()
        self.Ac, self.Bc, self.Cc = Ac, Bc.ravel(), Cc.ravel()

        integ = p.a_s_mode == "integrator"
        off = 1 if integ else 0
        n = off + _NB + _NC + 2
        A = np.zeros((n, n))
        B = np.zeros(n)
        ib = slice(off, off + _NB)
        ic = slice(off + _NB, off + _NB + _NC)
        self.i_thm = off + _NB + _NC
        self.i_thl = self.i_thm + 1
        A[ib, ib] = Ab
        A[ic, ic] = Ac
        A[ic, ib] = np.outer(self.Bc, self.Cb)
        A[self.i_thm, ib] = self.Cb
        A[self.i_thl, ic] = self.Cc
        if integ:
            # M_m = (Kt / Jm) * integral of i_r
            B[0] = p.Kt / p.Jm
            A[ib, 0] = self.Bb
        else:
            B[ib] = self.Bb * p.Kt
        self._ib, self._ic = ib, ic
        self.A_c, self.B_c = A, B
        Ad, Bd, *_ = signal.cont2discrete((A, B[:, None], np.eye(n), np.zeros((n, 1))), h_plant, method="zoh")
        self.Ad = np.ascontiguousarray(Ad)
        self.Bd = np.ascontiguousarray(Bd.ravel())
        self.c_wm = np.zeros(n)
        self.c_wm[ib] = self.Cb
        self.c_wl = np.zeros(n)
        self.c_wl[ic] = self.Cc
        self.reset()

    def reset(self) -> None:
        self.x = np.zeros(self.Ad.shape[0])
        # [theta_l_out, backlash offset, last i_f, omega_l]
        self._bl = np.zeros(4)
        self.steps = 0

    @property
    def omega_m(self) -> float:
        return float(self.c_wm @ self.x)

    @property
    def omega_l(self) -> float:
        return float(self._bl[3])

    @property
    def theta_l(self) -> float:
        return float(self._bl[0])

    @property
    def theta_m(self) -> float:
        return float(self.x[self.i_thm])

    @property
    def shaft_torque(self) -> float:
        """Inter-connecting torque M_l, for diagnostics."""
        d = self.derived
        return d.K_shaft * (self.theta_m - self.x[self.i_thl]) + d.B_shaft * (self.omega_m - self.omega_l)

    @property
    def state(self) -> PlantState:
        return PlantState(
            x_b=self.x[self._ib].copy(),
            x_c=self.x[self._ic].copy(),
            theta_m=self.theta_m,
            theta_l=self.theta_l,
            backlash_offset=float(self._bl[1]),
            last_if=float(self._bl[2]),
        )

    def advance(self, i_cmd: float, n: int = 1) -> None:
        """Apply ``i_cmd`` (held) for ``n`` plant steps."""
        if not math.isfinite(i_cmd):
            raise SimulationDiverged(self.steps, "non-finite current command")
        p = self.params
        bad = _substeps(self.x, self.Ad, self.Bd, self.c_wl, self.i_thl, float(i_cmd), int(n),
                        p.Fc, p.Fv, p.Kt, p.sgn_epsilon, 0.5 * p.backlash_width, self._bl)
        if bad:
            self.steps += bad - 1
            raise SimulationDiverged(self.steps)
        self.steps += n

    def step(self, i_cmd: float) -> tuple[float, float, float]:
        """One plant step; returns ``(omega_m, theta_l, omega_l)``."""
        self.advance(i_cmd, 1)
        return self.omega_m, self.theta_l, self.omega_l


def realize(p: PlantParams, h_plant: float = 5e-5) -> PlantStepper:
    return PlantStepper(p, h_plant)
