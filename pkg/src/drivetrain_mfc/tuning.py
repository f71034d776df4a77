"""Gain optimization against J = ITAE + w_u IAU and the Monte Carlo wear study."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .control import ControllerConfig, IPGains, PPIGains
from .errors import InvalidParameterError, OptimizationFailed
from .plant import WearParams
from .sim import Scenario, run

log = logging.getLogger(__name__)

PPI_PARAMS = ("Kp_o", "Kp_i", "Ki_i")
IPIP_PARAMS = ("alpha1", "alpha2", "Kp_o_star", "Kp_i_star")

DEFAULT_BOUNDS = {
    "Kp_o": (1.0, 300.0),
    "Kp_i": (0.1, 30.0),
    "Ki_i": (1.0, 5000.0),
    "alpha1": (1.0, 50.0),
    "alpha2": (10.0, 1000.0),
    "Kp_o_star": (0.1, 500.0),
    "Kp_i_star": (0.1, 5000.0),
}

DIVERGED_PENALTY = 1e6
_Z_CLIP = 30.0


def default_free_params(kind: str) -> dict[str, tuple[float, float]]:
    names = PPI_PARAMS if kind == "ppi" else IPIP_PARAMS
    return {k: DEFAULT_BOUNDS[k] for k in names}


@dataclass
class TuneSpec:
    scenario: Scenario
    free_params: dict[str, tuple[float, float]] | None = None
    x0: dict[str, float] | None = None
    max_evals: int = 400
    tol: float = 1e-4
    restart: bool = True

    def __post_init__(self):
        if self.free_params is None:
            self.free_params = default_free_params(self.scenario.controller.kind)
        if self.x0 is None:
            self.x0 = controller_values(self.scenario.controller, list(self.free_params))

    def validate(self) -> None:
        kind = self.scenario.controller.kind
        allowed = PPI_PARAMS if kind == "ppi" else IPIP_PARAMS
        for name, (lo, hi) in self.free_params.items():
            if name not in allowed:
                raise InvalidParameterError(f"tuning parameter {name!r} is not a {kind} gain")
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidParameterError(f"bounds for {name} must be finite with lower < upper")
            v = self.x0[name]
            if not (lo < v < hi):
                raise InvalidParameterError(f"x0[{name}]={v} not strictly inside ({lo}, {hi})")
        if self.max_evals < 1:
            raise InvalidParameterError("max_evals must be >= 1")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")


@dataclass
class TuneResult:
    gains: dict[str, float]
    j: float
    itae: float
    iau: float
    x0_j: float
    log: list[dict] = field(default_factory=list)
    controller: ControllerConfig | None = None


def controller_values(cfg: ControllerConfig, names) -> dict[str, float]:
    src = cfg.ppi if cfg.kind == "ppi" else cfg.ip
    return {n: float(getattr(src, n)) for n in names}


def with_gains(cfg: ControllerConfig, gains: dict[str, float]) -> ControllerConfig:
    if cfg.kind == "ppi":
        return replace(cfg, ppi=replace(cfg.ppi, **gains))
    return replace(cfg, ip=replace(cfg.ip, **gains))


def _to_box(z, lo, hi):
    z = np.clip(z, -_Z_CLIP, _Z_CLIP)
    x = lo + (hi - lo) / (1.0 + np.exp(-z))
    # keep strictly inside even where the logistic rounds to a bound
    return np.minimum(np.maximum(x, np.nextafter(lo, hi)), np.nextafter(hi, lo))


def _from_box(x, lo, hi):
    s = (np.asarray(x, dtype=float) - lo) / (hi - lo)
    return np.log(s / (1.0 - s))


def bounded_simplex(fun, x0, lo, hi, max_evals=400, tol=1e-4, restart=True, scale=0.1):
    """Minimize ``fun`` inside the open box ``(lo, hi)`` with Nelder-Mead.

    Coordinates are mapped through a logistic transform so every evaluated
    point is strictly inside the box. The initial simplex steps each
    coordinate by ``scale`` of its bound range. One restart from the best
    point uses a simplex a quarter of that size. Returns ``(x_best, f_best,
    n_evals)``; ``x_best`` is never worse than ``x0``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    best = {"x": None, "f": math.inf}
    evals = [0]

    def f_box(x):
        evals[0] += 1
        f = fun(x)
        if f < best["f"]:
            best["x"], best["f"] = x.copy(), f
        return f

    def f_z(z):
        if evals[0] >= max_evals:
            # budget exhausted: the search can only stall from here
            return math.inf
        return f_box(_to_box(z, lo, hi))

    def simplex_around(x, step):
        pts = [x]
        for i in range(x.size):
            y = x.copy()
            d = step * (hi[i] - lo[i])
            y[i] = x[i] + d if x[i] + d < hi[i] else x[i] - d
            y[i] = min(max(y[i], lo[i] + 1e-9 * (hi[i] - lo[i])), hi[i] - 1e-9 * (hi[i] - lo[i]))
            pts.append(y)
        return np.array([_from_box(p, lo, hi) for p in pts])

    f0 = f_box(x0.copy())
    rounds = [scale, scale / 4] if restart else [scale]
    for step in rounds:
        if evals[0] >= max_evals or best["x"] is None:
            break
        start = best["x"]
        fatol = tol * abs(best["f"]) if math.isfinite(best["f"]) else tol
        minimize(f_z, _from_box(start, lo, hi), method="Nelder-Mead",
                 options={"initial_simplex": simplex_around(start, step), "maxfev": max_evals,
                          "xatol": 1e-6, "fatol": fatol, "adaptive": x0.size > 2})
    if best["x"] is None or not math.isfinite(best["f"]):
        raise OptimizationFailed("no finite objective value within the evaluation budget")
    return best["x"], best["f"], evals[0], f0


def evaluate(scenario: Scenario) -> tuple[float, float, float]:
    """``(J, ITAE, IAU)``; diverged runs get a penalty that grows with earlier failure."""
    r = run(scenario)
    if r.diverged or not math.isfinite(r.j):
        early = scenario.T - (r.fail_time or 0.0)
        return DIVERGED_PENALTY + 1e3 * early, r.itae, r.iau
    return r.j, r.itae, r.iau


def tune(spec: TuneSpec) -> TuneResult:
    spec.validate()
    names = list(spec.free_params)
    lo = np.array([spec.free_params[n][0] for n in names])
    hi = np.array([spec.free_params[n][1] for n in names])
    x0 = np.array([spec.x0[n] for n in names])
    base = spec.scenario
    entries: list[dict] = []

    def objective(x):
        gains = dict(zip(names, map(float, x)))
        sc = replace(base, controller=with_gains(base.controller, gains))
        j, it, ia = evaluate(sc)
        entries.append({"eval": len(entries), **gains, "itae": it, "iau": ia, "j": j})
        log.debug("eval %d J=%.6g %s", len(entries), j, gains)
        return j

    x_best, f_best, _, f0 = bounded_simplex(objective, x0, lo, hi, spec.max_evals, spec.tol, spec.restart)
    best_entry = min(entries, key=lambda e: e["j"])
    gains = {n: best_entry[n] for n in names}
    return TuneResult(gains=gains, j=best_entry["j"], itae=best_entry["itae"], iau=best_entry["iau"],
                      x0_j=f0, log=entries, controller=with_gains(base.controller, gains))


# --------------------------------------------------------------------------
# Monte Carlo over wear parameters
# --------------------------------------------------------------------------

@dataclass
class MonteCarloSpec:
    n_draws: int = 200
    f1_mean: float = 55.0
    f1_std: float = 4.0
    D1_mean: float = 0.13
    D1_std: float = 0.01
    seed: int = 1

    def validate(self) -> None:
        if self.n_draws < 1:
            raise InvalidParameterError("montecarlo.n_draws must be >= 1")
        if not (self.f1_std > 0 and self.D1_std > 0):
            raise InvalidParameterError("montecarlo standard deviations must be positive")


@dataclass
class MonteCarloResult:
    draws: list[dict]
    fraction_positive: float
    n_diverged: int = 0

    def csv(self) -> str:
        lines = ["draw,f1,D1,itae_ppi,itae_ipip,delta"]
        for d in self.draws:
            lines.append(",".join([str(d["draw"])] + [repr(float(d[k])) for k in
                                                      ("f1", "D1", "itae_a", "itae_b", "delta")]))
        return "\n".join(lines) + "\n"


def _draw(spec: MonteCarloSpec, index: int) -> WearParams:
    rng = np.random.default_rng([spec.seed, index])
    while True:
        f1 = rng.normal(spec.f1_mean, spec.f1_std)
        D1 = rng.normal(spec.D1_mean, spec.D1_std)
        if f1 > 0 and 0 < D1 < 1:
            return WearParams(f1=float(f1), D1=float(D1))


def sample_params(spec: MonteCarloSpec) -> list[WearParams]:
    """Independent normal draws of (f1, D1); each draw has its own seeded stream."""
    spec.validate()
    return [_draw(spec, i) for i in range(spec.n_draws)]


def _mc_job(args):
    index, wear, scen_a, scen_b = args
    out = {"draw": index, "f1": wear.f1, "D1": wear.D1}
    for key, sc in (("a", scen_a), ("b", scen_b)):
        sc = replace(sc, plant=replace(sc.plant, wear=wear))
        r = run(sc)
        out["itae_" + key] = r.itae
        out["div_" + key] = r.diverged
    return out


def monte_carlo(spec: MonteCarloSpec, scenario_a: Scenario, scenario_b: Scenario,
                workers: int = 1) -> MonteCarloResult:
    """Run both fixed controller set-ups on every drawn plant.

    ``delta = ITAE_a - ITAE_b``; by default ``a`` is the nominal P-PI and ``b``
    the iP-iP. Draws where either run diverged get ``delta = nan`` and are
    excluded from ``fraction_positive``'s numerator but counted in ``n_diverged``.
    """
    wears = sample_params(spec)
    jobs = [(i, w, scenario_a, scenario_b) for i, w in enumerate(wears)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_mc_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_mc_job(j) for j in jobs]
    n_div = 0
    draws = []
    for r in rows:
        div_a, div_b = r.pop("div_a"), r.pop("div_b")
        diverged = div_a or div_b
        if diverged:
            n_div += 1
            r["delta"] = math.nan
        else:
            r["delta"] = r["itae_a"] - r["itae_b"]
        draws.append(r)
    positive = sum(1 for d in draws if d["delta"] > 0)
    return MonteCarloResult(draws=draws, fraction_positive=positive / spec.n_draws, n_diverged=n_div)
