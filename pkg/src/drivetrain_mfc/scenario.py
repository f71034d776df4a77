"""Scenario files: a JSON document with sections plant, controller, trajectory,
sim, tuning and montecarlo. Unknown keys are rejected.

Every section is optional; missing keys take the library defaults listed in
``SCHEMA`` (which also feeds the CLI help text).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .control import ControllerConfig, FFConfig, IPGains, PPIGains
from .errors import InvalidParameterError
from .plant import PlantParams, WearParams
from .sim import Scenario
from .trajectory import Trajectory, benchmark_trajectory, trajectory_from_file, waypoint_trajectory
from .tuning import DEFAULT_BOUNDS, MonteCarloSpec, TuneSpec, controller_values, default_free_params

SECTIONS = ("plant", "controller", "trajectory", "sim", "tuning", "montecarlo")

_PLANT_KEYS = ("f1", "D1", "Jm", "Jl", "Kt", "Fc", "Fv", "backlash_width", "sgn_epsilon",
               "a_s_mode", "cs_denominator")
_CTRL_KEYS = ("kind", "n_d", "i_max", "ppi", "ip", "ff")
_SIM_KEYS = ("h_ctrl", "h_plant", "T", "w_u", "seed", "noise_theta", "noise_omega")
_TRAJ_KEYS = ("preset", "file", "times", "points")
_TUNE_KEYS = ("free_params", "x0", "max_evals", "tol", "restart")
_MC_KEYS = ("n_draws", "f1_mean", "f1_std", "D1_mean", "D1_std", "seed", "controller_a", "controller_b")


def _names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))


# Flat key listing used for --help; nested controller groups are dotted.
SCHEMA = {
    "plant": _PLANT_KEYS,
    "controller": ("kind", "n_d", "i_max") + tuple("ppi." + k for k in _names(PPIGains))
    + tuple("ip." + k for k in _names(IPGains)) + tuple("ff." + k for k in _names(FFConfig)),
    "trajectory": _TRAJ_KEYS,
    "sim": _SIM_KEYS,
    "tuning": _TUNE_KEYS,
    "montecarlo": _MC_KEYS,
}


@dataclass
class ScenarioFile:
    scenario: Scenario
    tuning: TuneSpec | None
    montecarlo: MonteCarloSpec | None
    mc_controllers: tuple[ControllerConfig, ControllerConfig] | None
    raw: dict


def _check_keys(section: str, data, allowed) -> dict:
    if not isinstance(data, dict):
        raise InvalidParameterError(f"{section}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise InvalidParameterError(f"{section}: unknown key(s) {', '.join(unknown)}")
    return data


def _num(section: str, key: str, v, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidParameterError(f"{section}.{key}: expected a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise InvalidParameterError(f"{section}.{key}: expected an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise InvalidParameterError(f"{section}.{key}: must be finite")
    return float(v)


def _build(cls, section: str, data: dict, base=None):
    """Instantiate a flat dataclass from ``data`` with type coercion."""
    data = _check_keys(section, data, _names(cls))
    base = base if base is not None else cls()
    kw = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        default = getattr(base, f.name)
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise InvalidParameterError(f"{section}.{f.name}: expected true/false")
        elif isinstance(default, int):
            v = _num(section, f.name, v, integer=True)
        elif isinstance(default, float):
            v = _num(section, f.name, v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise InvalidParameterError(f"{section}.{f.name}: expected a string")
        kw[f.name] = v
    return replace(base, **kw)


def parse_plant(data: dict) -> PlantParams:
    data = dict(_check_keys("plant", data, _PLANT_KEYS))
    wear = {k: data.pop(k) for k in ("f1", "D1") if k in data}
    w = _build(WearParams, "plant", wear)
    p = _build(PlantParams, "plant", data)
    return replace(p, wear=w)


def parse_controller(data: dict, section: str = "controller") -> ControllerConfig:
    data = dict(_check_keys(section, data, _CTRL_KEYS))
    sub = {}
    for key, cls in (("ppi", PPIGains), ("ip", IPGains), ("ff", FFConfig)):
        if key in data:
            sub[key] = _build(cls, f"{section}.{key}", data.pop(key))
    cfg = _build(ControllerConfig, section, data)
    return replace(cfg, **sub)


def parse_trajectory(data, h_ctrl: float, base_dir: Path) -> Trajectory | str:
    if isinstance(data, str):
        data = {"preset": data}
    data = _check_keys("trajectory", data, _TRAJ_KEYS)
    modes = [k for k in ("preset", "file", "times") if k in data]
    if len(modes) > 1:
        raise InvalidParameterError(f"trajectory: choose one of preset, file, times (got {modes})")
    if "points" in data and "times" not in data:
        raise InvalidParameterError("trajectory.points requires trajectory.times")
    if "file" in data:
        path = Path(data["file"])
        if not path.is_absolute():
            path = base_dir / path
        return trajectory_from_file(path)
    if "times" in data:
        if "points" not in data:
            raise InvalidParameterError("trajectory.times requires trajectory.points")
        return waypoint_trajectory(data["times"], data["points"], h_ctrl)
    preset = data.get("preset", "benchmark")
    if preset != "benchmark":
        raise InvalidParameterError(f"trajectory.preset: unknown preset {preset!r}")
    return benchmark_trajectory(h_ctrl)


def parse_sim(data: dict) -> dict:
    data = _check_keys("sim", data, _SIM_KEYS)
    out = {}
    for k, v in data.items():
        out[k] = _num("sim", k, v, integer=(k == "seed"))
    return out


def parse_tuning(data: dict, scenario: Scenario) -> TuneSpec:
    data = _check_keys("tuning", data, _TUNE_KEYS)
    kind = scenario.controller.kind
    free = default_free_params(kind)
    if "free_params" in data:
        fp = data["free_params"]
        if isinstance(fp, list):
            fp = {n: DEFAULT_BOUNDS.get(n) for n in fp}
        if not isinstance(fp, dict) or not fp:
            raise InvalidParameterError("tuning.free_params: expected a non-empty object or list")
        free = {}
        for name, b in fp.items():
            if b is None:
                raise InvalidParameterError(f"tuning.free_params: unknown parameter {name!r}")
            if not (isinstance(b, (list, tuple)) and len(b) == 2):
                raise InvalidParameterError(f"tuning.free_params.{name}: expected [lower, upper]")
            free[name] = (_num("tuning.free_params", name, b[0]), _num("tuning.free_params", name, b[1]))
    allowed = default_free_params(kind)
    for name in free:
        if name not in allowed:
            raise InvalidParameterError(f"tuning.free_params: {name!r} is not a {kind} gain")
    x0 = None
    if "x0" in data:
        if not isinstance(data["x0"], dict):
            raise InvalidParameterError("tuning.x0: expected an object")
        x0 = {k: _num("tuning.x0", k, v) for k, v in data["x0"].items()}
        missing = set(free) - set(x0)
        if set(x0) - set(free):
            raise InvalidParameterError(f"tuning.x0: keys {sorted(set(x0) - set(free))} are not free parameters")
        x0.update(controller_values(scenario.controller, sorted(missing)))
    spec = TuneSpec(scenario=scenario, free_params=free, x0=x0,
                    max_evals=_num("tuning", "max_evals", data.get("max_evals", 400), integer=True),
                    tol=_num("tuning", "tol", data.get("tol", 1e-4)),
                    restart=data.get("restart", True))
    if not isinstance(spec.restart, bool):
        raise InvalidParameterError("tuning.restart: expected true/false")
    spec.validate()
    return spec


def parse_montecarlo(data: dict):
    data = dict(_check_keys("montecarlo", data, _MC_KEYS))
    ca = data.pop("controller_a", None)
    cb = data.pop("controller_b", None)
    spec = _build(MonteCarloSpec, "montecarlo", data)
    spec.validate()
    a = parse_controller(ca, "montecarlo.controller_a") if ca is not None else ControllerConfig(kind="ppi")
    b = parse_controller(cb, "montecarlo.controller_b") if cb is not None else ControllerConfig(kind="ipip")
    a.validate()
    b.validate()
    return spec, (a, b)


def parse_scenario(doc: dict, base_dir: Path | str = ".", seed: int | None = None) -> ScenarioFile:
    """Build the domain objects from a decoded scenario document.

    ``seed`` overrides both ``sim.seed`` and ``montecarlo.seed``.
    """
    base_dir = Path(base_dir)
    doc = _check_keys("scenario", doc, SECTIONS)
    plant = parse_plant(doc.get("plant", {}))
    ctrl = parse_controller(doc.get("controller", {}))
    sim_kw = parse_sim(doc.get("sim", {}))
    if seed is not None:
        sim_kw["seed"] = int(seed)
    h_ctrl = sim_kw.get("h_ctrl", Scenario.h_ctrl)
    traj = parse_trajectory(doc.get("trajectory", {}), h_ctrl, base_dir)
    if "T" not in sim_kw and not (isinstance(traj, Trajectory) and traj.meta.get("name") == "benchmark"):
        sim_kw["T"] = round(traj.T - traj.t[0], 12)
    scenario = Scenario(plant=plant, controller=ctrl, trajectory=traj, **sim_kw)
    scenario.validate()
    scenario.resolve_trajectory()

    tuning = parse_tuning(doc["tuning"], scenario) if "tuning" in doc else None
    mc, pair = None, None
    if "montecarlo" in doc:
        mc_doc = dict(doc["montecarlo"]) if isinstance(doc["montecarlo"], dict) else doc["montecarlo"]
        if seed is not None and isinstance(mc_doc, dict):
            mc_doc["seed"] = int(seed)
        mc, pair = parse_montecarlo(mc_doc)
    return ScenarioFile(scenario=scenario, tuning=tuning, montecarlo=mc, mc_controllers=pair, raw=doc)


def load_scenario(path, seed: int | None = None) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidParameterError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc, path.parent, seed)
