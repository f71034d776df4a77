"""Command-line entry point: ``drivetrain-mfc simulate|compare|tune|montecarlo``.

Exit codes: 0 ok, 2 scenario validation error, 3 divergence, 4 tuning failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import svg
from .control import ControllerConfig
from .errors import InvalidParameterError, OptimizationFailed, SimulationDiverged, TrajectoryFormatError
from .plant import D1_RANGE, F1_RANGE
from .scenario import SCHEMA, ScenarioFile, load_scenario
from .sim import run
from .tuning import TuneSpec, controller_values, default_free_params, monte_carlo, tune, with_gains

log = logging.getLogger("drivetrain_mfc")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_TUNING = 0, 2, 3, 4
THREADS_ENV = "DRIVETRAIN_MFC_THREADS"

# The two reference operating conditions at opposite corners of the wear domain.
SIGMA_1 = (F1_RANGE[1], D1_RANGE[1])
SIGMA_2 = (F1_RANGE[0], D1_RANGE[0])

COMPARE_ROWS = ("ppi_nominal", "ppi_tuned", "ipip", "ipip_ff", "ipip_ff_wrong")

CONSUMES = {
    "simulate": ("plant", "controller", "trajectory", "sim"),
    "compare": ("plant", "controller", "trajectory", "sim", "tuning"),
    "tune": ("plant", "controller", "trajectory", "sim", "tuning"),
    "montecarlo": ("plant", "trajectory", "sim", "montecarlo"),
}

DESCRIPTIONS = {
    "simulate": "Run one closed-loop simulation. Writes series.csv, metrics.json, tracking_error.svg.",
    "compare": "Run the five-configuration comparison at the scenario's (f1, D1). Writes comparison.csv; "
               "tuned gains are cached in tuned_cache.json inside the output directory.",
    "tune": "Optimize the scenario controller's gains against J = ITAE + w_u IAU. "
            "Writes tuned_gains.json and tuning_log.csv. Requires a tuning section.",
    "montecarlo": "Monte Carlo robustness sweep over (f1, D1). Writes montecarlo.csv, stem.svg, "
                  "histograms.svg. Requires a montecarlo section.",
}


def _keys_help(cmd: str) -> str:
    lines = ["scenario keys consumed:"]
    for sec in CONSUMES[cmd]:
        lines.append(f"  {sec}: " + ", ".join(SCHEMA[sec]))
    if cmd == "montecarlo":
        lines.append("  (plant.f1 and plant.D1 are replaced by the drawn values)")
    return "\n".join(lines)


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get(THREADS_ENV, "").strip()
        if not env:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise InvalidParameterError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise InvalidParameterError("threads must be >= 1")
    return n


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(sf: ScenarioFile, out: Path, threads: int = 1) -> int:
    r = run(sf.scenario)
    _write(out / "series.csv", r.series_csv())
    _write(out / "metrics.json", r.metrics_json())
    err = r.series["theta_l"] - r.series["theta_ref"]
    _write(out / "tracking_error.svg",
           svg.line_plot(r.series["t"], err, "t [s]", "theta_l - theta_ref [rad]", "Tracking error"))
    print(f"ITAE={r.itae!r} IAU={r.iau!r} J={r.j!r}")
    if r.diverged:
        print(f"simulation diverged at t={r.fail_time!r} s", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# --------------------------------------------------------------------------
# tune
# --------------------------------------------------------------------------

def _log_csv(entries: list[dict], names: list[str]) -> str:
    cols = ["eval"] + names + ["itae", "iau", "j"]
    lines = [",".join(cols)]
    for e in entries:
        lines.append(",".join([str(e["eval"])] + [repr(float(e[c])) for c in cols[1:]]))
    return "\n".join(lines) + "\n"


def cmd_tune(sf: ScenarioFile, out: Path, threads: int = 1) -> int:
    if sf.tuning is None:
        raise InvalidParameterError("tuning section missing from scenario")
    res = tune(sf.tuning)
    names = list(sf.tuning.free_params)
    doc = {"kind": sf.scenario.controller.kind, "gains": res.gains, "j": res.j, "itae": res.itae,
           "iau": res.iau, "x0": sf.tuning.x0, "x0_j": res.x0_j, "n_evals": len(res.log)}
    _write(out / "tuned_gains.json", _json(doc))
    _write(out / "tuning_log.csv", _log_csv(res.log, names))
    print(f"J={res.j!r} (x0: {res.x0_j!r}) after {len(res.log)} evaluations")
    for k in names:
        print(f"  {k} = {res.gains[k]!r}")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

def wrong_ff_params(f1: float, D1: float) -> tuple[float, float]:
    """The reference condition farther from ``(f1, D1)`` in normalized coordinates."""
    def dist(s):
        return (((s[0] - f1) / (F1_RANGE[1] - F1_RANGE[0])) ** 2
                + ((s[1] - D1) / (D1_RANGE[1] - D1_RANGE[0])) ** 2)
    return max((SIGMA_1, SIGMA_2), key=dist)


def _cache_key(spec: TuneSpec) -> str:
    sc = spec.scenario
    traj = sc.resolve_trajectory()
    h = hashlib.sha256()
    meta = {"plant": asdict(sc.plant), "controller": asdict(sc.controller), "h_ctrl": sc.h_ctrl,
            "h_plant": sc.h_plant, "T": sc.T, "w_u": sc.w_u, "seed": sc.seed,
            "noise": [sc.noise_theta, sc.noise_omega], "free": spec.free_params, "x0": spec.x0,
            "max_evals": spec.max_evals, "tol": spec.tol, "restart": spec.restart}
    h.update(json.dumps(meta, sort_keys=True).encode())
    for a in (traj.t, traj.theta_ref, traj.dtheta_ref, traj.ddtheta_ref):
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


def _tuned(spec: TuneSpec, cache: dict, label: str) -> ControllerConfig:
    key = _cache_key(spec)
    if key in cache:
        log.info("%s: reusing cached gains", label)
        return with_gains(spec.scenario.controller, cache[key]["gains"])
    log.info("%s: tuning (max_evals=%d)", label, spec.max_evals)
    res = tune(spec)
    cache[key] = {"label": label, "gains": res.gains, "j": res.j}
    return res.controller


def comparison_specs(sf: ScenarioFile) -> tuple[TuneSpec, TuneSpec]:
    """Tuning problems for the P-PI and iP-iP rows at the scenario's condition."""
    sc = sf.scenario
    opts = {"max_evals": 400, "tol": 1e-4, "restart": True}
    if sf.tuning is not None:
        opts = {k: getattr(sf.tuning, k) for k in opts}
    out = []
    for kind in ("ppi", "ipip"):
        cfg = replace(sc.controller, kind=kind, ff=replace(sc.controller.ff, model_based=False))
        scn = replace(sc, controller=cfg)
        free = default_free_params(kind)
        if sf.tuning is not None and sf.tuning.scenario.controller.kind == kind:
            free = sf.tuning.free_params
        out.append(TuneSpec(scenario=scn, free_params=free, x0=controller_values(cfg, list(free)), **opts))
    return out[0], out[1]


def cmd_compare(sf: ScenarioFile, out: Path, threads: int = 1) -> int:
    sc = sf.scenario
    wear = sc.plant.wear
    cache_path = out / "tuned_cache.json"
    cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}
    spec_ppi, spec_ipip = comparison_specs(sf)
    rows: list[tuple[str, float, float]] = []
    code = EXIT_OK

    def add(label, cfg):
        r = run(replace(sc, controller=cfg))
        if r.diverged:
            log.warning("%s diverged at t=%s s", label, r.fail_time)
        rows.append((label, r.itae, r.iau))

    try:
        add("ppi_nominal", spec_ppi.scenario.controller)
        add("ppi_tuned", _tuned(spec_ppi, cache, "ppi_tuned"))
        ipip = _tuned(spec_ipip, cache, "ipip")
        add("ipip", ipip)
        add("ipip_ff", replace(ipip, ff=replace(ipip.ff, model_based=True, ff_f1=wear.f1, ff_D1=wear.D1)))
        wf1, wD1 = wrong_ff_params(wear.f1, wear.D1)
        add("ipip_ff_wrong", replace(ipip, ff=replace(ipip.ff, model_based=True, ff_f1=wf1, ff_D1=wD1)))
    except OptimizationFailed as exc:
        print(f"tuning failed: {exc}", file=sys.stderr)
        code = EXIT_TUNING
    finally:
        lines = ["config,itae,iau"] + [f"{n},{a!r},{b!r}" for n, a, b in rows]
        _write(out / "comparison.csv", "\n".join(lines) + "\n")
        _write(cache_path, _json(cache))
    for n, a, b in rows:
        print(f"{n:14s} ITAE={a:.6e} IAU={b:.6e}")
    return code


# --------------------------------------------------------------------------
# montecarlo
# --------------------------------------------------------------------------

def cmd_montecarlo(sf: ScenarioFile, out: Path, threads: int = 1) -> int:
    if sf.montecarlo is None:
        raise InvalidParameterError("montecarlo section missing from scenario")
    ca, cb = sf.mc_controllers
    sa = replace(sf.scenario, controller=ca)
    sb = replace(sf.scenario, controller=cb)
    with warnings.catch_warnings():
        # draws occasionally leave the nominal wear domain; that is part of the study
        warnings.simplefilter("ignore")
        res = monte_carlo(sf.montecarlo, sa, sb, workers=threads)
    _write(out / "montecarlo.csv", res.csv())
    delta = [d["delta"] for d in res.draws]
    _write(out / "stem.svg", svg.stem_plot(delta, "draw", "ITAE difference [rad s^2]",
                                           "ITAE(a) - ITAE(b) per draw"))
    _write(out / "histograms.svg", svg.histograms(
        [(np.array([d["f1"] for d in res.draws]), "f1 [Hz]"),
         (np.array([d["D1"] for d in res.draws]), "D1 [-]")]))
    print(f"fraction_positive={res.fraction_positive:.3f}")
    if res.n_diverged:
        print(f"{res.n_diverged} draw(s) diverged", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "tune": cmd_tune, "montecarlo": cmd_montecarlo}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drivetrain-mfc",
                                 description="Two-mass drive-train simulation with P-PI and iP-iP control.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, description=DESCRIPTIONS[name], epilog=_keys_help(name),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="override sim.seed and montecarlo.seed")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes for Monte Carlo (fallback: ${THREADS_ENV}, else 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        threads = resolve_threads(args.threads)
        sf = load_scenario(args.scenario, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](sf, out, threads)
    except (InvalidParameterError, TrajectoryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OptimizationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TUNING


if __name__ == "__main__":
    sys.exit(main())
