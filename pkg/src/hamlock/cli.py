"""Command-line front end: ``hamlock {check-model,one-bump,multibump,flow,diagnose}``.

Each run writes ``report.json`` and CSV traces into the output directory.
Exit status is 0 on pass, 1 on a failed verification or solve, 2 on a bad
configuration.
"""

from __future__ import annotations

import argparse
import copy
import datetime
import json
import logging
import math
import os
import sys
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from . import __version__
from .diagnostics import DecayError, bump_decompose, cc_classify, decay_rate, mass_profile, windowed_mass
from .errors import HamlockError, ModelError, SeparationError, SolverError
from .functional import action, residual
from .model import AssumptionGrid, check_assumptions, from_config
from .mountainpass import PathConfig, SolverConfig, find_one_bump
from .multibump import MultibumpConfig, find_multibump, make_separation
from .seq import Sequence, norm_star, read_csv, write_csv
from .solvers import StepControl, descend

log = logging.getLogger("hamlock")

COMMANDS = ("check-model", "one-bump", "multibump", "flow", "diagnose")

DEFAULTS = {
    "model": {"name": "scalar_power", "params": [1.0, 4.0]},
    "window": 80,
    "seed": 0,
    "out": "hamlock-out",
    "solver": {"tol_res": 1e-10, "tol_grad": 1e-8, "max_newton": 50, "max_rounds": 200},
    "path": {"nodes": 64, "delta_path": 0.5},
    "multibump": {"k": 2, "N": 4, "spacing": 48, "r": 0.1, "eps": None, "window": None,
                  "tol_level": 1e-6},
    "flow": {"steps": 200, "scale": 0.8, "noise": 0.0, "h0": 1.0, "tol": 1e-10},
    "diagnose": {"input": None, "sep": 3, "thresh": 1e-3, "flow_steps": 20},
}


class ConfigError(HamlockError, ValueError):
    """The run configuration is malformed or inconsistent."""


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict) and key != "model":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where + key!r} must be an object")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def resolve_config(cmd: str, user: Optional[dict] = None, overrides: Optional[dict] = None) -> dict:
    """Merge defaults, the config file and command-line overrides, then validate."""
    cfg = _merge(DEFAULTS, user or {})
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, name = key.rpartition(".")
        (cfg[section] if section else cfg)[name] = val
    _validate(cmd, cfg)
    return cfg


def _validate(cmd: str, cfg: dict):
    def positive(name, val, kind=float):
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
            raise ConfigError(f"{name} must be a positive number, got {val!r}")
        if kind is int and int(val) != val:
            raise ConfigError(f"{name} must be an integer, got {val!r}")

    if not isinstance(cfg["model"], dict):
        raise ConfigError("model must be an object")
    positive("window", cfg["window"], int)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {cfg['seed']!r}")
    for k in ("tol_res", "tol_grad"):
        positive(f"solver.{k}", cfg["solver"][k])
    for k in ("max_newton", "max_rounds"):
        positive(f"solver.{k}", cfg["solver"][k], int)
    positive("path.nodes", cfg["path"]["nodes"], int)
    if cfg["path"]["nodes"] < 3:
        raise ConfigError("path.nodes must be >= 3")
    positive("path.delta_path", cfg["path"]["delta_path"])
    mb = cfg["multibump"]
    for k in ("k", "N", "spacing"):
        positive(f"multibump.{k}", mb[k], int)
    positive("multibump.r", mb["r"])
    positive("multibump.tol_level", mb["tol_level"])
    if mb["eps"] is not None:
        positive("multibump.eps", mb["eps"])
    if cmd == "multibump":
        need = 4 * mb["spacing"] * mb["k"]
        if mb["window"] is None:
            mb["window"] = max(400, need)
        positive("multibump.window", mb["window"], int)
        if mb["window"] < need:
            raise ConfigError(f"multibump.window {mb['window']} below 4*spacing*k = {need}")
    fl = cfg["flow"]
    positive("flow.steps", fl["steps"], int)
    for k in ("scale", "h0", "tol"):
        positive(f"flow.{k}", fl[k])
    if not fl["noise"] >= 0:
        raise ConfigError("flow.noise must be >= 0")
    dg = cfg["diagnose"]
    if dg["sep"] < 3:
        raise ConfigError("diagnose.sep must be >= 3")
    positive("diagnose.thresh", dg["thresh"])
    if not isinstance(dg["flow_steps"], int) or dg["flow_steps"] < 0:
        raise ConfigError("diagnose.flow_steps must be a nonnegative integer")


# -- output helpers ------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _write_report(out: FsPath, report: dict):
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    (out / "report.json").write_text(text + "\n")


def _write_rows(path: FsPath, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row) + "\n")


def _solver_config(cfg: dict) -> SolverConfig:
    s = cfg["solver"]
    path = PathConfig(nodes=int(cfg["path"]["nodes"]), delta_path=float(cfg["path"]["delta_path"]))
    return SolverConfig(window=int(cfg["window"]), path=path, max_rounds=int(s["max_rounds"]),
                        tol_res=float(s["tol_res"]), tol_grad=float(s["tol_grad"]),
                        max_newton=int(s["max_newton"]))


def _one_bump(m, cfg, out: FsPath, prefix: str = ""):
    rep = find_one_bump(m, _solver_config(cfg))
    write_csv(out / f"{prefix}solution.csv", rep.solution)
    mm = rep.extras.get("minimax")
    if mm:
        _write_rows(out / f"{prefix}path_levels.csv", ["round", "level"], enumerate(mm["history"]))
    return rep


# -- commands ------------------------------------------------------------------

def cmd_check_model(m, cfg, out):
    rep = check_assumptions(m, AssumptionGrid(seed=cfg["seed"]))
    return rep.passed, {"model": m.describe(), "assumptions": rep.to_dict()}


def cmd_one_bump(m, cfg, out):
    rep = _one_bump(m, cfg, out)
    v = rep.solution
    result = {"solve": rep.to_dict(), "ps_bound": m.ps_coefficient * rep.star_norm ** 2}
    if rep.converged:
        try:
            result["decay_rate"] = decay_rate(v)
        except DecayError as exc:
            result["decay_rate"] = None
            result["decay_error"] = str(exc)
    return rep.converged, result


def cmd_multibump(m, cfg, out):
    mb = cfg["multibump"]
    P = make_separation(int(mb["k"]), int(mb["N"]), m.period, int(mb["spacing"]), int(mb["window"]))
    one = _one_bump(m, cfg, out, prefix="one_bump_")
    result = {"one_bump": one.to_dict(), "points": list(P.points)}
    if not one.converged:
        result["message"] = "one-bump solve failed: " + one.message
        return False, result
    mcfg = MultibumpConfig(window=int(mb["window"]), tol_res=float(cfg["solver"]["tol_res"]),
                           tol_grad=float(cfg["solver"]["tol_grad"]), tol_level=float(mb["tol_level"]),
                           eps=mb["eps"], max_newton=int(cfg["solver"]["max_newton"]))
    rep = find_multibump(one.solution, P, m, float(mb["r"]), mcfg)
    write_csv(out / "solution.csv", rep.solution)
    result["multibump"] = rep.to_dict()
    return rep.passed, result


def _start_sequence(m, cfg, out):
    src = cfg["diagnose"]["input"]
    if src:
        return read_csv(src), {"input": str(src)}
    rep = _one_bump(m, cfg, out, prefix="one_bump_")
    if not rep.converged:
        raise SolverError("one-bump solve failed: " + rep.message)
    return rep.solution, {"one_bump": rep.to_dict()}


def cmd_flow(m, cfg, out):
    fl = cfg["flow"]
    rep = _one_bump(m, cfg, out, prefix="one_bump_")
    if not rep.converged:
        return False, {"one_bump": rep.to_dict(), "message": "one-bump solve failed: " + rep.message}
    v = rep.solution
    vals = float(fl["scale"]) * v.values
    if fl["noise"] > 0:
        rng = np.random.default_rng(cfg["seed"])
        vals = vals + float(fl["noise"]) * rng.standard_normal(vals.shape)
    u0 = Sequence(v.base, vals, v.dim)
    w = int(cfg["window"])
    traj = descend(u0, m, int(fl["steps"]), StepControl(h0=float(fl["h0"]), tol=float(fl["tol"])),
                   window=(-w, w))
    (out / "flow.csv").write_text(traj.to_csv())
    write_csv(out / "final.csv", traj.final)
    a = np.asarray(traj.actions)
    monotone = bool(np.all(np.diff(a) <= 0))
    result = {"one_bump_action": rep.action_value, "initial_action": float(a[0]),
              "final_action": float(a[-1]), "final_grad_norm": float(traj.grad_norms[-1]),
              "steps_taken": len(a) - 1, "converged": traj.converged, "stagnated": traj.stagnated,
              "monotone": monotone}
    return monotone and not traj.stagnated, result


def cmd_diagnose(m, cfg, out):
    dg = cfg["diagnose"]
    u, source = _start_sequence(m, cfg, out)
    result = dict(source)
    result["action"] = action(u, m)
    result["star_norm"] = norm_star(u, m)
    result["residual_sup"] = residual(u, m).sup_norm()
    ok = True
    try:
        lam = decay_rate(u)
        result["decay_rate"] = lam
        ok = 0 < lam < 1
    except DecayError as exc:
        result["decay_rate"] = None
        result["decay_error"] = str(exc)
        ok = False
    dec = bump_decompose(u, m, int(dg["sep"]), float(dg["thresh"]))
    result["decomposition"] = dec.to_dict()
    rho = mass_profile(u)
    write_csv(out / "mass_profile.csv", rho)
    if dg["flow_steps"] > 0:
        traj = descend(u, m, int(dg["flow_steps"]))
        rhos = [mass_profile(x) for x in traj.iterates if not x.is_zero]
        verdict = cc_classify(rhos)
        result["cc"] = verdict.to_dict()
        rows = []
        for i, r in enumerate(rhos):
            for N in (1, 2, 4, 8, 16):
                mass, c = windowed_mass(r, N)
                rows.append((i, N, c, mass))
        _write_rows(out / "windowed_mass.csv", ["iter", "N", "center", "mass"], rows)
    return ok, result


HANDLERS = {
    "check-model": cmd_check_model,
    "one-bump": cmd_one_bump,
    "multibump": cmd_multibump,
    "flow": cmd_flow,
    "diagnose": cmd_diagnose,
}


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hamlock", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hamlock {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=FsPath, help="JSON run configuration")
        p.add_argument("--out", type=FsPath, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--window", type=int, help="bounding window half-width")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--model", help="gallery model name")
        p.add_argument("--params", type=float, nargs="+", help="gallery model parameters")
        if name == "multibump":
            p.add_argument("--k", type=int)
            p.add_argument("--N", type=int)
            p.add_argument("--spacing", type=int)
            p.add_argument("--r", type=float)
        if name == "diagnose":
            p.add_argument("--input", type=FsPath, help="sequence CSV to diagnose")
        if name == "flow":
            p.add_argument("--steps", type=int)
            p.add_argument("--scale", type=float)
    return ap


def _overrides(args) -> dict:
    ov = {"seed": args.seed, "out": str(args.out) if args.out else None}
    if args.command != "multibump":
        ov["window"] = args.window
    else:
        # --window targets the bounding window of the multibump solve
        ov["multibump.window"] = args.window
        for k in ("k", "N", "spacing", "r"):
            ov[f"multibump.{k}"] = getattr(args, k)
    if args.command == "diagnose" and args.input:
        ov["diagnose.input"] = str(args.input)
    if args.command == "flow":
        ov["flow.steps"] = args.steps
        ov["flow.scale"] = args.scale
    return ov


def run(cmd: str, cfg: dict, out: FsPath) -> int:
    """Execute a resolved configuration and write its report; returns the exit status."""
    started = datetime.datetime.now(datetime.timezone.utc)
    report = {"command": cmd, "config": cfg}
    status = 1
    try:
        m = from_config(cfg["model"])
        out.mkdir(parents=True, exist_ok=True)
        ok, result = HANDLERS[cmd](m, cfg, out)
        report["result"] = result
        report["status"] = "pass" if ok else "fail"
        status = 0 if ok else 1
    except (ConfigError, ModelError, SeparationError) as exc:
        report["status"] = "config-error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 2
    except (SolverError, DecayError, FloatingPointError) as exc:
        report["status"] = "fail"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    finished = datetime.datetime.now(datetime.timezone.utc)
    report["metadata"] = {"started": started.isoformat(), "finished": finished.isoformat(),
                          "elapsed_s": (finished - started).total_seconds(),
                          "version": __version__, "threads": os.environ.get("HAMLOCK_THREADS", "1")}
    _write_report(out, report)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or FsPath(DEFAULTS["out"])
    try:
        user = {}
        if args.config:
            user = json.loads(args.config.read_text())
            if not isinstance(user, dict):
                raise ConfigError("config file must hold a JSON object")
        if args.model or args.params:
            model = dict(user.get("model", DEFAULTS["model"]))
            if args.model:
                model = {"name": args.model}
            if args.params:
                model["params"] = args.params
            user["model"] = model
        cfg = resolve_config(args.command, user, _overrides(args))
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        _write_report(out, {"command": args.command, "status": "config-error",
                            "error": {"type": type(exc).__name__, "message": str(exc)},
                            "metadata": {"version": __version__}})
        if not args.quiet:
            print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = FsPath(cfg["out"])
    status = run(args.command, cfg, out)
    if not args.quiet:
        label = {0: "pass", 1: "fail", 2: "config error"}[status]
        print(f"hamlock {args.command}: {label} (report: {out / 'report.json'})")
    return status


if __name__ == "__main__":
    sys.exit(main())
