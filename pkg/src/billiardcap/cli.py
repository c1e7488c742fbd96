"""Command-line front end: ``billiardcap find|shoot|inradius|verify``.

Exit codes: 0 success, 1 failed checks, 2 empty interior, 3 continuation
failure, 4 tangential incidence, 5 invalid input (schema or config).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .billiard import crosscheck, orbit_catalog, shoot
from .continuation import (
    BilliardTrajectory,
    Schedule,
    default_N,
    multistart,
    reflection_check,
    verify_bounds,
)
from .errors import (
    BilliardCapError,
    DomainSpecError,
    EmptyInterior,
    MarchStall,
    NoConvergence,
    SchemaError,
    StageDiverged,
    TangentialBounce,
    TangentialIncidence,
)
from .geometry import default_d0, domain_from_spec, inradius
from .report import (
    best_entry,
    branch_entry,
    plot_shot,
    plot_trajectory,
    validate,
    write_json,
    write_trace_csv,
)

log = logging.getLogger("billiardcap")

EXIT_OK, EXIT_CHECKS, EXIT_EMPTY, EXIT_CONTINUATION, EXIT_TANGENTIAL, EXIT_INPUT = range(6)

# option name -> (type, default)
OPTIONS = {
    "domain": (str, None),
    "out": (str, "."),
    "d0": (float, None),
    "N": (int, None),
    "eps_start": (float, 1e-1),
    "eps_ratio": (float, 0.25),
    "eps_end": (float, 1e-6),
    "seeds": (int, 8),
    "max_branches": (int, 3),
    "rng_seed": (int, 0),
    "jobs": (int, 1),
    "grid_density": (float, None),
    "start": (str, None),
    "dir": (str, None),
    "max_bounces": (int, 10),
    "trajectory": (str, None),
    "timestamp": (bool, False),
}


def _vector(text, name):
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(x) for x in str(text).split(",")])
    except ValueError:
        raise SchemaError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="billiardcap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, domain=True):
        sp.add_argument("--config", help="run-config JSON; explicit flags take precedence")
        if domain:
            sp.add_argument("--domain", help="domain JSON file")
        sp.add_argument("--out", help="output directory (created if missing)")

    f = sub.add_parser("find", help="continuation pipeline for a short periodic orbit")
    common(f)
    f.add_argument("--d0", type=float)
    f.add_argument("--N", type=int, help="initial node count")
    f.add_argument("--eps-start", type=float)
    f.add_argument("--eps-ratio", type=float)
    f.add_argument("--eps-end", type=float)
    f.add_argument("--seeds", type=int)
    f.add_argument("--max-branches", type=int)
    f.add_argument("--rng-seed", type=int)
    f.add_argument("--jobs", type=int)
    f.add_argument("--timestamp", action="store_const", const=True,
                   help="add a timestamp field to report.json")

    s = sub.add_parser("shoot", help="follow a billiard ray")
    common(s)
    s.add_argument("--start", help="start point, e.g. 0,0")
    s.add_argument("--dir", help="direction, e.g. 1,0")
    s.add_argument("--max-bounces", type=int)

    r = sub.add_parser("inradius", help="largest inscribed ball")
    common(r)
    r.add_argument("--grid-density", type=float)

    v = sub.add_parser("verify", help="check a stored trajectory")
    common(v, domain=False)
    v.add_argument("--trajectory", help="trajectory JSON file")
    return p


def resolve_config(args):
    """Merge defaults, the optional config file and explicit flags (in that order)."""
    cfg = {k: d for k, (_, d) in OPTIONS.items()}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise SchemaError(f"config file {path} does not exist")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"config file is not JSON: {exc}") from None
        unknown = set(data) - set(OPTIONS)
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            typ = OPTIONS[k][0]
            cfg[k] = v if typ in (str,) and isinstance(v, list) else (typ(v) if v is not None else None)
    for k in OPTIONS:
        val = getattr(args, k, None)
        if val is not None:
            cfg[k] = val
    if cfg["d0"] is not None and not 0.0 < cfg["d0"] < 0.5:
        raise SchemaError("d0 must lie in (0, 1/2)")
    if not 0.0 < cfg["eps_ratio"] < 1.0:
        raise SchemaError("eps-ratio must lie in (0, 1)")
    if not 0.0 < cfg["eps_end"] <= cfg["eps_start"]:
        raise SchemaError("need 0 < eps-end <= eps-start")
    if cfg["N"] is not None and (cfg["N"] < 32 or cfg["N"] % 2):
        raise SchemaError("N must be even and at least 32")
    if cfg["seeds"] < 1 or cfg["jobs"] < 1 or cfg["max_branches"] < 1:
        raise SchemaError("seeds, jobs and max-branches must be positive")
    return cfg


def _load_domain(cfg):
    if not cfg["domain"]:
        raise SchemaError("--domain is required")
    path = Path(cfg["domain"])
    if not path.is_file():
        raise SchemaError(f"domain file {path} does not exist")
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"domain file is not JSON: {exc}") from None
    validate(spec, "domain")
    return domain_from_spec(spec)


def _outdir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_inradius(cfg):
    domain = _load_domain(cfg)
    r, w = inradius(domain, cfg["grid_density"])
    out = _outdir(cfg)
    write_json(out / "inradius.json", {"domain": domain.to_spec(), "r": r, "witness": w,
                                       "grid_density": cfg["grid_density"]}, "inradius")
    print(f"r = {r:.12g} witness = {np.array2string(np.asarray(w), precision=12)}")
    return EXIT_OK


def cmd_shoot(cfg):
    domain = _load_domain(cfg)
    if cfg["start"] is None or cfg["dir"] is None:
        raise SchemaError("shoot needs --start and --dir")
    start = _vector(cfg["start"], "start")
    u = _vector(cfg["dir"], "dir")
    if len(start) != domain.dim or len(u) != domain.dim or not np.linalg.norm(u) > 0:
        raise SchemaError("start and dir must be nonzero vectors of the domain dimension")
    u = u / np.linalg.norm(u)
    shot = shoot(domain, start, u, cfg["max_bounces"])
    out = _outdir(cfg)
    write_json(out / "shot.json", {
        "domain": domain.to_spec(), "start": start, "direction": u,
        "max_bounces": cfg["max_bounces"], "polyline": shot.polyline,
        "bounces": [{"point": b.point, "normal": b.normal} for b in shot.bounces],
        "length": shot.length,
    }, "shot")
    if domain.dim == 2:
        plot_shot(out / "shot.svg", domain, shot.polyline)
    log.info("%d bounces, length %.12g", len(shot.bounces), shot.length)
    return EXIT_OK


def _checks(domain, best, checks, cross):
    n = domain.dim
    traj = best.trajectory
    stages = best.trace.stages
    tau_inf, C = best.trace.tau_fit()
    return {
        "bounces_ok": checks["bounces_ok"],
        "ratio_floor_ok": checks["ratio_floor_ok"],
        "reflection_ok": checks["reflection_ok"],
        "crosscheck_ok": bool(cross is not None and cross["passed"]),
        "morse_index_ok": all(s.morse_index <= n + 1 for s in stages),
        "energy_ok": all(s.energy_std <= 1e-4 for s in stages),
        "el_residual_ok": all(s.el_residual_max <= 1e-6 for s in stages),
        "tau_length_ok": abs(tau_inf - traj.total_length) <= 0.01 * traj.total_length,
        "tau_stability_ok": abs(C) < 10.0,
        "speed_ok": traj.speed_deviation <= 0.02,
    }


def cmd_find(cfg):
    domain = _load_domain(cfg)
    r, w = domain.inradius_estimate
    out = _outdir(cfg)
    schedule = Schedule(cfg["eps_start"], cfg["eps_ratio"], cfg["eps_end"])
    d0 = cfg["d0"] if cfg["d0"] is not None else default_d0(domain)
    N = cfg["N"] or default_N(domain.dim)
    try:
        res = multistart(domain, d0=d0, schedule=schedule, N=N, seeds=cfg["seeds"],
                         rng_seed=cfg["rng_seed"], jobs=cfg["jobs"],
                         max_branches=cfg["max_branches"])
    except StageDiverged as exc:
        log.error("%s", exc)
        res = None
    branches = [branch_entry(b) for b in res.branches] if res else []
    report = {
        "schema_version": 1,
        "command": "find",
        "domain": domain.to_spec(),
        "d0": d0,
        "N": N,
        "rng_seed": cfg["rng_seed"],
        "seeds": cfg["seeds"],
        "seed_failures": res.seed_failures if res else cfg["seeds"],
        "schedule": {"eps_start": schedule.eps_start, "ratio": schedule.ratio,
                     "eps_end": schedule.eps_end, "stages": res.eps_stages if res else []},
        "inradius": {"r": r, "witness": w},
        "branches": branches,
        "best": None,
        "orbit_catalog": [],
        "checks": {},
    }
    if cfg["timestamp"]:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    write_trace_csv(out / "trace.csv", branches)
    best = res.best if res else None
    if best is None:
        report["status"] = "continuation_failed"
        write_json(out / "report.json", report, "report")
        log.error("no branch survived the continuation")
        return EXIT_CONTINUATION

    traj = best.trajectory
    checks = verify_bounds(traj, domain, r)
    try:
        cross = crosscheck(traj, domain)
    except BilliardCapError as exc:
        log.warning("crosscheck failed: %s", exc)
        cross = None
    report["best"] = best_entry(best, checks, cross if cross is not None else {"passed": False})
    report["orbit_catalog"] = orbit_catalog(domain)
    report["checks"] = _checks(domain, best, checks, cross)
    ok = all(report["checks"].values())
    report["status"] = "ok" if ok else "bounds_failed"
    write_json(out / "report.json", report, "report")
    write_json(out / "trajectory.json", {
        "domain": domain.to_spec(), "bounce_points": traj.bounce_points, "normals": traj.normals,
        "bounce_times": traj.bounce_times, "tau": traj.tau, "length": traj.total_length,
    }, "trajectory")
    if domain.dim == 2:
        plot_trajectory(out / "trajectory.svg", domain, traj.bounce_points,
                        best.trace.final.point.loop.points,
                        title=f"length {traj.total_length:.6f}, {traj.bounce_count} bounces")
    log.info("best length %.9f with %d bounces, ratio %.6f", traj.total_length,
             traj.bounce_count, checks["ratio"])
    return EXIT_OK if ok else EXIT_CHECKS


def cmd_verify(cfg):
    if not cfg["trajectory"]:
        raise SchemaError("verify needs --trajectory")
    path = Path(cfg["trajectory"])
    if not path.is_file():
        raise SchemaError(f"trajectory file {path} does not exist")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"trajectory file is not JSON: {exc}") from None
    validate(data, "trajectory")
    domain = domain_from_spec(data["domain"])
    pts = np.asarray(data["bounce_points"], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != domain.dim:
        raise SchemaError("bounce points do not match the domain dimension")
    _, y, nu = domain.closest(pts)
    traj = BilliardTrajectory(bounce_points=y, normals=nu, bounce_times=np.zeros(len(y)),
                              tau=float(data.get("tau", 0.0)))
    out = _outdir(cfg)
    verdict = {"passed": False, "reflection": [], "bounds": {}, "crosscheck": None}
    try:
        traj.reflection_residuals = reflection_check(traj)
    except TangentialBounce as exc:
        verdict["message"] = str(exc)
        write_json(out / "verdict.json", verdict, "verdict")
        return EXIT_CHECKS
    verdict["reflection"] = traj.reflection_residuals
    verdict["bounds"] = verify_bounds(traj, domain)
    try:
        verdict["crosscheck"] = crosscheck(traj, domain)
    except BilliardCapError as exc:
        verdict["message"] = f"crosscheck failed: {exc}"
    verdict["passed"] = bool(verdict["bounds"]["reflection_ok"] and verdict["crosscheck"] is not None
                             and verdict["crosscheck"]["passed"])
    write_json(out / "verdict.json", verdict, "verdict")
    return EXIT_OK if verdict["passed"] else EXIT_CHECKS


COMMANDS = {"find": cmd_find, "shoot": cmd_shoot, "inradius": cmd_inradius, "verify": cmd_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (SchemaError, DomainSpecError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT
    except EmptyInterior as exc:
        log.error("empty interior: %s", exc)
        return EXIT_EMPTY
    except TangentialIncidence as exc:
        log.error("tangential incidence: %s", exc)
        return EXIT_TANGENTIAL
    except StageDiverged as exc:
        log.error("%s", exc)
        return EXIT_CONTINUATION
    except (MarchStall, NoConvergence) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())
