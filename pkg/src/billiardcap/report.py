"""Run reports: JSON assembly and schema validation, the stage CSV and SVG figures."""

from __future__ import annotations

import csv
import json
from functools import lru_cache
from importlib import resources

import numpy as np
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from .errors import SchemaError

SCHEMAS = ("domain", "trajectory", "report", "inradius", "shot", "verdict")


@lru_cache(maxsize=None)
def _registry():
    pairs = []
    for name in SCHEMAS:
        text = resources.files("billiardcap.schemas").joinpath(f"{name}.schema.json").read_text()
        pairs.append((f"{name}.schema.json", Resource.from_contents(json.loads(text))))
    return Registry().with_resources(pairs)


def load_schema(name):
    return _registry()[f"{name}.schema.json"].contents


def validate(obj, name):
    """Raise :class:`SchemaError` unless ``obj`` matches the named schema."""
    validator = Draft202012Validator(load_schema(name), registry=_registry())
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise SchemaError(f"{name} schema violation at {where}: {e.message}")


def jsonable(obj):
    """Convert numpy scalars and arrays (recursively) to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path, obj, schema=None):
    obj = jsonable(obj)
    if schema is not None:
        validate(obj, schema)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return obj


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

def stage_row(st):
    return {
        "eps": st.eps,
        "N": st.point.loop.N,
        "tau": st.tau,
        "kinetic_integral": st.kinetic_integral,
        "morse_index": st.morse_index,
        "el_residual_max": st.el_residual_max,
        "energy_std": st.energy_std,
        "status": st.status,
    }


def branch_entry(br):
    stages = [stage_row(s) for s in br.trace.stages] if br.trace is not None else []
    traj = br.trajectory
    return {
        "seed_index": br.seed_index,
        "status": br.status,
        "message": br.message,
        "stages": stages,
        "length": traj.total_length if traj is not None else None,
        "bounce_count": traj.bounce_count if traj is not None else None,
    }


def best_entry(br, checks, cross):
    traj = br.trajectory
    tau_inf, C = br.trace.tau_fit()
    return {
        "seed_index": br.seed_index,
        "length": traj.total_length,
        "tau": traj.tau,
        "tau_inf": tau_inf,
        "tau_fit_C": C,
        "bounces": [{"point": p, "normal": nu, "time": t}
                    for p, nu, t in zip(traj.bounce_points, traj.normals, traj.bounce_times)],
        "bounce_count": traj.bounce_count,
        "ratio": checks["ratio"],
        "residuals": traj.reflection_residuals,
        "speed_deviation": traj.speed_deviation,
        "checks": checks,
        "crosscheck": cross,
    }


TRACE_COLUMNS = ("branch", "stage", "eps", "N", "tau", "kinetic_integral", "morse_index",
                 "el_residual_max", "energy_std", "status")


def write_trace_csv(path, branches):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for br in branches:
            for k, row in enumerate(br["stages"]):
                w.writerow([br["seed_index"], k, repr(row["eps"]), row["N"], repr(row["tau"]),
                            repr(row["kinetic_integral"]), row["morse_index"],
                            repr(row["el_residual_max"]), repr(row["energy_std"]), row["status"]])


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _boundary_contour(ax, domain):
    from .geometry import signed_dist

    lo, hi = domain.shape.bbox()
    pad = 0.05 * (hi - lo)
    xs = np.linspace(lo[0] - pad[0], hi[0] + pad[0], 240)
    ys = np.linspace(lo[1] - pad[1], hi[1] + pad[1], 240)
    X, Y = np.meshgrid(xs, ys)
    Z = signed_dist(domain, np.stack([X, Y], axis=-1).reshape(-1, 2)).reshape(X.shape)
    ax.contour(X, Y, Z, levels=[0.0], colors="black", linewidths=1.0)


def plot_trajectory(path, domain, bounce_points, loop_points=None, title=None):
    """SVG of the boundary, the smooth penalized loop and the chord polygon (n = 2)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "billiardcap"
    fig, ax = plt.subplots(figsize=(6, 4))
    _boundary_contour(ax, domain)
    if loop_points is not None:
        lp = np.vstack([loop_points, loop_points[:1]])
        ax.plot(lp[:, 0], lp[:, 1], color="tab:blue", lw=0.8, alpha=0.6, label="penalized loop")
    b = np.asarray(bounce_points)
    bp = np.vstack([b, b[:1]])
    ax.plot(bp[:, 0], bp[:, 1], color="tab:red", lw=1.5, label="billiard orbit")
    ax.plot(b[:, 0], b[:, 1], "o", color="tab:red", ms=4)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_shot(path, domain, polyline):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "billiardcap"
    fig, ax = plt.subplots(figsize=(6, 4))
    _boundary_contour(ax, domain)
    p = np.asarray(polyline)
    ax.plot(p[:, 0], p[:, 1], color="tab:red", lw=0.6)
    ax.plot(p[:1, 0], p[:1, 1], "o", color="tab:green", ms=4)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
