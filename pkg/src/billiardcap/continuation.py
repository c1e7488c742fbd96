"""Penalty continuation eps -> 0 and extraction of the limiting billiard trajectory."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .actionloop import (
    CriticalPoint,
    DiscreteLoop,
    SolverOptions,
    el_residual,
    find_critical_point,
    make_seeds,
    node_energy,
    refine,
    remesh,
)
from .errors import (
    BilliardCapError,
    NoBouncesFound,
    SpeedNotUnit,
    StageDiverged,
    TangentialBounce,
    TauBlowup,
    TauCollapse,
)
from .geometry import default_d0, signed_dist
from .penalty import PenaltyConfig

log = logging.getLogger(__name__)

REFLECTION_TOL = 1e-3


@dataclass(frozen=True)
class Schedule:
    eps_start: float = 1e-1
    ratio: float = 0.25
    eps_end: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("schedule ratio must lie in (0, 1)")
        if not 0.0 < self.eps_end <= self.eps_start:
            raise ValueError("need 0 < eps_end <= eps_start")

    def stages(self, u_min=None, E=0.5, feasible_fraction=0.5):
        """Decreasing eps values, ending with the first value at or below ``eps_end``.

        Leading values for which ``eps * min U`` exceeds ``feasible_fraction * E`` are
        skipped: there the energy surface is empty or too thin to hold a loop.
        """
        out = []
        eps = self.eps_start
        while True:
            if u_min is None or eps * u_min <= feasible_fraction * E:
                out.append(eps)
            if eps <= self.eps_end * (1 + 1e-12):
                break
            eps *= self.ratio
        return out


@dataclass
class StageRecord:
    eps: float
    point: CriticalPoint
    tau: float
    kinetic_integral: float
    morse_index: int
    el_residual_max: float
    energy_std: float
    status: str = "converged"


@dataclass
class ContinuationTrace:
    stages: list
    schedule: Schedule
    d0: float
    E: float = 0.5
    status: str = "converged"
    message: str = ""

    @property
    def final(self):
        return self.stages[-1]

    def tau_fit(self, last=3):
        """Fit ``tau_k = tau_inf + C sqrt(eps_k)`` over the last stages."""
        st = self.stages[-last:]
        A = np.column_stack([np.ones(len(st)), np.sqrt([s.eps for s in st])])
        (tau_inf, C), *_ = np.linalg.lstsq(A, np.array([s.tau for s in st]), rcond=None)
        return float(tau_inf), float(C)


@dataclass
class BilliardTrajectory:
    bounce_points: np.ndarray
    normals: np.ndarray
    bounce_times: np.ndarray
    tau: float
    segment_lengths: np.ndarray = field(default=None)
    total_length: float = 0.0
    reflection_residuals: list = field(default_factory=list)
    speed_deviation: float = float("nan")
    closed: bool = True

    def __post_init__(self):
        b = np.asarray(self.bounce_points, dtype=float)
        self.bounce_points = b
        seg = np.linalg.norm(np.roll(b, -1, axis=0) - b, axis=1)
        self.segment_lengths = seg
        self.total_length = float(seg.sum())

    @property
    def bounce_count(self):
        return len(self.bounce_points)


def _record(domain, cfg, cp, E):
    loop = cp.loop
    energy = node_energy(domain, cfg, loop)
    return StageRecord(
        eps=cfg.eps,
        point=cp,
        tau=loop.tau,
        kinetic_integral=cp.kinetic_integral,
        morse_index=cp.morse_index_fixed_tau,
        el_residual_max=float(np.max(el_residual(domain, cfg, loop))),
        energy_std=float(np.std(energy)),
    )


def default_max_nodes(dim):
    return 4096 if dim == 2 else 2048


def solve_stage(domain, cfg, loop, E=0.5, opts=None, passes=3, energy_tol=5e-5,
                max_nodes=None):
    """Solve at fixed eps, alternating remeshing and re-solving.

    The node count doubles while the spread of the node energy exceeds
    ``energy_tol``, up to ``max_nodes``.
    """
    max_nodes = max_nodes or default_max_nodes(domain.dim)
    cp = find_critical_point(domain, cfg, loop, E, opts)
    while True:
        for _ in range(passes):
            new = remesh(domain, cfg, cp.loop)
            change = np.max(np.abs(np.log(new.edges / cp.loop.edges)))
            if change < 0.1:
                break
            cp = find_critical_point(domain, cfg, new, E, opts)
        spread = float(np.std(node_energy(domain, cfg, cp.loop)))
        if spread <= energy_tol or 2 * cp.loop.N > max_nodes:
            return cp
        cp = find_critical_point(domain, cfg, refine(cp.loop), E, opts)


def run_continuation(domain, base_cfg, E=0.5, schedule=None, seed=None, opts=None,
                     tau_floor=None, energy_tol=5e-5, max_nodes=None):
    """Track one critical point from ``seed`` down the eps schedule.

    ``seed`` is a loop solved (or close to a solution) at the first feasible eps.
    """
    schedule = schedule or Schedule()
    eps_list = schedule.stages(base_cfg.u_min, E)
    r_in = domain.inradius_estimate[0]
    tau_floor = 0.1 * r_in if tau_floor is None else tau_floor
    trace = ContinuationTrace(stages=[], schedule=schedule, d0=base_cfg.d0, E=E)
    loop = seed
    best_kin = np.inf
    prev_eps = None
    for eps in eps_list:
        cfg = base_cfg.with_eps(eps)
        try:
            cp = solve_stage(domain, cfg, loop, E, opts, energy_tol=energy_tol, max_nodes=max_nodes)
        except BilliardCapError as exc:
            if prev_eps is None:
                raise StageDiverged(eps, str(exc)) from exc
            # one retry through an intermediate eps
            mid = np.sqrt(prev_eps * eps)
            try:
                cp_mid = solve_stage(domain, base_cfg.with_eps(mid), loop, E, opts,
                                     energy_tol=energy_tol, max_nodes=max_nodes)
                cp = solve_stage(domain, cfg, cp_mid.loop, E, opts,
                                 energy_tol=energy_tol, max_nodes=max_nodes)
            except BilliardCapError as exc2:
                raise StageDiverged(eps, str(exc2)) from exc2
        rec = _record(domain, cfg, cp, E)
        best_kin = min(best_kin, rec.kinetic_integral)
        if rec.tau < tau_floor:
            raise TauCollapse(f"tau={rec.tau:.4g} below floor {tau_floor:.4g} at eps={eps:.3e}")
        if rec.tau > 196.0 * best_kin + 1.0:
            raise TauBlowup(f"tau={rec.tau:.4g} above 196*kinetic+1 at eps={eps:.3e}")
        trace.stages.append(rec)
        log.info("eps=%.3e N=%d tau=%.6f kinetic=%.6f index=%d", eps, cp.loop.N, rec.tau,
                 rec.kinetic_integral, rec.morse_index)
        loop = cp.loop
        prev_eps = eps
    return trace


# ---------------------------------------------------------------------------
# Extraction and checks
# ---------------------------------------------------------------------------

def _cyclic_runs(mask):
    """Index arrays of maximal runs of True in a cyclic boolean mask."""
    N = len(mask)
    if mask.all():
        return [np.arange(N)]
    start = int(np.argmin(mask))      # a False entry
    order = (np.arange(N) + start) % N
    runs, cur = [], []
    for i in order:
        if mask[i]:
            cur.append(i)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return runs


def discrete_curvature(points):
    a = points - np.roll(points, 1, axis=0)
    b = np.roll(points, -1, axis=0) - points
    la, lb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    cosang = np.clip(np.sum(a * b, axis=1) / (la * lb), -1.0, 1.0)
    return np.arccos(cosang) / (0.5 * (la + lb))


def extract_billiard(trace, domain, bounce_factor=3.0, speed_window_factor=10.0,
                     speed_tol=0.02):
    """Limit trajectory of a converged trace: bounce detection, speed check, chords.

    Bounces are runs of nodes closer to the wall than ``bounce_factor*sqrt(eps)``
    that contain a curvature spike. The unit-speed check skips nodes closer than
    ``speed_window_factor*sqrt(eps)``, where the wall potential still holds a
    visible share of the energy.
    """
    st = trace.final
    eps = st.eps
    if eps > 1e-5:
        raise ValueError(f"final eps {eps:.3e} too large for extraction (need <= 1e-5)")
    loop = st.point.loop
    pts = loop.points
    dist = -np.asarray(signed_dist(domain, pts))
    kappa = discrete_curvature(pts)
    med = float(np.median(kappa))
    spike = kappa > 10.0 * med
    tol = bounce_factor * np.sqrt(eps)
    runs = [r for r in _cyclic_runs(dist < tol) if spike[r].any()]
    if not runs:
        raise NoBouncesFound("no wall contacts in the final loop")
    idx = np.array([r[np.argmin(dist[r])] for r in runs])
    order = np.argsort(loop.mesh[idx])
    idx = idx[order]

    v = loop.velocities()
    speed = np.linalg.norm(v, axis=1)
    far = dist >= speed_window_factor * np.sqrt(eps)
    edge_far = far & np.roll(far, -1)
    if not edge_far.any():
        raise SpeedNotUnit("no straight segments outside the bounce layers")
    speed_dev = float(np.max(np.abs(speed[edge_far] - 1.0)))
    if speed_dev > speed_tol:
        raise SpeedNotUnit(f"segment speed deviates from 1 by {speed_dev:.3g}")

    _, y, nu = domain.closest(pts[idx])
    traj = BilliardTrajectory(bounce_points=y, normals=nu,
                              bounce_times=loop.tau * (loop.mesh[idx] - loop.mesh[0]),
                              tau=loop.tau, speed_deviation=speed_dev)
    if traj.bounce_count >= 2:
        traj.reflection_residuals = reflection_check(traj)
    return traj


def reflection_check(traj, normals=None):
    """Per-bounce mirror-law residuals of the chord polygon through the bounce points."""
    b = np.asarray(traj.bounce_points if hasattr(traj, "bounce_points") else traj, dtype=float)
    nu = np.asarray(traj.normals if normals is None else normals, dtype=float)
    u_in = b - np.roll(b, 1, axis=0)
    u_out = np.roll(b, -1, axis=0) - b
    u_in = u_in / np.linalg.norm(u_in, axis=1, keepdims=True)
    u_out = u_out / np.linalg.norm(u_out, axis=1, keepdims=True)
    return [reflection_residual(ui, uo, n) for ui, uo, n in zip(u_in, u_out, nu)]


def reflection_residual(u_in, u_out, nu):
    """Mirror-law residuals for one bounce with incoming/outgoing velocities."""
    a_in = float(np.dot(u_in, nu))
    a_out = float(np.dot(u_out, nu))
    if abs(a_out) <= 1e-6:
        raise TangentialBounce("outgoing direction is tangent to the boundary")
    return {
        "normal_flip_err": abs(a_out + a_in),
        "tangential_err": float(np.linalg.norm((u_out - a_out * nu) - (u_in - a_in * nu))),
        "speed_err": abs(float(np.linalg.norm(u_out) - np.linalg.norm(u_in))),
        "outgoing_normal": a_out,
    }


def chords_inside(domain, traj, samples=64, tol=1e-8):
    b = traj.bounce_points
    s = (np.arange(samples) + 0.5) / samples
    seg = b[:, None, :] + s[None, :, None] * (np.roll(b, -1, axis=0) - b)[:, None, :]
    return bool(np.all(np.asarray(signed_dist(domain, seg.reshape(-1, b.shape[1]))) <= tol))


def verify_bounds(traj, domain, r=None):
    """Report the bounce count, length and length/inradius ratio with verdicts."""
    if r is None:
        r = domain.inradius_estimate[0]
    n = domain.dim
    res = traj.reflection_residuals or reflection_check(traj)
    worst = max((max(x["normal_flip_err"], x["tangential_err"], x["speed_err"]) for x in res),
                default=0.0)
    ratio = traj.total_length / r
    return {
        "bounce_count": traj.bounce_count,
        "total_length": traj.total_length,
        "inradius": float(r),
        "ratio": ratio,
        "bounces_ok": traj.bounce_count <= n + 1,
        "ratio_floor_ok": ratio >= 4.0 - 0.01,
        "reflection_ok": worst <= REFLECTION_TOL,
        "max_residual": worst,
    }


# ---------------------------------------------------------------------------
# Multistart driver
# ---------------------------------------------------------------------------

@dataclass
class Branch:
    seed_index: int
    trace: ContinuationTrace = None
    trajectory: BilliardTrajectory = None
    status: str = "converged"
    message: str = ""

    @property
    def ok(self):
        return self.status == "converged" and self.trajectory is not None

    def sort_key(self):
        st = self.trace.final
        pts = np.round(self.trajectory.bounce_points, 9)
        lex = tuple(sorted(tuple(p) for p in pts.tolist()))
        return (round(st.kinetic_integral, 9), st.morse_index, lex)


@dataclass
class MultistartResult:
    domain: object
    cfg: PenaltyConfig
    schedule: Schedule
    eps_stages: list
    branches: list
    seed_failures: int
    best: Branch = None


def _hausdorff(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def _run_branch(args):
    domain, cfg, E, schedule, loop, opts, index = args
    br = Branch(seed_index=index)
    try:
        br.trace = run_continuation(domain, cfg, E, schedule, loop, opts)
        if br.trace.final.eps <= 1e-5:
            br.trajectory = extract_billiard(br.trace, domain)
    except BilliardCapError as exc:
        br.status = type(exc).__name__
        br.message = str(exc)
    return br


def default_N(dim):
    return 256 if dim == 2 else 128


def multistart(domain, d0=None, E=0.5, schedule=None, N=None, seeds=8, rng_seed=0,
               jobs=1, max_branches=3, opts=None):
    """Seed, solve at the first eps, continue distinct branches and select the best.

    Selection: smallest final kinetic integral, then smallest Morse index, then
    lexicographic bounce points, all on successfully extracted branches.
    """
    schedule = schedule or Schedule()
    d0 = default_d0(domain) if d0 is None else d0
    base = PenaltyConfig(d0, schedule.eps_start)
    eps_list = schedule.stages(base.u_min, E)
    if not eps_list:
        raise StageDiverged(schedule.eps_start, "no feasible eps in the schedule")
    N = N or default_N(domain.dim)
    rng = np.random.default_rng(rng_seed)
    cfg0 = base.with_eps(eps_list[0])
    seed_loops = make_seeds(domain, cfg0, N, seeds, rng, E)

    # seed solves only have to land in the basin of the first stage solve
    base_opts = opts or SolverOptions()
    seed_opts = replace(base_opts, tol=max(base_opts.tol, 1e-6),
                        max_iters=min(base_opts.max_iters, 40))
    solved, failures = [], 0
    for i, loop in enumerate(seed_loops):
        try:
            cp = find_critical_point(domain, cfg0, loop, E, seed_opts)
        except BilliardCapError as exc:
            log.info("seed %d failed: %s", i, exc)
            failures += 1
            continue
        solved.append((i, cp))
    solved.sort(key=lambda t: (round(t[1].kinetic_integral, 9), t[1].morse_index_fixed_tau, t[0]))
    distinct = []
    scale = domain.scale
    for i, cp in solved:
        spacing = np.max(np.linalg.norm(cp.loop.velocities(), axis=1) * cp.loop.edges)
        dup = any(abs(cp.kinetic_integral - o.kinetic_integral) <= 1e-5 * o.kinetic_integral
                  and _hausdorff(cp.loop.points, o.loop.points) < 1e-3 * scale + spacing
                  for _, o in distinct)
        if not dup:
            distinct.append((i, cp))
    distinct = distinct[:max_branches]

    tasks = [(domain, base, E, schedule, cp.loop, opts, i) for i, cp in distinct]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            branches = list(ex.map(_run_branch, tasks))
    else:
        branches = [_run_branch(t) for t in tasks]
    branches.sort(key=lambda b: b.seed_index)

    result = MultistartResult(domain=domain, cfg=base, schedule=schedule, eps_stages=eps_list,
                              branches=branches, seed_failures=failures)
    good = [b for b in branches if b.ok]
    if good:
        result.best = min(good, key=Branch.sort_key)
    return result
