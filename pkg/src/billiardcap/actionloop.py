"""Discrete free-time action on closed loops and its critical points.

A loop is sampled at ``N`` nodes ``t_i`` of the circle R/Z (uniform by default,
graded near bounces during continuation). With edges ``h_i = t_{i+1} - t_i``,
node weights ``w_i = (h_{i-1} + h_i)/2`` and ``D_i = G_{i+1} - G_i``::

    A(G, tau) = sum_i |D_i|^2 / (2 tau h_i) - tau eps sum_i w_i U(G_i) + tau E

Gradients and Hessians below are exact derivatives of this sum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.linalg import splu
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.sparse.linalg import eigsh

from .errors import (
    DegenerateTau,
    HessianAssemblyFailure,
    LeftDomain,
    NoConvergence,
    OutsideDomain,
)
from .geometry import signed_dist
from .penalty import normal_stiffness, potential_U

log = logging.getLogger(__name__)

TAU_FLOOR = 1e-6


@dataclass(frozen=True)
class DiscreteLoop:
    points: np.ndarray
    tau: float
    mesh: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        N = pts.shape[0]
        if N < 32 or N % 2:
            raise ValueError(f"N must be even and >= 32, got {N}")
        if self.mesh is None:
            object.__setattr__(self, "mesh", np.arange(N) / N)
        mesh = np.asarray(self.mesh, dtype=float)
        if mesh.shape != (N,) or np.any(np.diff(mesh) <= 0) or mesh[-1] - mesh[0] >= 1.0:
            raise ValueError("mesh must be N strictly increasing times spanning less than one period")
        object.__setattr__(self, "mesh", mesh)
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def edges(self):
        return np.diff(np.append(self.mesh, self.mesh[0] + 1.0))

    @property
    def weights(self):
        h = self.edges
        return 0.5 * (h + np.roll(h, 1))

    @property
    def uniform(self):
        return np.allclose(self.edges, 1.0 / self.N, rtol=1e-12, atol=0.0)

    def pack(self):
        return np.append(self.points.ravel(), self.tau)

    def unpack(self, x):
        return replace(self, points=x[:-1].reshape(self.points.shape), tau=float(x[-1]))

    def velocities(self):
        """Physical edge velocities ``D_i / (tau h_i)``."""
        D = np.roll(self.points, -1, axis=0) - self.points
        return D / (self.tau * self.edges)[:, None]


@dataclass(frozen=True)
class CriticalPoint:
    loop: DiscreteLoop
    energy_residual: float
    grad_norm: float
    morse_index_fixed_tau: int
    action_value: float
    kinetic_integral: float
    iterations: int = 0


@dataclass
class SolverOptions:
    tol: float = 1e-9          # target for the scaled per-node EL residual and |dA/dtau|
    stall_tol: float = 1e-7    # accepted when the iteration stalls at the rounding floor
    max_iters: int = 100
    lbfgs_iters: int = 0
    polish_iters: int = 3
    index_rel_tol: float = 1e-7
    dense_limit: int = 800    # largest system solved through a dense eigendecomposition


# ---------------------------------------------------------------------------
# Functional and derivatives
# ---------------------------------------------------------------------------

def _potential_terms(domain, cfg, pts, order):
    if cfg.eps == 0.0:
        N, n = pts.shape
        inside = np.asarray(signed_dist(domain, pts)) < 0
        if not inside.all():
            raise OutsideDomain("loop node outside the domain")
        return np.zeros(N), np.zeros((N, n)), np.zeros((N, n, n))
    U, gU, HU = potential_U(domain, cfg, pts)
    return U, gU, HU


def kinetic_integral(loop):
    """Integral of |d gamma/dt|^2 over one physical period."""
    D = np.roll(loop.points, -1, axis=0) - loop.points
    return float(np.sum(np.sum(D * D, axis=1) / loop.edges) / loop.tau)


def action(domain, cfg, loop, E):
    U, _, _ = _potential_terms(domain, cfg, loop.points, 0)
    K = kinetic_integral(loop) * loop.tau
    return float(0.5 * K / loop.tau - loop.tau * cfg.eps * np.dot(loop.weights, U) + loop.tau * E)


def _grad_parts(cfg, loop, E, U, gU):
    tau, h, w = loop.tau, loop.edges, loop.weights
    D = np.roll(loop.points, -1, axis=0) - loop.points
    flux = D / (tau * h)[:, None]
    dG = np.roll(flux, 1, axis=0) - flux - tau * cfg.eps * w[:, None] * gU
    K = np.sum(np.sum(D * D, axis=1) / h)
    dtau = -0.5 * K / tau ** 2 - cfg.eps * np.dot(w, U) + E
    return dG, float(dtau)


def action_grad(domain, cfg, loop, E):
    """Exact gradient of the discrete action: ``(dG (N, n), dtau)``."""
    U, gU, _ = _potential_terms(domain, cfg, loop.points, 1)
    return _grad_parts(cfg, loop, E, U, gU)


def _hessian_blocks(cfg, loop, U, gU, HU):
    """Block form of the Hessian.

    Returns the diagonal blocks ``(N, n, n)``, the scalar coupling ``b_i`` of the
    block ``(i, i+1) = b_i I``, the tau column ``(N, n)`` and the tau-tau entry.
    """
    n = loop.dim
    tau, h, w = loop.tau, loop.edges, loop.weights
    c = 1.0 / (tau * h)
    diag = (c + np.roll(c, 1))[:, None, None] * np.eye(n) - tau * cfg.eps * w[:, None, None] * HU
    D = np.roll(loop.points, -1, axis=0) - loop.points
    flux = D / (tau * tau * h)[:, None]
    cross = -np.roll(flux, 1, axis=0) + flux - cfg.eps * w[:, None] * gU
    corner = float(np.sum(np.sum(D * D, axis=1) / h) / tau ** 3)
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(cross)) and np.isfinite(corner)):
        raise HessianAssemblyFailure("non-finite entries in the action Hessian")
    return diag, -c, cross, corner


def _dense_from_blocks(blocks):
    diag, off, cross, corner = blocks
    N, n, _ = diag.shape
    H = np.zeros((N * n + 1, N * n + 1))
    G = H[:-1, :-1].reshape(N, n, N, n)
    idx = np.arange(N)
    nxt = np.roll(idx, -1)
    G[idx, :, idx, :] = diag
    G[idx, :, nxt, :] += off[:, None, None] * np.eye(n)
    G[nxt, :, idx, :] += off[:, None, None] * np.eye(n)
    H[:-1, -1] = cross.ravel()
    H[-1, :-1] = cross.ravel()
    H[-1, -1] = corner
    return H


def _sparse_from_blocks(blocks, with_tau=True):
    diag, off, cross, corner = blocks
    N, n, _ = diag.shape
    M = N * n
    base = (np.arange(N) * n)[:, None, None]
    a = np.arange(n)
    rows = [(base + a[None, :, None]) + 0 * a[None, None, :]]
    cols = [(base + a[None, None, :]) + 0 * a[None, :, None]]
    vals = [diag]
    i = np.repeat(np.arange(N) * n, n) + np.tile(a, N)
    j = np.repeat(np.roll(np.arange(N), -1) * n, n) + np.tile(a, N)
    o = np.repeat(off, n)
    rows += [i, j]
    cols += [j, i]
    vals += [o, o]
    if with_tau:
        k = np.arange(M)
        rows += [k, np.full(M, M), np.array([M])]
        cols += [np.full(M, M), k, np.array([M])]
        vals += [cross.ravel(), cross.ravel(), np.array([corner])]
        M += 1
    r = np.concatenate([np.ravel(x) for x in rows])
    c = np.concatenate([np.ravel(x) for x in cols])
    v = np.concatenate([np.ravel(x) for x in vals])
    return scipy.sparse.csc_matrix((v, (r, c)), shape=(M, M))


def _hessian_from_terms(cfg, loop, U, gU, HU):
    return _dense_from_blocks(_hessian_blocks(cfg, loop, U, gU, HU))


def action_hessian(domain, cfg, loop, E, sparse=False):
    """Hessian in the packed variable ``(G.ravel(), tau)``; dense unless ``sparse``."""
    U, gU, HU = _potential_terms(domain, cfg, loop.points, 2)
    blocks = _hessian_blocks(cfg, loop, U, gU, HU)
    return _sparse_from_blocks(blocks) if sparse else _dense_from_blocks(blocks)


def fixed_tau_hessian(domain, cfg, loop, sparse=False):
    U, gU, HU = _potential_terms(domain, cfg, loop.points, 2)
    blocks = _hessian_blocks(cfg, loop, U, gU, HU)
    if sparse:
        return _sparse_from_blocks(blocks, with_tau=False)
    return _dense_from_blocks(blocks)[:-1, :-1]


def node_energy(domain, cfg, loop):
    """``|v|^2/2 + eps U`` at nodes; kinetic part averaged over the two adjacent edges."""
    U, _, _ = _potential_terms(domain, cfg, loop.points, 0)
    v = loop.velocities()
    ke = 0.5 * np.sum(v * v, axis=1)
    h = loop.edges
    ke_node = (np.roll(h * ke, 1) + h * ke) / (np.roll(h, 1) + h)
    return ke_node + cfg.eps * U


def el_residual(domain, cfg, loop):
    """Per-node residual of the discrete equation ``G'' + tau^2 eps grad U = 0``.

    Reported relative to ``max(1, |tau^2 eps grad U|)`` so that nodes in the stiff
    bounce layer are judged against the size of the forces acting there.
    """
    U, gU, _ = _potential_terms(domain, cfg, loop.points, 1)
    h, w, tau = loop.edges, loop.weights, loop.tau
    D = np.roll(loop.points, -1, axis=0) - loop.points
    slope = D / h[:, None]
    second = (slope - np.roll(slope, 1, axis=0)) / w[:, None]
    force = tau * tau * cfg.eps * gU
    res = np.linalg.norm(second + force, axis=1)
    return res / np.maximum(1.0, np.linalg.norm(force, axis=1))


def optimal_tau(domain, cfg, points, E, mesh=None):
    """Period minimizing the action for a fixed loop shape (closed form)."""
    probe = DiscreteLoop(points, 1.0, mesh)
    U, _, _ = _potential_terms(domain, cfg, points, 0)
    K = kinetic_integral(probe)
    c = E - cfg.eps * np.dot(probe.weights, U)
    if c <= 0 or K <= 0:
        raise DegenerateTau("no positive stationary period for this loop")
    return float(np.sqrt(0.5 * K / c))


# ---------------------------------------------------------------------------
# Morse index
# ---------------------------------------------------------------------------

def _largest_abs_eig(H):
    if H.shape[0] <= 400:
        return float(np.max(np.abs(np.linalg.eigvalsh(H.toarray()))))
    # a constant start vector lies in the kernel of the free kinetic part
    v0 = np.random.default_rng(0).standard_normal(H.shape[0])
    val = eigsh(H, k=1, which="LM", v0=v0, return_eigenvectors=False, tol=1e-6)
    return float(abs(val[0]))


def negative_inertia(H, shift):
    """Number of eigenvalues of symmetric ``H`` below ``-shift`` via LDL^T (Sylvester)."""
    A = H + shift * np.eye(H.shape[0])
    _, D, _ = scipy.linalg.ldl(A, lower=True)
    count = 0
    i = 0
    M = D.shape[0]
    while i < M:
        if i + 1 < M and D[i + 1, i] != 0.0:
            count += int(np.sum(np.linalg.eigvalsh(D[i:i + 2, i:i + 2]) < 0))
            i += 2
        else:
            count += int(D[i, i] < 0)
            i += 1
    return count


def cyclic_block_inertia(diag, off, shift):
    """Eigenvalues below ``-shift`` of a cyclic block-tridiagonal matrix.

    ``diag`` holds the ``(N, n, n)`` diagonal blocks and ``off[i]`` the scalar of
    the block ``(i, i+1) = off[i] I`` (indices mod N). Block Gaussian elimination of
    nodes ``0..N-3`` carries a border toward node ``N-1``; by Sylvester's law the
    count is the number of negative pivot eigenvalues plus those of the final
    2n x 2n Schur complement.
    """
    N, n, _ = diag.shape
    eye = np.eye(n)
    A = diag + shift * eye
    count = 0
    D = A[0]
    C = off[N - 1] * eye                # coupling of the current node to node N-1
    last = A[N - 1].copy()
    for i in range(N - 2):
        lam, V = np.linalg.eigh(D)
        count += int(np.sum(lam < 0))
        Dinv = (V / lam) @ V.T
        b = off[i]
        last -= C.T @ Dinv @ C
        D = A[i + 1] - b * b * Dinv
        C = -b * (Dinv @ C)
        if i + 1 == N - 2:
            C = C + off[N - 2] * eye
    S = np.block([[D, C], [C.T, last]])
    return count + int(np.sum(np.linalg.eigvalsh(S) < 0))


def morse_index_fixed_tau(domain, cfg, at, E=0.5, rel_tol=1e-7):
    """Count eigenvalues below ``-rel_tol * |lambda|_max`` of the loop Hessian at fixed tau."""
    loop = at.loop if isinstance(at, CriticalPoint) else at
    U, gU, HU = _potential_terms(domain, cfg, loop.points, 2)
    blocks = _hessian_blocks(cfg, loop, U, gU, HU)
    Hs = _sparse_from_blocks(blocks, with_tau=False)
    return cyclic_block_inertia(blocks[0], blocks[1], rel_tol * _largest_abs_eig(Hs))


# ---------------------------------------------------------------------------
# Critical point search
# ---------------------------------------------------------------------------

def _evaluate(domain, cfg, loop, E, hess):
    U, gU, HU = _potential_terms(domain, cfg, loop.points, 2 if hess else 1)
    dG, dtau = _grad_parts(cfg, loop, E, U, gU)
    g = np.append(dG.ravel(), dtau)
    H = _hessian_from_terms(cfg, loop, U, gU, HU) if hess else None
    return g, H


def _try_grad(domain, cfg, loop, E):
    if loop.tau < TAU_FLOOR:
        return None
    try:
        return _evaluate(domain, cfg, loop, E, False)[0]
    except OutsideDomain:
        return None


def _scaled_residual(domain, cfg, loop, g):
    """Largest of the scaled per-node EL residual and ``|dA/dtau|``."""
    return max(float(np.max(el_residual(domain, cfg, loop))), abs(float(g[-1])))


def _lbfgs_warm_start(domain, cfg, loop, E, iters):
    """A few L-BFGS steps on half the squared gradient norm."""
    def fun(x):
        trial = loop.unpack(x)
        if trial.tau < TAU_FLOOR:
            return 1e30, np.zeros_like(x)
        try:
            U, gU, HU = _potential_terms(domain, cfg, trial.points, 2)
        except OutsideDomain:
            return 1e30, np.zeros_like(x)
        dG, dtau = _grad_parts(cfg, trial, E, U, gU)
        g = np.append(dG.ravel(), dtau)
        H = _sparse_from_blocks(_hessian_blocks(cfg, trial, U, gU, HU))
        return 0.5 * float(g @ g), H @ g

    res = minimize(fun, loop.pack(), jac=True, method="L-BFGS-B",
                   options={"maxiter": iters, "gtol": 0.0, "ftol": 0.0})
    cand = loop.unpack(res.x)
    g = _try_grad(domain, cfg, cand, E)
    return cand if g is not None else loop


def find_critical_point(domain, cfg, seed, E=0.5, opts=None):
    """Solve grad A = 0 from ``seed`` by damped Newton iterations on |grad A|.

    Small systems take Levenberg-Marquardt steps in the eigenbasis of the dense
    Hessian, so indefinite and nearly singular directions (symmetries) are damped
    rather than amplified. Large systems take sparse Newton steps with
    backtracking and fall back to sparse Levenberg-Marquardt steps. Trial points
    leaving the domain are rejected.
    """
    opts = opts or SolverOptions()
    tol = opts.tol
    loop = seed
    g = _try_grad(domain, cfg, loop, E)
    if g is None:
        raise LeftDomain("seed loop is not inside the domain")
    gn = float(np.linalg.norm(g))
    res = _scaled_residual(domain, cfg, loop, g)
    iters = 0
    if res > tol:
        if opts.lbfgs_iters:
            loop = _lbfgs_warm_start(domain, cfg, loop, E, opts.lbfgs_iters)
            g = _try_grad(domain, cfg, loop, E)
            gn = float(np.linalg.norm(g))
            res = _scaled_residual(domain, cfg, loop, g)
        mu = 0.0
        polish = 0
        while True:
            if res <= tol:
                if polish >= opts.polish_iters:
                    break
                polish += 1
            if iters >= opts.max_iters:
                if res <= tol:
                    break
                raise NoConvergence(f"no convergence after {iters} iterations (residual {res:.3e})")
            iters += 1
            near = res <= opts.stall_tol
            gn_prev = gn
            if len(g) <= opts.dense_limit:
                loop, g, gn, mu, accepted = _dense_lm_step(domain, cfg, loop, E, g, gn, mu)
            else:
                loop, g, gn, mu, accepted = _sparse_step(domain, cfg, loop, E, g, gn, mu, near)
            if not accepted:
                if near:
                    break
                raise NoConvergence(f"damped Newton stalled at residual {res:.3e}")
            res = _scaled_residual(domain, cfg, loop, g)
            if near and res <= opts.stall_tol and gn > 0.5 * gn_prev:
                break       # rounding floor reached
            if loop.tau < TAU_FLOOR:
                raise DegenerateTau(f"period collapsed to {loop.tau:.3e}")
    return _summarize(domain, cfg, loop, E, gn, iters, opts)


def _accept(domain, cfg, loop, E, x, step, gn):
    if x[-1] + step[-1] < TAU_FLOOR:
        return None
    trial = loop.unpack(x + step)
    gt = _try_grad(domain, cfg, trial, E)
    if gt is None:
        return None
    gtn = float(np.linalg.norm(gt))
    return (trial, gt, gtn) if gtn < gn else None


def _dense_lm_step(domain, cfg, loop, E, g, gn, mu):
    """One Levenberg-Marquardt step in the eigenbasis of the dense Hessian."""
    _, H = _evaluate(domain, cfg, loop, E, True)
    lam, V = np.linalg.eigh(H)
    lmax = float(np.max(np.abs(lam)))
    mu_floor = (1e-13 * lmax) ** 2
    gv = V.T @ g
    x = loop.pack()
    # the undamped step first: it is quadratically convergent once it is accepted
    hit = _accept(domain, cfg, loop, E, x, -V @ (lam / (lam * lam + mu_floor) * gv), 0.5 * gn)
    if hit is not None:
        return (*hit, mu / 16.0, True)
    for _ in range(60):
        m = max(mu, mu_floor)
        step = -V @ (lam / (lam * lam + m) * gv)
        hit = _accept(domain, cfg, loop, E, x, step, gn)
        if hit is not None:
            trial, gt, gtn = hit
            pred = float(np.linalg.norm(g + H @ step))
            ratio = (gn * gn - gtn * gtn) / max(gn * gn - pred * pred, 1e-300)
            if ratio > 0.75:
                mu = mu / 16.0
            return trial, gt, gtn, mu, True
        mu = max(4.0 * m, (1e-8 * lmax) ** 2)
    return loop, g, gn, mu, False


def _sparse_step(domain, cfg, loop, E, g, gn, mu, near=False):
    """Newton step through a sparse LU with backtracking on |g|.

    When no Newton fraction reduces the gradient, Levenberg-Marquardt steps
    ``(H^2 + mu I) s = -H g`` are taken from the sparse augmented system
    ``[[I, H], [H, -mu I]] [r; s] = [-g; 0]``.
    """
    U, gU, HU = _potential_terms(domain, cfg, loop.points, 2)
    H = _sparse_from_blocks(_hessian_blocks(cfg, loop, U, gU, HU))
    x = loop.pack()
    try:
        step = -splu(H).solve(g)
        if np.all(np.isfinite(step)):
            alpha = 1.0
            for _ in range(8):
                hit = _accept(domain, cfg, loop, E, x, alpha * step, gn)
                if hit is not None:
                    return (*hit, mu, True)
                alpha *= 0.5
    except RuntimeError:
        pass
    if near:
        return loop, g, gn, mu, False
    M = H.shape[0]
    lmax = float(abs(H).sum(axis=1).max())
    eye = scipy.sparse.identity(M, format="csc")
    rhs = np.concatenate([-g, np.zeros(M)])
    m = max(mu, (1e-6 * lmax) ** 2)
    for _ in range(40):
        K = scipy.sparse.bmat([[eye, H], [H, -m * eye]], format="csc")
        step = splu(K).solve(rhs)[M:]
        hit = _accept(domain, cfg, loop, E, x, step, gn)
        if hit is not None:
            return (*hit, m / 16.0, True)
        m *= 4.0
    return loop, g, gn, m, False


def _summarize(domain, cfg, loop, E, gn, iters, opts):
    energy = node_energy(domain, cfg, loop)
    return CriticalPoint(
        loop=loop,
        energy_residual=float(np.max(np.abs(energy - E))),
        grad_norm=gn,
        morse_index_fixed_tau=morse_index_fixed_tau(domain, cfg, loop, E, opts.index_rel_tol),
        action_value=action(domain, cfg, loop, E),
        kinetic_integral=kinetic_integral(loop),
        iterations=iters,
    )


# ---------------------------------------------------------------------------
# Seeds and remeshing
# ---------------------------------------------------------------------------

def _ray_exit(domain, start, u, r_in):
    """Distance from ``start`` along ``u`` to the boundary (sphere tracing + bisection)."""
    t = 0.0
    for _ in range(10000):
        sd = signed_dist(domain, start + t * u)
        if sd > -1e-9 * r_in:
            break
        t += max(-sd, 1e-6 * r_in)
    lo, hi = max(t - 2e-6 * r_in, 0.0), t
    while signed_dist(domain, start + hi * u) < 0:
        hi += 1e-6 * r_in
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if signed_dist(domain, start + mid * u) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def sweep_loop(domain, center, u, N, margin, wobble=0.0, perp=None):
    """Back-and-forth loop along the chord through ``center`` in direction ``u``."""
    r_in = domain.inradius_estimate[0]
    a = _ray_exit(domain, center, u, r_in) - margin
    b = _ray_exit(domain, center, -u, r_in) - margin
    if a <= 0 or b <= 0:
        raise ValueError("margin exceeds the chord length")
    p_plus, p_minus = center + a * u, center - b * u
    t = np.arange(N) / N
    s = 1.0 - np.abs(1.0 - 2.0 * ((t + 0.25) % 1.0))   # triangle wave, 0 at t=-1/4
    pts = p_minus + s[:, None] * (p_plus - p_minus)
    if wobble and perp is not None:
        pts = pts + wobble * np.sin(2 * np.pi * t)[:, None] * perp
    return pts


def ellipse_loop(center, e1, e2, r1, r2, N):
    t = np.arange(N) / N
    return center + r1 * np.cos(2 * np.pi * t)[:, None] * e1 + r2 * np.sin(2 * np.pi * t)[:, None] * e2


def make_seeds(domain, cfg, N, count, rng, E=0.5):
    """Multistart seeds around the inradius witness.

    Even indices are perturbed chord sweeps in random directions, odd indices are
    planar ellipses in random 2-planes. Each seed gets the period that is optimal
    for its shape.
    """
    r_in, c = domain.inradius_estimate
    n = domain.dim
    margin = min(0.5 * r_in, max(1.5 * np.sqrt(2.0 * cfg.eps), 0.02 * r_in))
    seeds = []
    for j in range(count):
        frame, _ = np.linalg.qr(rng.standard_normal((n, n)))
        e1, e2 = frame[:, 0], frame[:, 1 % n]
        if j % 2 == 0:
            wob = 0.0 if j == 0 else 0.05 * r_in * rng.uniform(-1.0, 1.0)
            pts = sweep_loop(domain, c, e1, N, margin, wob, e2)
        else:
            r1 = r_in * rng.uniform(0.5, 0.85)
            pts = ellipse_loop(c, e1, e2, r1, r1 * rng.uniform(0.3, 1.0), N)
        if np.any(np.asarray(signed_dist(domain, pts)) >= -0.5 * margin):
            continue
        try:
            tau = optimal_tau(domain, cfg, pts, E)
        except DegenerateTau:
            continue
        seeds.append(DiscreteLoop(pts, tau))
    return seeds


def remesh(domain, cfg, loop, share=0.5):
    """Redistribute the nodes by equidistributing a stiffness monitor.

    A fraction ``share`` of the nodes is spread uniformly in time; the rest follow
    the local frequency of the wall potential, which concentrates nodes in the
    bounce layers. Positions are carried over with a periodic cubic spline.
    """
    N = loop.N
    if cfg.eps == 0.0:
        return loop
    dist = -np.asarray(signed_dist(domain, loop.points))
    omega = normal_stiffness(cfg, dist)
    h = loop.edges
    # monitor on edges, in parameter time
    om_edge = 0.5 * (omega + np.roll(omega, -1))
    base = np.sum(om_edge * h) * (1.0 - share) / share if share < 1 else 0.0
    dens = om_edge + max(base, 1e-300)
    cum = np.concatenate([[0.0], np.cumsum(dens * h)])
    t_old = np.append(loop.mesh, loop.mesh[0] + 1.0)
    targets = np.arange(N) / N * cum[-1]
    # invert the piecewise-linear cumulative monitor
    new_t = np.interp(targets, cum, t_old)
    spline = CubicSpline(t_old, np.vstack([loop.points, loop.points[:1]]), bc_type="periodic")
    pts = spline(new_t)
    if np.any(np.asarray(signed_dist(domain, pts)) >= 0):
        # linear fallback keeps nodes on the old chords
        pts = np.stack([np.interp(new_t, t_old, np.append(loop.points[:, k], loop.points[0, k]))
                        for k in range(loop.dim)], axis=1)
    return DiscreteLoop(pts, loop.tau, new_t)


def resample_uniform(loop, N):
    """Resample onto a uniform grid with ``N`` nodes (periodic cubic spline)."""
    t_old = np.append(loop.mesh, loop.mesh[0] + 1.0)
    spline = CubicSpline(t_old, np.vstack([loop.points, loop.points[:1]]), bc_type="periodic")
    t = loop.mesh[0] + np.arange(N) / N
    return DiscreteLoop(spline(t), loop.tau, t)


def refine(loop):
    """Double the node count by inserting parameter midpoints (periodic cubic spline)."""
    t_old = np.append(loop.mesh, loop.mesh[0] + 1.0)
    spline = CubicSpline(t_old, np.vstack([loop.points, loop.points[:1]]), bc_type="periodic")
    mid = loop.mesh + 0.5 * loop.edges
    t = np.ravel(np.column_stack([loop.mesh, mid]))
    return DiscreteLoop(spline(t), loop.tau, t)
