"""Direct billiard dynamics and a Newton refiner for periodic bounce polygons.

Both are independent of the penalty continuation and serve as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CollapsedEdge,
    MarchStall,
    NoConvergence,
    TangentialIncidence,
)
from .geometry import BoundaryPoint, sd_derivatives, signed_dist

HIT_TOL = 1e-10


# ---------------------------------------------------------------------------
# Reflection and shooting
# ---------------------------------------------------------------------------

def reflect_vectors(v, nu):
    """Mirror ``v`` in the planes with unit normals ``nu``; arrays of shape ``(..., n)``."""
    v = np.asarray(v, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return v - 2.0 * np.sum(v * nu, axis=-1, keepdims=True) * nu


def reflect(domain, at, v_in):
    """Outgoing velocity at a bounce.

    ``v_in`` points into the wall, i.e. ``<v_in, normal> > 0`` for the outward
    normal of ``at`` (a :class:`BoundaryPoint` or a bare unit normal).
    """
    nu = np.asarray(at.normal if isinstance(at, BoundaryPoint) else at, dtype=float)
    v_in = np.asarray(v_in, dtype=float)
    a = float(np.dot(v_in, nu))
    if abs(a) <= 1e-9 * np.linalg.norm(v_in):
        raise TangentialIncidence("velocity is tangent to the boundary")
    if a < 0:
        raise ValueError("incoming velocity points away from the wall")
    return v_in - 2.0 * a * nu


@dataclass
class Shot:
    polyline: np.ndarray          # start, then every bounce point
    bounces: list                 # BoundaryPoint per bounce
    directions: np.ndarray        # direction of travel on each segment
    length: float

    @property
    def bounce_points(self):
        return np.array([b.point for b in self.bounces])


def _sd1(domain, p):
    sd, grad, _ = sd_derivatives(domain, p[None, :])
    return float(sd[0]), grad[0]


def _hit(domain, p_in, p_out, u):
    """Boundary crossing on the segment ``[p_in, p_out]``.

    Newton iterations on the signed distance along the ray, safeguarded by
    bisection of the bracket, starting from the secant point.
    """
    a, b = 0.0, float(np.dot(p_out - p_in, u))
    fa = _sd1(domain, p_in)[0]
    fb = _sd1(domain, p_out)[0]
    s = a + (b - a) * (-fa) / (fb - fa) if fb > fa else 0.5 * (a + b)
    for _ in range(100):
        f, grad = _sd1(domain, p_in + s * u)
        if abs(f) <= 0.1 * HIT_TOL:
            break
        if f < 0:
            a = s
        else:
            b = s
        df = float(np.dot(grad, u))
        s_new = s - f / df if df > 0 else 0.5 * (a + b)
        if not a < s_new < b:
            s_new = 0.5 * (a + b)
        s = s_new
    return s


def shoot(domain, start, direction, max_bounces, max_steps=100000):
    """Follow a billiard ray from an interior point for ``max_bounces`` reflections.

    Rays advance by sphere tracing with step ``max(|signed_dist|, 1e-6)``; the
    first step across the boundary is pulled back onto it by bisection and
    Newton iterations to 1e-10. Close to the wall a secant extrapolation of the
    distance along the ray is tried first and kept only if it lands outside.
    """
    p = np.asarray(start, dtype=float).copy()
    u = np.asarray(direction, dtype=float).copy()
    if signed_dist(domain, p) >= 0:
        raise ValueError("start point must lie inside the domain")
    poly = [p.copy()]
    dirs = []
    bounces = []
    length = 0.0
    steps = 0
    near = 0.25 * domain.inradius_estimate[0]
    while len(bounces) < max_bounces:
        q = p.copy()
        sd = signed_dist(domain, q)
        sd_prev = None
        while True:
            steps += 1
            if steps > max_steps:
                raise MarchStall(f"ray march exceeded {max_steps} steps")
            if sd_prev is not None and -near < sd and sd > sd_prev:
                # secant guess of the crossing; used only when it brackets one
                s_pred = -sd * step / (sd - sd_prev)
                nxt = q + (1.01 * s_pred + 1e-9) * u
                if signed_dist(domain, nxt) >= 0:
                    break
            step = max(abs(sd), 1e-6)
            nxt = q + step * u
            sd_next = signed_dist(domain, nxt)
            if sd_next >= 0:
                break
            q, sd_prev, sd = nxt, sd, sd_next
        s = _hit(domain, q, nxt, u)
        hit = q + s * u
        _, y, nu = domain.closest(hit[None, :])
        nu = nu[0]
        length += float(np.linalg.norm(hit - p))
        dirs.append(u.copy())
        bounces.append(BoundaryPoint(point=hit, normal=nu))
        poly.append(hit.copy())
        u = reflect(domain, nu, u)
        p = hit
    return Shot(polyline=np.array(poly), bounces=bounces, directions=np.array(dirs), length=length)


def ellipse_invariant(semi_axes, point, direction, center=(0.0, 0.0)):
    """Product of the angular momenta of a unit-speed ray about the two foci.

    Conserved by the billiard flow in the ellipse ``x^2/a^2 + y^2/b^2 = 1``.
    """
    a, b = semi_axes
    p = np.asarray(point, dtype=float) - np.asarray(center, dtype=float)
    u = np.asarray(direction, dtype=float)
    if a >= b:
        c = np.sqrt(a * a - b * b)
        f1, f2 = np.array([c, 0.0]), np.array([-c, 0.0])
    else:
        c = np.sqrt(b * b - a * a)
        f1, f2 = np.array([0.0, c]), np.array([0.0, -c])

    def cross(x, y):
        return x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]

    return cross(p - f1, u) * cross(p - f2, u)


# ---------------------------------------------------------------------------
# Bounce polygons
# ---------------------------------------------------------------------------

@dataclass
class BouncePolygon:
    """Closed polygon with vertices on the boundary; ``normals`` are outward."""

    vertices: np.ndarray
    normals: np.ndarray = None
    grad_norm: float = float("nan")
    iterations: int = 0
    residuals: list = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or len(self.vertices) < 2:
            raise ValueError("a bounce polygon needs at least two vertices")

    @property
    def k(self):
        return len(self.vertices)

    @property
    def segments(self):
        return np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)

    @property
    def length(self):
        return float(self.segments.sum())


def tangent_frames(nu):
    """Orthonormal bases ``(m, n, n-1)`` of the planes orthogonal to ``nu``."""
    nu = np.atleast_2d(nu)
    m, n = nu.shape
    out = np.empty((m, n, n - 1))
    for i in range(m):
        q, _ = np.linalg.qr(nu[i].reshape(n, 1), mode="complete")
        out[i] = q[:, 1:]
    return out


def _length_derivatives(v):
    """Gradient ``(k, n)`` and Hessian ``(k, n, k, n)`` of the cyclic length."""
    k, n = v.shape
    d = np.roll(v, -1, axis=0) - v               # segment i: v_i -> v_{i+1}
    ell = np.linalg.norm(d, axis=1)
    e = d / ell[:, None]
    grad = np.roll(e, 1, axis=0) - e             # u_in - u_out
    H = np.zeros((k, n, k, n))
    for i in range(k):
        j = (i + 1) % k
        B = (np.eye(n) - np.outer(e[i], e[i])) / ell[i]
        H[i, :, i, :] += B
        H[j, :, j, :] += B
        H[i, :, j, :] -= B
        H[j, :, i, :] -= B
    return grad, H, ell


def _chart_system(domain, v, nu):
    """Gradient and Hessian of the length in tangential chart coordinates."""
    k, n = v.shape
    T = tangent_frames(nu)
    S = domain.shape.shape_operator(v, nu)
    grad, H, ell = _length_derivatives(v)
    g = np.einsum("kna,kn->ka", T, grad)
    Hc = np.einsum("ina,injm,jmb->iajb", T, H, T)
    # the chart bends inward along -nu by the second fundamental form
    normal_force = np.sum(grad * nu, axis=1)
    curv = np.einsum("kna,knm,kmb->kab", T, S, T)
    for i in range(k):
        Hc[i, :, i, :] -= normal_force[i] * curv[i]
    m = k * (n - 1)
    return g.reshape(m), Hc.reshape(m, m), T, ell


def _project(domain, pts):
    _, y, nu = domain.closest(pts)
    return y, nu


def refine_polygon(domain, seed, max_iters=60, min_edge=None):
    """Newton iteration for a length-critical bounce polygon.

    Variables are the tangential coordinates of each vertex in the tangent plane
    at its current position; after each step vertices are projected back onto
    the boundary, which re-anchors the charts. Singular Hessians (families of
    orbits) are handled by least squares; steps that do not reduce the gradient
    fall back to damped Gauss-Newton steps.
    """
    v = np.asarray(seed.vertices if isinstance(seed, BouncePolygon) else seed, dtype=float)
    v, nu = _project(domain, v)
    if min_edge is None:
        min_edge = 1e-6 * domain.inradius_estimate[0]

    def system(v, nu):
        g, H, T, ell = _chart_system(domain, v, nu)
        if np.min(ell) < min_edge:
            raise CollapsedEdge(f"segment of length {np.min(ell):.3e} below {min_edge:.3e}")
        return g, H, T, ell

    g, H, T, ell = system(v, nu)
    gn = float(np.linalg.norm(g))
    it = 0
    while gn > 1e-10 * ell.sum():
        if it >= max_iters:
            raise NoConvergence(f"polygon refinement stalled at |grad|={gn:.3e}")
        it += 1
        step = np.linalg.lstsq(H, -g, rcond=1e-12)[0]
        accepted = False
        mu = 0.0
        for attempt in range(30):
            if attempt > 0:
                # damped Gauss-Newton on |g|^2
                mu = max(4.0 * mu, 1e-8 * float(np.max(np.abs(H))) ** 2)
                step = -np.linalg.solve(H.T @ H + mu * np.eye(len(g)), H.T @ g)
            xi = step.reshape(len(v), -1)
            v_new, nu_new = _project(domain, v + np.einsum("kna,ka->kn", T, xi))
            try:
                g_new, H_new, T_new, ell_new = system(v_new, nu_new)
            except CollapsedEdge:
                continue
            gn_new = float(np.linalg.norm(g_new))
            if gn_new < gn:
                v, nu, g, H, T, ell, gn = v_new, nu_new, g_new, H_new, T_new, ell_new, gn_new
                accepted = True
                break
        if not accepted:
            if gn <= 1e-8 * ell.sum():
                break   # rounding floor of the projection
            raise NoConvergence(f"polygon refinement stalled at |grad|={gn:.3e}")
    poly = BouncePolygon(vertices=v, normals=nu, grad_norm=gn, iterations=it)
    poly.residuals = polygon_residuals(poly)
    return poly


def polygon_residuals(poly):
    """Mirror-law residuals at every vertex of a closed polygon."""
    from .continuation import reflection_residual

    v, nu = poly.vertices, poly.normals
    u_in = v - np.roll(v, 1, axis=0)
    u_out = np.roll(v, -1, axis=0) - v
    u_in /= np.linalg.norm(u_in, axis=1, keepdims=True)
    u_out /= np.linalg.norm(u_out, axis=1, keepdims=True)
    out = []
    for a, b, n_ in zip(u_in, u_out, nu):
        r = reflection_residual(a, b, n_)
        bis = b - a
        bis /= np.linalg.norm(bis)
        r["bisector_err"] = float(np.linalg.norm(bis + n_))
        out.append(r)
    return out


def crosscheck(traj, domain, rel_tol=1e-3):
    """Refine the continuation's bounce polygon and compare."""
    seed = np.asarray(traj.bounce_points, dtype=float)
    length = float(traj.total_length)
    poly = refine_polygon(domain, seed)
    disp = float(np.max(np.linalg.norm(poly.vertices - seed, axis=1)))
    dlen = abs(poly.length - length)
    return {
        "refined_length": poly.length,
        "length_difference": dlen,
        "displacement": disp,
        "passed": bool(disp <= rel_tol * length and dlen <= rel_tol * length),
        "refined_vertices": poly.vertices.tolist(),
        "max_residual": max(max(r["normal_flip_err"], r["tangential_err"]) for r in poly.residuals),
    }


# ---------------------------------------------------------------------------
# Orbit catalog
# ---------------------------------------------------------------------------

def _ray_hit(domain, start, u):
    return shoot(domain, start, u, 1).bounces[0].point


def orbit_catalog(domain, k_values=None):
    """Periodic orbits seeded from the inradius witness.

    ``k = 2`` seeds use the principal directions of the distance Hessian at the
    witness; ``k >= 3`` seeds are regular k-gons in the plane of the first two.
    """
    n = domain.dim
    k_values = list(range(2, n + 2)) if k_values is None else list(k_values)
    r, w = domain.inradius_estimate
    _, _, hess = sd_derivatives(domain, np.asarray(w)[None, :])
    _, vecs = np.linalg.eigh(hess[0])
    out = []
    for k in k_values:
        seeds = []
        if k == 2:
            for j in range(n):
                e = vecs[:, j]
                seeds.append(np.array([_ray_hit(domain, w, e), _ray_hit(domain, w, -e)]))
        else:
            e1, e2 = vecs[:, 0], vecs[:, 1 % n]
            ang = 2 * np.pi * np.arange(k) / k
            seeds.append(np.array([_ray_hit(domain, w, np.cos(a) * e1 + np.sin(a) * e2) for a in ang]))
        for s in seeds:
            try:
                poly = refine_polygon(domain, s)
            except (NoConvergence, CollapsedEdge):
                continue
            if any(o["k"] == k and abs(o["length"] - poly.length) <= 1e-8 * poly.length
                   and np.allclose(np.sort(o["vertices"], axis=0), np.sort(poly.vertices, axis=0),
                                   atol=1e-6) for o in out):
                continue
            out.append({
                "k": k,
                "vertices": poly.vertices.tolist(),
                "length": poly.length,
                "residuals": poly.residuals,
            })
    out.sort(key=lambda o: (o["k"], o["length"]))
    return out
