"""Implicit bounded domains in R^n.

Every shape exposes the same vectorized primitive, ``closest(q)``, returning the
signed distance, the nearest boundary point and the outward unit normal there.
Derivatives of the signed distance follow from it: the gradient is the normal at
the nearest point and the Hessian is ``S (I + sd S)^-1 P`` where ``S`` is the
shape operator of the boundary and ``P`` the tangent projector.

Signed distance is negative inside the domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .errors import (
    DomainSpecError,
    EmptyInterior,
    NonFiniteInput,
    OutsideCollar,
    ProjectionError,
)

__all__ = [
    "Ball",
    "Ellipsoid",
    "SmoothedBox",
    "MetaballUnion",
    "Dumbbell",
    "Domain",
    "BoundaryPoint",
    "signed_dist",
    "sd_derivatives",
    "boundary_project",
    "inradius",
    "estimate_reach",
    "default_d0",
    "domain_from_spec",
    "load_domain",
]


def _points(q, dim):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise NonFiniteInput("non-finite coordinates in query point")
    return q


def _normalize(v):
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / nrm, nrm[..., 0]


def _safe_normalize(v):
    """Like :func:`_normalize` but maps zero vectors to the last basis vector."""
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    fallback = np.zeros(v.shape[-1])
    fallback[-1] = 1.0
    u = np.where(nrm > 0, v / np.where(nrm > 0, nrm, 1.0), fallback)
    return u, nrm[..., 0]


def _tangent_projector(nu):
    n = nu.shape[-1]
    return np.eye(n) - nu[..., :, None] * nu[..., None, :]


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------

class Shape:
    """Base class; subclasses implement ``closest`` and ``shape_operator``."""

    kind = ""
    dim: int

    def closest(self, q):
        """Return ``(sd, y, nu)`` for points ``q`` of shape ``(m, n)``."""
        raise NotImplementedError

    def shape_operator(self, y, nu):
        """Weingarten map at boundary points ``y`` (positive on convex parts)."""
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    @property
    def scale(self):
        lo, hi = self.bbox()
        return float(np.max(hi - lo))


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float
    kind = "ball"

    @property
    def dim(self):
        return len(self.center)

    def closest(self, q):
        c = np.asarray(self.center)
        u, rho = _safe_normalize(q - c)
        sd = rho - self.radius
        y = c + self.radius * u
        return sd, y, u

    def shape_operator(self, y, nu):
        return _tangent_projector(nu) / self.radius

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def params(self):
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Ellipsoid(Shape):
    """Axis-aligned ellipsoid; nearest points from the Lagrange condition."""

    center: tuple
    semi_axes: tuple
    kind = "ellipsoid"

    @property
    def dim(self):
        return len(self.center)

    def closest(self, q):
        a = np.asarray(self.semi_axes, dtype=float)
        x = q - np.asarray(self.center)
        a2 = a * a
        amin2 = a2.min()
        ax = a * x

        def f_and_df(t, axl):
            den = t[:, None] + a2
            with np.errstate(divide="ignore", invalid="ignore"):
                r = axl / den      # den = 0 only at the bracket end; handled by bisection
            return np.sum(r * r, axis=1) - 1.0, -2.0 * np.sum(r * r / den, axis=1)

        m = x.shape[0]
        lo = np.full(m, -amin2)
        hi = np.maximum(np.linalg.norm(ax, axis=1) - amin2, -amin2) + 1e-300
        is_min = np.isclose(a2, amin2, rtol=1e-14, atol=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # value at the left end when every smallest-axis coordinate vanishes
            others = ~is_min
            left = np.sum(np.where(others, (ax / (a2 - amin2 + ~others)) ** 2, 0.0), axis=1) - 1.0
        degenerate = np.all(x[:, is_min] == 0.0, axis=1) & (left <= 0.0)

        # bracketed Newton; f is convex and decreasing on (-amin2, inf)
        t = np.where(np.linalg.norm(ax / a2, axis=1) < 1.0,
                     0.5 * (lo + np.minimum(hi, 0.0)), 0.5 * (lo + hi))
        t = np.where(degenerate, -amin2, t)
        live = ~degenerate
        for _ in range(200):
            if not live.any():
                break
            tl = t[live]
            fv, dv = f_and_df(tl, ax[live])
            lo_l, hi_l = lo[live], hi[live]
            lo_l = np.where(fv > 0, tl, lo_l)
            hi_l = np.where(fv <= 0, tl, hi_l)
            with np.errstate(divide="ignore", invalid="ignore"):
                tn = tl - fv / dv
            bad = ~np.isfinite(tn) | (tn <= lo_l) | (tn >= hi_l)
            tn = np.where(bad, 0.5 * (lo_l + hi_l), tn)
            done = np.abs(tn - tl) <= 1e-15 * np.maximum(1.0, np.abs(tl)) + 1e-300
            lo[live], hi[live], t[live] = lo_l, hi_l, tn
            idx = np.flatnonzero(live)
            live[idx[done | (np.abs(fv) < 1e-16)]] = False
        if live.any():
            raise ProjectionError("ellipsoid projection did not converge", x[live][0])

        gap = t + amin2
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.where(is_min, 0.0, a2 * x / (t[:, None] + a2 + is_min * 0.0))
            y = np.where(is_min, a2 * x / gap[:, None], y)
        # near the medial set the smallest-axis components come from the constraint
        fix = degenerate | (gap <= 1e-8 * amin2)
        if fix.any():
            yf = y[fix]
            yf[:, ~is_min] = (a2 * x / (a2 - amin2 + is_min))[fix][:, ~is_min]
            rem = np.maximum(1.0 - np.sum(np.where(is_min, 0.0, (yf / a) ** 2), axis=1), 0.0)
            xm = np.where(is_min, x, 0.0)[fix]
            xn = np.linalg.norm(xm, axis=1)
            first = np.zeros(len(a))
            first[int(np.flatnonzero(is_min)[0])] = 1.0
            dirm = np.where(xn[:, None] > 0, xm / np.where(xn > 0, xn, 1.0)[:, None], first)
            yf[:, is_min] = (np.sqrt(rem)[:, None] * np.sqrt(amin2) * dirm)[:, is_min]
            y[fix] = yf
        # polish onto the surface along the radial scaling
        y = y / np.sqrt(np.sum((y / a) ** 2, axis=1))[:, None]
        nu, _ = _normalize(y / a2)
        inside = np.sum((x / a) ** 2, axis=1) < 1.0
        dist = np.linalg.norm(x - y, axis=1)
        sd = np.where(inside, -dist, dist)
        return sd, y + np.asarray(self.center), nu

    def shape_operator(self, y, nu):
        a2 = np.asarray(self.semi_axes, dtype=float) ** 2
        x = y - np.asarray(self.center)
        gnorm = np.linalg.norm(2.0 * x / a2, axis=-1)
        P = _tangent_projector(nu)
        HF = np.diag(2.0 / a2)
        return P @ HF @ P / gnorm[..., None, None]

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        a = np.asarray(self.semi_axes, dtype=float)
        return c - a, c + a

    def params(self):
        return {"center": list(self.center), "semi_axes": list(self.semi_axes)}


@dataclass(frozen=True)
class SmoothedBox(Shape):
    """Box with half widths ``half_widths`` whose edges are rounded with ``corner_radius``."""

    center: tuple
    half_widths: tuple
    corner_radius: float
    kind = "smoothed_box"

    @property
    def dim(self):
        return len(self.center)

    def _local(self, q):
        p = q - np.asarray(self.center)
        s = np.where(p < 0, -1.0, 1.0)
        d = np.abs(p) - np.asarray(self.half_widths) + self.corner_radius
        return p, s, d

    def closest(self, q):
        r = self.corner_radius
        p, s, d = self._local(q)
        pos = np.maximum(d, 0.0)
        L = np.linalg.norm(pos, axis=1)
        corner = L > 0
        k = np.argmax(d, axis=1)
        nu = np.zeros_like(p)
        nu[np.arange(len(p)), k] = s[np.arange(len(p)), k]
        with np.errstate(invalid="ignore", divide="ignore"):
            nu_c = s * pos / L[:, None]
        nu = np.where(corner[:, None], nu_c, nu)
        sd = np.where(corner, L - r, d.max(axis=1) - r)
        y = q - sd[:, None] * nu
        return sd, y, nu

    def shape_operator(self, y, nu):
        p, s, d = self._local(y)
        curved = (d > 1e-12).astype(float)
        Pi = curved[..., :, None] * np.eye(self.dim)
        S = (Pi - nu[..., :, None] * nu[..., None, :]) / self.corner_radius
        flat = curved.sum(axis=-1) <= 1
        return np.where(flat[..., None, None], 0.0, S)

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        b = np.asarray(self.half_widths, dtype=float)
        return c - b, c + b

    def params(self):
        return {"center": list(self.center), "half_widths": list(self.half_widths),
                "corner_radius": self.corner_radius}


# -- implicit unions ---------------------------------------------------------

def _ball_field(x, c, r):
    u, rho = _safe_normalize(x - c)
    H = _tangent_projector(u) / np.maximum(rho, 1e-300)[:, None, None]
    return rho - r, u, H


def _capsule_field(x, a, b, w):
    ab = b - a
    e = ab / np.linalg.norm(ab)
    h = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
    v = x - (a + h[:, None] * ab)
    u, rho = _safe_normalize(v)
    mid = (h > 0) & (h < 1)
    Q = np.where(mid[:, None, None], np.eye(len(a)) - np.outer(e, e), np.eye(len(a)))
    H = (Q - u[:, :, None] * u[:, None, :]) / np.maximum(rho, 1e-300)[:, None, None]
    return rho - w, u, H


def _smin(fa, ga, Ha, fb, gb, Hb, k):
    """Cubic polynomial smooth minimum (C^2) with its gradient and Hessian."""
    swap = fb < fa
    lo = np.where(swap, fb, fa)
    hi = np.where(swap, fa, fb)
    h = np.maximum(k - (hi - lo), 0.0) / k
    f = lo - k * h ** 3 / 6.0
    w_lo = 1.0 - 0.5 * h * h
    w_hi = 0.5 * h * h
    wa = np.where(swap, w_hi, w_lo)
    wb = np.where(swap, w_lo, w_hi)
    g = wa[:, None] * ga + wb[:, None] * gb
    c = (h / k)[:, None, None]
    dg = ga - gb
    H = wa[:, None, None] * Ha + wb[:, None, None] * Hb - c * dg[:, :, None] * dg[:, None, :]
    return f, g, H


class _ImplicitUnion(Shape):
    """Smooth union of simple primitives; boundary = zero set of the blended field."""

    def _primitives(self):
        """List of ``(field_fn, blend)``; ``field_fn(x) -> (f, grad, hess)``."""
        raise NotImplementedError

    def field(self, x):
        prims = self._primitives()
        f, g, H = prims[0][0](x)
        for fn, k in prims[1:]:
            fb, gb, Hb = fn(x)
            f, g, H = _smin(f, g, H, fb, gb, Hb, k)
        return f, g, H

    @cached_property
    def _cloud(self):
        """Dense boundary sample used to seed nearest-point Newton solves."""
        lo, hi = self.bbox()
        lo = np.asarray(lo) - 0.05 * self.scale
        hi = np.asarray(hi) + 0.05 * self.scale
        h = self.scale / (400.0 if self.dim <= 2 else 80.0)
        pts = _grid(lo, hi, h)
        f, _, _ = self.field(pts)
        y = pts[np.abs(f) < 2.0 * h]
        for _ in range(12):
            f, g, _ = self.field(y)
            y = y - (f / np.sum(g * g, axis=1))[:, None] * g
        f, _, _ = self.field(y)
        y = y[np.abs(f) < 1e-12 * self.scale]
        return cKDTree(y), y

    def _kkt(self, q, y):
        """Newton on the Lagrange system for the nearest point, from seeds ``y``."""
        n = q.shape[1]
        f, g, H = self.field(y)
        lam = -np.sum((y - q) * g, axis=1) / np.sum(g * g, axis=1)
        scale = self.scale
        for _ in range(40):
            f, g, H = self.field(y)
            R = np.concatenate([y - q + lam[:, None] * g, f[:, None]], axis=1)
            done = np.linalg.norm(R, axis=1) < 1e-14 * scale
            if done.all():
                break
            J = np.zeros((len(q), n + 1, n + 1))
            J[:, :n, :n] = np.eye(n) + lam[:, None, None] * H
            J[:, :n, n] = g
            J[:, n, :n] = g
            try:
                step = np.linalg.solve(J, -R[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = (np.linalg.pinv(J) @ -R[:, :, None])[:, :, 0]
            sn = np.linalg.norm(step[:, :n], axis=1)
            damp = np.minimum(1.0, 0.05 * scale / np.maximum(sn, 1e-300))[:, None]
            step = np.where(done[:, None], 0.0, step * damp)
            y = y + step[:, :n]
            lam = lam + step[:, n]
        f, g, H = self.field(y)
        u = _normalize(g)[0]
        ok = (np.abs(f) < 1e-11 * scale) & np.isfinite(y).all(axis=1)
        d = q - y
        tang = d - np.sum(d * u, axis=1)[:, None] * u
        ok &= np.linalg.norm(tang, axis=1) < 1e-9 * scale
        return y, ok

    def closest(self, q):
        tree, cloud = self._cloud
        k = 3
        dist0, idx = tree.query(q, k=k)
        best_y = cloud[idx[:, 0]].copy()
        best_d = np.full(len(q), np.inf)
        for j in range(k):
            y, ok = self._kkt(q, cloud[idx[:, j]])
            d = np.linalg.norm(q - y, axis=1)
            take = ok & (d < best_d)
            best_d = np.where(take, d, best_d)
            best_y[take] = y[take]
        failed = ~np.isfinite(best_d)
        if failed.any():
            # deep-interior points near a focal set: keep the cloud distance
            f, _, _ = self.field(q[failed])
            if np.any(np.abs(f) < 0.5 * self.scale / 6.0):
                bad = q[failed][0]
                raise ProjectionError(f"boundary projection failed near {bad.tolist()}", bad)
            best_d[failed] = dist0[failed, 0]
        f, _, _ = self.field(q)
        _, g, _ = self.field(best_y)
        nu = _normalize(g)[0]
        sd = np.where(f < 0, -best_d, best_d)
        return sd, best_y, nu

    def shape_operator(self, y, nu):
        _, g, H = self.field(y)
        P = _tangent_projector(nu)
        return P @ H @ P / np.linalg.norm(g, axis=-1)[..., None, None]


@dataclass(frozen=True)
class MetaballUnion(_ImplicitUnion):
    """Smooth union of balls; ``balls`` holds ``(center, radius, blend)`` triples."""

    balls: tuple
    kind = "metaball_union"

    @property
    def dim(self):
        return len(self.balls[0][0])

    def _primitives(self):
        out = []
        for c, r, k in self.balls:
            c = np.asarray(c, dtype=float)
            out.append((lambda x, c=c, r=r: _ball_field(x, c, r), k))
        return out

    def bbox(self):
        lo = np.min([np.asarray(c) - r for c, r, _ in self.balls], axis=0)
        hi = np.max([np.asarray(c) + r for c, r, _ in self.balls], axis=0)
        return lo, hi

    def params(self):
        return {"balls": [{"center": list(c), "radius": r, "blend": k} for c, r, k in self.balls]}


@dataclass(frozen=True)
class Dumbbell(_ImplicitUnion):
    """Two balls joined by a cylindrical neck, blended smoothly at the junctions."""

    centers: tuple
    radii: tuple
    neck_half_width: float
    blend: float
    kind = "dumbbell"

    @property
    def dim(self):
        return len(self.centers[0])

    def _primitives(self):
        a = np.asarray(self.centers[0], dtype=float)
        b = np.asarray(self.centers[1], dtype=float)
        ra, rb = self.radii
        w = self.neck_half_width
        return [
            (lambda x: _ball_field(x, a, ra), self.blend),
            (lambda x: _ball_field(x, b, rb), self.blend),
            (lambda x: _capsule_field(x, a, b, w), self.blend),
        ]

    def bbox(self):
        c = np.asarray(self.centers, dtype=float)
        r = np.asarray(self.radii, dtype=float)[:, None]
        return np.min(c - r, axis=0), np.max(c + r, axis=0)

    def params(self):
        return {"centers": [list(c) for c in self.centers], "radii": list(self.radii),
                "neck_half_width": self.neck_half_width, "blend": self.blend}


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryPoint:
    point: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class Domain:
    """An immutable bounded domain. ``collar_width`` bounds where projection is trusted."""

    shape: Shape
    collar_width: float = field(default=0.0)

    def __post_init__(self):
        if self.collar_width <= 0.0:
            r, _ = inradius(self, None)
            object.__setattr__(self, "collar_width", 0.4 * r)

    @property
    def dim(self):
        return self.shape.dim

    @property
    def scale(self):
        return self.shape.scale

    @cached_property
    def inradius_estimate(self):
        return inradius(self, None)

    @cached_property
    def reach(self):
        return estimate_reach(self)

    def to_spec(self):
        return {"dim": self.dim, "shape": self.shape.kind, "params": self.shape.params()}

    def closest(self, q):
        q = _points(q, self.dim)
        flat = q.reshape(-1, self.dim)
        sd, y, nu = self.shape.closest(flat)
        return sd.reshape(q.shape[:-1]), y.reshape(q.shape), nu.reshape(q.shape)


def signed_dist(domain, q):
    """Signed distance to the boundary (negative inside). Accepts ``(..., n)`` arrays."""
    sd, _, _ = domain.closest(q)
    return sd if np.ndim(sd) else float(sd)


def sd_derivatives(domain, q):
    """Signed distance, gradient and Hessian at points ``q`` of shape ``(..., n)``."""
    q = _points(q, domain.dim)
    sd, y, nu = domain.closest(q)
    n = domain.dim
    S = domain.shape.shape_operator(y.reshape(-1, n), nu.reshape(-1, n)).reshape(q.shape + (n,))
    P = _tangent_projector(nu)
    A = np.eye(n) + sd[..., None, None] * S
    try:
        H = S @ np.linalg.solve(A, P)
    except np.linalg.LinAlgError:
        # a point sits on the focal set; its Hessian is unbounded, pinv keeps it finite
        H = S @ np.linalg.pinv(A) @ P
    return sd, nu, 0.5 * (H + np.swapaxes(H, -1, -2))


def boundary_project(domain, q):
    """Nearest boundary point and outward normal; ``q`` must lie in the collar."""
    q = _points(q, domain.dim)
    sd, y, nu = domain.closest(q)
    if np.any(np.abs(sd) >= domain.collar_width):
        raise OutsideCollar(f"|signed_dist|={np.max(np.abs(sd)):.3g} exceeds collar "
                            f"{domain.collar_width:.3g}")
    return BoundaryPoint(point=y, normal=nu)


def _grid(lo, hi, spacing):
    axes = [np.arange(l + 0.5 * spacing, h, spacing) if h - l > spacing else np.array([0.5 * (l + h)])
            for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def inradius(domain, grid_density=None):
    """Largest inscribed ball: returns ``(r, witness)``.

    ``grid_density`` is in samples per unit length per axis; ``None`` picks a density
    giving about 24 samples across the narrowest bounding-box side.
    """
    shape = domain.shape
    lo, hi = shape.bbox()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if grid_density is None:
        grid_density = 24.0 / float(np.min(hi - lo))
    if grid_density <= 0:
        raise ValueError("grid_density must be positive")
    spacing = 1.0 / grid_density
    pts = _grid(lo, hi, spacing)
    sd = shape.closest(pts)[0]
    if not np.any(sd < 0):
        raise EmptyInterior("no grid point lies inside the domain")
    best = pts[np.argmin(sd)]
    best_sd = float(sd.min())
    for _ in range(3):
        fine = spacing / 4.0
        offs = np.arange(-4, 5) * fine
        mesh = np.meshgrid(*([offs] * shape.dim), indexing="ij")
        local = best + np.stack([m.ravel() for m in mesh], axis=1)
        sdl = shape.closest(local)[0]
        i = int(np.argmin(sdl))
        if sdl[i] < best_sd:
            best, best_sd = local[i], float(sdl[i])
        spacing = fine

    def obj(x):
        return float(shape.closest(x[None, :])[0][0])

    res = minimize(obj, best, method="Nelder-Mead",
                   options={"xatol": 1e-10 * shape.scale, "fatol": 1e-14 * shape.scale,
                            "maxiter": 400 * shape.dim})
    if res.fun < best_sd:
        best, best_sd = np.asarray(res.x), float(res.fun)
    return -best_sd, best


def sample_boundary(domain, count=100, seed=12345):
    """Deterministic sample of boundary points with their normals."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.shape.bbox()
    pad = 0.1 * (np.asarray(hi) - np.asarray(lo))
    pts, nus = [], []
    total = 0
    while total < count:
        cand = rng.uniform(lo - pad, hi + pad, size=(8 * count, domain.dim))
        sd, y, nu = domain.shape.closest(cand)
        keep = np.abs(sd) < domain.collar_width
        pts.append(y[keep])
        nus.append(nu[keep])
        total += int(keep.sum())
    return np.concatenate(pts)[:count], np.concatenate(nus)[:count]


def estimate_reach(domain, count=100):
    """Smallest distance from the boundary to the interior medial axis (sampled).

    Combines focal distances from the largest principal curvature with an inward
    march along the normal that detects where the distance stops growing linearly,
    which also catches bottlenecks such as a narrow neck.
    """
    y, nu = sample_boundary(domain, count)
    S = domain.shape.shape_operator(y, nu)
    kappa = np.linalg.eigvalsh(S).max(axis=1)
    focal = np.where(kappa > 1e-12, 1.0 / np.maximum(kappa, 1e-12), np.inf)
    r_in = domain.inradius_estimate[0]
    ts = np.linspace(0.0, r_in, 129)[1:]
    probe = y[:, None, :] - ts[None, :, None] * nu[:, None, :]
    sd = domain.shape.closest(probe.reshape(-1, domain.dim))[0].reshape(len(y), len(ts))
    off = np.abs(sd + ts[None, :]) > 1e-6 * domain.scale
    first = np.where(off.any(axis=1), ts[np.argmax(off, axis=1)] - (ts[1] - ts[0]), np.inf)
    return float(min(np.min(focal), np.min(first), r_in))


def default_d0(domain):
    """Cutoff width for the penalty: distance must be smooth up to 2*d0."""
    return float(min(0.25, 0.5 * domain.collar_width, 0.25 * domain.reach))


# ---------------------------------------------------------------------------
# Spec files
# ---------------------------------------------------------------------------

_SHAPE_FIELDS = {
    "ball": {"center", "radius"},
    "ellipsoid": {"center", "semi_axes"},
    "smoothed_box": {"center", "half_widths", "corner_radius"},
    "metaball_union": {"balls"},
    "dumbbell": {"centers", "radii", "neck_half_width", "blend"},
}


def _vec(v, dim, name):
    v = tuple(float(x) for x in v)
    if len(v) != dim:
        raise DomainSpecError(f"{name} must have {dim} components")
    return v


def domain_from_spec(spec):
    """Build a :class:`Domain` from the JSON-like dict ``{"dim", "shape", "params"}``."""
    unknown = set(spec) - {"dim", "shape", "params"}
    if unknown:
        raise DomainSpecError(f"unknown fields: {sorted(unknown)}")
    try:
        dim = int(spec["dim"])
        kind = spec["shape"]
        p = dict(spec["params"])
    except KeyError as exc:
        raise DomainSpecError(f"missing field {exc}") from None
    if dim < 1:
        raise DomainSpecError("dim must be positive")
    if kind not in _SHAPE_FIELDS:
        raise DomainSpecError(f"unknown shape {kind!r}")
    extra = set(p) - _SHAPE_FIELDS[kind]
    missing = _SHAPE_FIELDS[kind] - set(p)
    if extra or missing:
        raise DomainSpecError(f"{kind} params: unknown {sorted(extra)}, missing {sorted(missing)}")
    if kind == "ball":
        shape = Ball(_vec(p["center"], dim, "center"), float(p["radius"]))
        ok = shape.radius > 0
    elif kind == "ellipsoid":
        shape = Ellipsoid(_vec(p["center"], dim, "center"), _vec(p["semi_axes"], dim, "semi_axes"))
        ok = min(shape.semi_axes) > 0
    elif kind == "smoothed_box":
        shape = SmoothedBox(_vec(p["center"], dim, "center"), _vec(p["half_widths"], dim, "half_widths"),
                            float(p["corner_radius"]))
        ok = 0 < shape.corner_radius <= min(shape.half_widths)
    elif kind == "metaball_union":
        balls = []
        for b in p["balls"]:
            if set(b) != {"center", "radius", "blend"}:
                raise DomainSpecError("each ball needs exactly center, radius, blend")
            balls.append((_vec(b["center"], dim, "center"), float(b["radius"]), float(b["blend"])))
        shape = MetaballUnion(tuple(balls))
        ok = bool(balls) and all(r > 0 and k > 0 for _, r, k in balls)
    else:
        if len(p["centers"]) != 2 or len(p["radii"]) != 2:
            raise DomainSpecError("dumbbell needs two centers and two radii")
        shape = Dumbbell(tuple(_vec(c, dim, "center") for c in p["centers"]),
                         tuple(float(r) for r in p["radii"]),
                         float(p["neck_half_width"]), float(p["blend"]))
        ok = (min(shape.radii) > shape.neck_half_width > 0 and shape.blend > 0)
    if not ok:
        raise DomainSpecError(f"invalid parameters for {kind}")
    return Domain(shape)


def load_domain(path):
    with open(Path(path)) as fh:
        return domain_from_spec(json.load(fh))
