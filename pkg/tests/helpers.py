"""Random interior loops for derivative and inertia checks."""

import numpy as np

from billiardcap.actionloop import DiscreteLoop
from billiardcap.geometry import signed_dist


def random_loop(domain, rng, N=32, graded=False, reach=0.9):
    """Smooth random closed loop around the inradius witness, strictly inside.

    The loop is a perturbed ellipse in a random 2-plane (plus a small normal
    wobble in 3D) scaled so that its farthest node sits at ``reach * r`` from
    the witness; most loops therefore enter the penalty layer.
    """
    r, c = domain.inradius_estimate
    n = domain.dim
    frame, _ = np.linalg.qr(rng.standard_normal((n, n)))
    if graded:
        mesh = np.sort(rng.uniform(0.0, 1.0, N))
        mesh = 0.5 * mesh + 0.5 * np.arange(N) / N    # keep edges bounded away from zero
    else:
        mesh = np.arange(N) / N
    t = 2 * np.pi * mesh
    a, b = rng.uniform(0.3, 1.0, 2)
    rad = 1.0 + 0.15 * np.sin(2 * t + rng.uniform(0, 2 * np.pi)) + 0.1 * np.cos(3 * t)
    pts = (a * rad * np.cos(t))[:, None] * frame[:, 0] + (b * rad * np.sin(t))[:, None] * frame[:, 1 % n]
    if n == 3:
        pts = pts + (0.2 * np.sin(t + rng.uniform(0, 2 * np.pi)))[:, None] * frame[:, 2]
    pts = pts * (reach * r / np.max(np.linalg.norm(pts, axis=1)))
    pts = c + pts
    assert np.all(np.asarray(signed_dist(domain, pts)) < 0)
    return DiscreteLoop(pts, rng.uniform(2.0, 6.0), mesh if graded else None)


def central_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
