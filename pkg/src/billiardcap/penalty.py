"""Boundary penalty: cutoff profile, potential U = k(dist)^-2 and the H/L pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutsideDomain
from .geometry import sd_derivatives


@dataclass(frozen=True)
class PenaltyConfig:
    """``d0`` is the cutoff width, ``eps`` the penalty strength."""

    d0: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.d0 < 0.5:
            raise ValueError(f"d0 must lie in (0, 1/2), got {self.d0}")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")

    @property
    def k_plateau(self):
        return 1.5 * self.d0

    @property
    def u_min(self):
        """Smallest value of U, attained where the distance exceeds 2*d0."""
        return self.k_plateau ** -2

    def with_eps(self, eps):
        return PenaltyConfig(self.d0, eps)


def k_profile(cfg, x):
    """Cutoff profile ``k`` and its first two derivatives.

    ``k`` is the identity on ``[0, d0]`` and equals ``1.5*d0`` beyond ``2*d0``. In
    between, ``k'`` falls from 1 to 0 along the quintic smoothstep, so ``k`` is C^2,
    monotone, and ``0 <= k' <= 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("k_profile is defined on x >= 0")
    d0 = cfg.d0
    u = np.clip((x - d0) / d0, 0.0, 1.0)
    s = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = 30.0 * u * u * (1.0 - u) ** 2
    S = u ** 4 * (2.5 - 3.0 * u + u * u)
    k = np.where(x >= 2.0 * d0, cfg.k_plateau, np.where(x <= d0, x, x - d0 * S))
    dk = 1.0 - s
    ddk = -ds / d0
    return k, dk, ddk


def _interior_distance(domain, q):
    sd, grad, hess = sd_derivatives(domain, q)
    if np.any(sd >= 0):
        raise OutsideDomain("potential evaluated at a point outside the domain")
    return -sd, -grad, -hess


def potential_U(domain, cfg, q):
    """``U``, its gradient and Hessian at interior points ``q`` of shape ``(..., n)``."""
    q = np.asarray(q, dtype=float)
    dist, gd, Hd = _interior_distance(domain, q)
    k, dk, ddk = k_profile(cfg, dist)
    U = k ** -2
    dU = -2.0 * k ** -3 * dk
    ddU = 6.0 * k ** -4 * dk * dk - 2.0 * k ** -3 * ddk
    grad = dU[..., None] * gd
    # beyond the cutoff dU vanishes; mask so a focal-point Hessian cannot leak in
    Hd = np.where((dU != 0.0)[..., None, None], Hd, 0.0)
    hess = ddU[..., None, None] * gd[..., :, None] * gd[..., None, :] + dU[..., None, None] * Hd
    if np.ndim(U) == 0:
        return float(U), grad, hess
    return U, grad, hess


def potential_value(domain, cfg, q):
    q = np.asarray(q, dtype=float)
    sd = sd_derivatives(domain, q)[0]
    if np.any(sd >= 0):
        raise OutsideDomain("potential evaluated at a point outside the domain")
    return k_profile(cfg, -sd)[0] ** -2


def normal_stiffness(cfg, dist):
    """``sqrt(eps * |d^2U/d dist^2|)``: the local frequency of motion toward the wall."""
    k, dk, ddk = k_profile(cfg, dist)
    ddU = 6.0 * k ** -4 * dk * dk - 2.0 * k ** -3 * ddk
    return np.sqrt(cfg.eps * np.abs(ddU))


def hamiltonian(domain, cfg, q, p):
    """``eps*U(q) + |p|^2/2``."""
    p = np.asarray(p, dtype=float)
    return cfg.eps * potential_value(domain, cfg, q) + 0.5 * np.sum(p * p, axis=-1)


def lagrangian(domain, cfg, q, v):
    """``|v|^2/2 - eps*U(q)``."""
    v = np.asarray(v, dtype=float)
    return 0.5 * np.sum(v * v, axis=-1) - cfg.eps * potential_value(domain, cfg, q)
