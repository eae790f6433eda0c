"""Quadratic optimal transport between post-collisional circles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .geometry import AngularKernel, as_velocity, phi_LK, phi_tail_constant, sin2_integral


@dataclass(frozen=True)
class Circle:
    b: np.ndarray
    r: float
    d: np.ndarray

    def point(self, k: np.ndarray, h: np.ndarray, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)[..., None]
        return self.b + self.r * (np.cos(phi) * k + np.sin(phi) * h)


def circle_of(v, vs, theta: float) -> Circle:
    """The circle swept by v + a(v, v*, theta, phi) as phi varies."""
    v = as_velocity(v)
    vs = as_velocity(vs)
    diff = v - vs
    n = float(np.linalg.norm(diff))
    b = 0.5 * (v + vs) + math.cos(theta) * 0.5 * diff
    r = math.sin(theta) * 0.5 * n
    d = diff / n if n > 0 else np.array([1.0, 0.0, 0.0])
    return Circle(b, r, d)


def w2_circles(c1: Circle, c2: Circle) -> float:
    """Squared W2 between the uniform laws on two circles."""
    db = c1.b - c2.b
    return float(db @ db + (c1.r - c2.r) ** 2 + c1.r * c2.r * (1.0 - abs(float(c1.d @ c2.d))))


def varphi(vdiff, udiff, phi: float) -> float:
    """Angle map making (v + a(.., phi), u + a(.., varphi)) an optimal coupling.

    Depends only on the difference vectors v - v* and u - u*.  Raises
    ValueError when either difference vanishes; callers treat that
    collision as a no-op.
    """
    v = as_velocity(vdiff)
    u = as_velocity(udiff)
    if not np.array_equal(v, u) and (not np.any(v) or not np.any(u)):
        raise ValueError("varphi needs nonzero difference vectors")
    out = _k.varphi3(v[0], v[1], v[2], u[0], u[1], u[2], _k.wrap_angle(float(phi)))
    return out


def R(v, u) -> float:
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    vu = float(v @ u)
    out = float(np.linalg.norm(v) * np.linalg.norm(u)) + abs(vu) - 2.0 * vu
    # nonnegative up to rounding
    assert out >= -1e-12 * (1.0 + float(v @ v) + float(u @ u))
    return max(out, 0.0)


def phi_avg_cost(v, vs, u, us, theta: float, vartheta: float) -> float:
    """Closed form of the phi-averaged change of |v - u|^2 after coupled jumps."""
    v, vs, u, us = (as_velocity(x) for x in (v, vs, u, us))
    dv = v - vs
    du = u - us
    ct = 0.5 * (1.0 - math.cos(theta))
    cv = 0.5 * (1.0 - math.cos(vartheta))
    first = -float(((v - u) + (vs - us)) @ (ct * dv - cv * du))
    second = -0.25 * math.sin(theta) * math.sin(vartheta) * R(dv, du)
    third = 0.5 * (1.0 - math.cos(theta - vartheta)) * float(dv @ du)
    return first + second + third


def z_phi_avg_cost(v, vs, u, us, L: float, K: float,
                   kernel: AngularKernel = AngularKernel()) -> float:
    """(z, phi)-integrated change of |v - u|^2 with cutoffs K >= L."""
    if L < 0 or K < L:
        raise ValueError(f"need 0 <= L <= K, got L={L}, K={K}")
    v, vs, u, us = (as_velocity(x) for x in (v, vs, u, us))
    dv = v - vs
    p0L = phi_LK(0.0, L, kernel)
    pLK = phi_LK(L, K, kernel)
    return (p0L * (-float((v - u) @ (v - u)) + float((vs - us) @ (vs - us)))
            + pLK * float(dv @ (2.0 * u - v - vs))
            - R(dv, u - us) * sin2_integral(L, kernel))


def z_phi_avg_cost_bound(v, vs, u, us, L: float,
                         kernel: AngularKernel = AngularKernel()) -> float:
    """Upper bound dropping the R term and bounding the cutoff tail."""
    v, vs, u, us = (as_velocity(x) for x in (v, vs, u, us))
    p0L = phi_LK(0.0, L, kernel)
    scale = float(np.linalg.norm(v) + np.linalg.norm(vs) + np.linalg.norm(u))
    tail = 2.0 * phi_tail_constant(kernel) * scale ** 2 * (1.0 + L) ** (1.0 - 2.0 / kernel.nu)
    return p0L * (-float((v - u) @ (v - u)) + float((vs - us) @ (vs - us))) + tail
