"""Collision kinematics for Maxwell molecules with a power-law angular kernel.

The deviation-angle kernel is beta(theta) = theta**(-1 - nu) on (0, pi/2].
Collisions are parametrized by (theta, phi) through the odd frame
``frame(x)``, or by (z, phi) with theta = G(z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from . import _kernels as _k

HALF_PI = 0.5 * math.pi


class Frame(NamedTuple):
    ii: np.ndarray
    jj: np.ndarray


def as_velocity(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity components must be finite")
    return v


def frame(x) -> Frame:
    """Orthogonal frame (ii(x), jj(x)) with |ii| = |jj| = |x|.

    Both maps are odd and positively homogeneous, so ii(lam*x) = lam*ii(x)
    for every real lam.  frame(0) = (0, 0).
    """
    x = as_velocity(x)
    i0, i1, i2, j0, j1, j2 = _k.frame3(x[0], x[1], x[2])
    return Frame(np.array([i0, i1, i2]), np.array([j0, j1, j2]))


def gamma(x, phi: float) -> np.ndarray:
    ii, jj = frame(x)
    return math.cos(phi) * ii + math.sin(phi) * jj


def deflection(v, vs, theta: float, phi: float) -> np.ndarray:
    d = as_velocity(v) - as_velocity(vs)
    return np.array(_k.deflection3(d[0], d[1], d[2], float(theta), float(phi)))


def post_collision(v, vs, theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Post-collisional pair (v + a, v* - a)."""
    v = as_velocity(v)
    vs = as_velocity(vs)
    a = deflection(v, vs, theta, phi)
    return v + a, vs - a


@dataclass(frozen=True)
class AngularKernel:
    """beta(theta) = theta**(-1 - nu) on (0, pi/2]."""

    nu: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")

    def beta(self, theta):
        return np.asarray(theta, dtype=float) ** (-1.0 - self.nu)

    def H(self, theta):
        th = np.asarray(theta, dtype=float)
        if np.any(th <= 0.0) or np.any(th > HALF_PI):
            raise ValueError("H is defined on (0, pi/2]")
        out = (th ** (-self.nu) - HALF_PI ** (-self.nu)) / self.nu
        return float(out) if out.ndim == 0 else out

    def G(self, z):
        zz = np.asarray(z, dtype=float)
        if np.any(zz < 0.0):
            raise ValueError("G is defined on [0, inf]")
        with np.errstate(divide="ignore"):
            out = (self.nu * zz + HALF_PI ** (-self.nu)) ** (-1.0 / self.nu)
        return float(out) if out.ndim == 0 else out

    @property
    def c2(self) -> float:
        # G(z) (1+z)^{1/nu} = ((1+z)/(nu z + a))^{1/nu} is monotone in z,
        # so its extremes are the values at z = 0 and z -> inf
        a = HALF_PI ** (-self.nu)
        return min(1.0 / a, 1.0 / self.nu) ** (1.0 / self.nu)

    @property
    def c3(self) -> float:
        a = HALF_PI ** (-self.nu)
        return max(1.0 / a, 1.0 / self.nu) ** (1.0 / self.nu)

    def theta_integral(self, f: Callable[[float], float], lo: float, hi: float,
                       epsabs: float = 1e-10, epsrel: float = 1e-12) -> float:
        """int_lo^hi f(theta) beta(theta) dtheta by adaptive quadrature."""
        if hi <= lo:
            return 0.0
        nu = self.nu
        val, _ = integrate.quad(lambda t: f(t) * t ** (-1.0 - nu), lo, hi,
                                epsabs=epsabs, epsrel=epsrel, limit=500)
        return val


@dataclass(frozen=True)
class CutoffSpec:
    K: float = math.inf
    L: float = 1.0

    def __post_init__(self):
        if not self.K > 0 or not self.L > 0:
            raise ValueError("cutoffs must be positive")
        if self.K < self.L:
            raise ValueError(f"need K >= L, got K={self.K}, L={self.L}")


def phi_LK(L: float, K: float, kernel: AngularKernel = AngularKernel()) -> float:
    """int_L^K (1 - cos G(z))/2 dz, computed in the theta variable."""
    if L < 0 or K < L:
        raise ValueError(f"need 0 <= L <= K, got L={L}, K={K}")
    if K == L:
        return 0.0
    return kernel.theta_integral(lambda t: math.sin(0.5 * t) ** 2, kernel.G(K), kernel.G(L))


def sin2_integral(L: float, kernel: AngularKernel = AngularKernel()) -> float:
    """int_0^L sin^2(G(z))/4 dz."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    if L == 0:
        return 0.0
    return kernel.theta_integral(lambda t: 0.25 * math.sin(t) ** 2, kernel.G(L), HALF_PI)


def phi_tail_constant(kernel: AngularKernel = AngularKernel()) -> float:
    """C with phi_LK(L, inf) <= C (1+L)^(1-2/nu) for all L >= 0."""
    nu = kernel.nu
    # (1-cos t)/2 <= t^2/4 and G(L) <= c3 (1+L)^(-1/nu)
    return kernel.c3 ** (2.0 - nu) / (4.0 * (2.0 - nu))


def _unit_complement(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # orthonormal completion of d from an SVD, independent of frame()
    _, _, vt = np.linalg.svd(d.reshape(1, 3))
    return vt[1], vt[2]


def sphere_vs_param_check(v, vs, test_fn: Callable[[np.ndarray], float],
                          theta_min: float = 1e-2,
                          kernel: AngularKernel = AngularKernel(),
                          n_phi: int = 64) -> tuple[float, float]:
    """Both sides of the sphere/angle change of variables for a test function.

    The sphere side integrates over sigma in S^2 with B(theta) sin(theta) =
    beta(theta) restricted to theta >= theta_min, using the symmetric
    pre-collision formula and a frame built by SVD.  The parametrized side
    integrates phi over [0, 2pi) with the deflection a(v, v*, theta, phi).
    """
    v = as_velocity(v)
    vs = as_velocity(vs)
    f0 = test_fn(v)
    diff = v - vs
    if not np.any(diff):
        return 0.0, 0.0
    phis = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    w_phi = 2.0 * math.pi / n_phi

    ii, jj = frame(diff)

    def param_inner(theta):
        c = math.sin(0.5 * theta) ** 2
        s = 0.5 * math.sin(theta)
        tot = 0.0
        for p in phis:
            a = -c * diff + s * (math.cos(p) * ii + math.sin(p) * jj)
            tot += test_fn(v + a) - f0
        return tot * w_phi

    mid = 0.5 * (v + vs)
    half = 0.5 * np.linalg.norm(diff)
    dhat = diff / np.linalg.norm(diff)
    e1, e2 = _unit_complement(dhat)

    def sphere_inner(theta):
        # sin(theta) dtheta dpsi times B(theta) = beta(theta)/sin(theta)
        tot = 0.0
        for p in phis:
            sigma = math.cos(theta) * dhat + math.sin(theta) * (math.cos(p) * e1 + math.sin(p) * e2)
            tot += test_fn(mid + half * sigma) - f0
        return tot * w_phi

    sphere = kernel.theta_integral(sphere_inner, theta_min, HALF_PI, epsabs=1e-12)
    param = kernel.theta_integral(param_inner, theta_min, HALF_PI, epsabs=1e-12)
    return sphere, param
