"""Independent numerical oracles for the closed-form identities.

Every oracle here recomputes a quantity from its definition (explicit
collisions, quadrature, exhaustive search) instead of the algebra used in
the library.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from numba import njit
from scipy import integrate

from . import _kernels as _k
from .circles import Circle
from .geometry import HALF_PI, AngularKernel, as_velocity
from .wasserstein import as_cloud, assignment

N_PHI = 64


@njit(cache=True)
def _coupled_phi_mean(v, vs, u, us, theta, vartheta, n_phi, u_jumps):
    dv0, dv1, dv2 = v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]
    du0, du1, du2 = u[0] - us[0], u[1] - us[1], u[2] - us[2]
    tot = 0.0
    for m in range(n_phi):
        p = m * (2.0 * math.pi / n_phi)
        a0, a1, a2 = _k.deflection3(dv0, dv1, dv2, theta, p)
        b0 = b1 = b2 = 0.0
        if u_jumps:
            q = _k.varphi3(dv0, dv1, dv2, du0, du1, du2, p)
            if q < 0.0:
                q = p
            b0, b1, b2 = _k.deflection3(du0, du1, du2, vartheta, q)
        e0 = v[0] + a0 - u[0] - b0
        e1 = v[1] + a1 - u[1] - b1
        e2 = v[2] + a2 - u[2] - b2
        tot += e0 * e0 + e1 * e1 + e2 * e2
    w0, w1, w2 = v[0] - u[0], v[1] - u[1], v[2] - u[2]
    return tot / n_phi - (w0 * w0 + w1 * w1 + w2 * w2)


def phi_avg_cost_quadrature(v, vs, u, us, theta: float, vartheta: float,
                            n_phi: int = N_PHI) -> float:
    """Average over phi of |v' - u'|^2 - |v - u|^2 with explicit coupled jumps."""
    v, vs, u, us = (as_velocity(x) for x in (v, vs, u, us))
    return _coupled_phi_mean(v, vs, u, us, float(theta), float(vartheta), n_phi, True)


def z_phi_avg_cost_quadrature(v, vs, u, us, L: float, K: float,
                              kernel: AngularKernel = AngularKernel()) -> float:
    """(z, phi)-integral of the change of |v - u|^2 from explicit jumps.

    For z <= L both particles jump with theta = G(z); for L < z <= K only v
    does.  z is integrated in the theta variable, dz = beta(theta) dtheta.
    """
    v, vs, u, us = (as_velocity(x) for x in (v, vs, u, us))
    nu = kernel.nu
    tol = 1e-10 * (1.0 + sum(float(x @ x) for x in (v, vs, u, us)))
    out = 0.0
    if L > 0:
        out += integrate.quad(
            lambda t: _coupled_phi_mean(v, vs, u, us, t, t, N_PHI, True) * t ** (-1.0 - nu),
            kernel.G(L), HALF_PI, epsabs=tol, epsrel=1e-9, limit=200)[0]
    if K > L:
        out += integrate.quad(
            lambda t: _coupled_phi_mean(v, vs, u, us, t, t, N_PHI, False) * t ** (-1.0 - nu),
            kernel.G(K), kernel.G(L), epsabs=tol, epsrel=1e-9, limit=200)[0]
    return out


def circle_points(c: Circle, n: int, offset: float = 0.0) -> np.ndarray:
    """n equally spaced points on a circle, in an SVD-built basis of its plane."""
    _, _, vt = np.linalg.svd(c.d.reshape(1, 3))
    ang = offset + np.arange(n) * (2.0 * math.pi / n)
    return c.b + c.r * (np.cos(ang)[:, None] * vt[1] + np.sin(ang)[:, None] * vt[2])


def w2_circles_discrete(c1: Circle, c2: Circle, n: int = 512) -> float:
    """Squared W2 between n-point discretizations of two circles, by assignment."""
    A = circle_points(c1, n)
    B = circle_points(c2, n, offset=math.pi / n)
    _, total = assignment(A, B)
    return total / n


def w2_bruteforce(A, B) -> float:
    """min over all k! permutations of (1/k) sum |a^i - b^pi(i)|^2."""
    A = as_cloud(A)
    B = as_cloud(B)
    k = A.shape[0]
    if B.shape[0] != k:
        raise ValueError("size mismatch")
    if k > 9:
        raise ValueError("exhaustive search is limited to k <= 9")
    C = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    best = math.inf
    rows = np.arange(k)
    for perm in itertools.permutations(range(k)):
        best = min(best, float(C[rows, list(perm)].sum()))
    return best / k

