"""Povzner-type constants, the circle-moment identity and moment tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, stats

from . import _kernels as _k
from .geometry import HALF_PI, AngularKernel, as_velocity, frame


def _check_even(p: int, minimum: int = 2):
    if int(p) != p or p % 2 or p < minimum:
        raise ValueError(f"p must be an even integer >= {minimum}, got {p}")


class PovznerConstants(NamedTuple):
    p: int
    A_p: float
    I: float
    abserr: float


def povzner_constants(p: int, kernel: AngularKernel = AngularKernel(),
                      epsabs: float = 1e-10) -> PovznerConstants:
    """A_p = int [1 - sin(t/2)^p - cos(t/2)^p] beta dt and I = int t^2 beta dt."""
    _check_even(p)
    nu = kernel.nu

    def a_integrand(t):
        # 1 - s^p - c^p computed without cancellation for small t
        s2 = math.sin(0.5 * t) ** 2
        c2 = 1.0 - s2
        k = p // 2
        # 1 - c2^k = s2 * sum_{m<k} c2^m
        one_minus = s2 * sum(c2 ** m for m in range(k))
        return (one_minus - s2 ** k) * t ** (-1.0 - nu)

    if p == 2:
        A, ea = 0.0, 0.0
    else:
        A, ea = integrate.quad(a_integrand, 0.0, HALF_PI, epsabs=epsabs, epsrel=1e-12, limit=500)
    I, ei = integrate.quad(lambda t: t ** (1.0 - nu), 0.0, HALF_PI, epsabs=epsabs,
                           epsrel=1e-12, limit=500)
    return PovznerConstants(int(p), A, I, max(ea, ei))


def circle_moment_identity(v, vs, i: int, n_phi: int = 64) -> tuple[float, float]:
    """(closed form, phi-quadrature) of the average of (w . Gamma)^{2i}, w = v + v*."""
    if i < 1:
        raise ValueError("i must be a positive integer")
    v = as_velocity(v)
    vs = as_velocity(vs)
    cross = float(v @ v) * float(vs @ vs) - float(v @ vs) ** 2
    closed = math.comb(2 * i, i) * max(cross, 0.0) ** i
    ii, jj = frame(v - vs)
    w = v + vs
    wi = float(w @ ii)
    wj = float(w @ jj)
    # trapezoid rule is exact for trigonometric polynomials of degree < n_phi
    n = max(n_phi, 2 * i + 2)
    phis = np.arange(n) * (2.0 * math.pi / n)
    quad = float(np.mean((np.cos(phis) * wi + np.sin(phis) * wj) ** (2 * i)))
    return closed, quad


def _phi_avg_moment_change(v, vs, p: int, theta: float, n_phi: int) -> float:
    # phi-average of |v'|^p + |v*'|^p - |v|^p - |v*|^p at fixed theta
    d = v - vs
    ii, jj = frame(d)
    phis = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    c = math.sin(0.5 * theta) ** 2
    s = 0.5 * math.sin(theta)
    G = np.cos(phis)[:, None] * ii + np.sin(phis)[:, None] * jj
    a = -c * d + s * G
    vp = v + a
    vsp = vs - a
    h = p // 2
    tot = np.sum(vp * vp, axis=1) ** h + np.sum(vsp * vsp, axis=1) ** h
    return float(tot.mean()) - float(v @ v) ** h - float(vs @ vs) ** h


def povzner_lhs(v, vs, p: int, theta_min: float = 0.0,
                kernel: AngularKernel = AngularKernel()) -> float:
    """int (|v'|^p + |v*'|^p - |v|^p - |v*|^p) beta(theta) dtheta dphi/2pi over theta >= theta_min."""
    _check_even(p, 4)
    v = as_velocity(v)
    vs = as_velocity(vs)
    if not np.any(v - vs):
        return 0.0
    n_phi = 2 * p + 4
    scale = 1.0 + float(v @ v) ** (p // 2) + float(vs @ vs) ** (p // 2)
    return kernel.theta_integral(lambda t: _phi_avg_moment_change(v, vs, p, t, n_phi),
                                 theta_min, HALF_PI, epsabs=1e-12 * scale, epsrel=1e-10)


@dataclass
class PovznerReport:
    p: int
    A_p: float
    I: float
    lhs: np.ndarray
    mixed: np.ndarray
    pure: np.ndarray
    A_tilde: float

    @property
    def holds(self) -> bool:
        rhs = -self.A_p * self.pure + self.I * self.A_tilde * self.mixed
        tol = 1e-9 * (1.0 + np.abs(self.lhs) + self.A_p * self.pure)
        return bool(np.all(self.lhs <= rhs + tol))


def povzner_inequality_probe(pairs, p: int = 4, theta_min: float = 0.0,
                             kernel: AngularKernel = AngularKernel()) -> PovznerReport:
    """Smallest A~_p making the Povzner inequality hold on every probe pair.

    ``pairs`` is a sequence of (v, v*).  Pairs whose mixed term vanishes
    carry no information on A~_p and only need lhs <= -A_p(|v|^p + |v*|^p).
    """
    _check_even(p, 4)
    pc = povzner_constants(p, kernel)
    lhs, mixed, pure = [], [], []
    for v, vs in pairs:
        v = as_velocity(v)
        vs = as_velocity(vs)
        nv = float(np.linalg.norm(v))
        ns = float(np.linalg.norm(vs))
        lhs.append(povzner_lhs(v, vs, p, theta_min, kernel))
        mixed.append(nv ** (p - 2) * ns ** 2 + ns ** (p - 2) * nv ** 2)
        pure.append(nv ** p + ns ** p)
    lhs_a = np.array(lhs)
    mixed_a = np.array(mixed)
    pure_a = np.array(pure)
    excess = lhs_a + pc.A_p * pure_a
    pos = mixed_a > 0
    a_tilde = float(np.max(excess[pos] / (pc.I * mixed_a[pos]), initial=0.0))
    return PovznerReport(p, pc.A_p, pc.I, lhs_a, mixed_a, pure_a, max(a_tilde, 0.0))


class TrendTest(NamedTuple):
    slope: float
    stderr: float
    upward: bool


def trend_test(times, values, sigmas: float = 3.0) -> TrendTest:
    """Linear fit over the final half of the horizon; upward if slope > sigmas * se."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    if half.sum() < 3:
        raise ValueError("need at least 3 points in the final half")
    fit = stats.linregress(t[half], y[half])
    return TrendTest(float(fit.slope), float(fit.stderr), bool(fit.slope > sigmas * fit.stderr))


@dataclass
class MomentTracker:
    """Observer recording m_p = (1/N) sum |v^i|^p at observation times."""

    ps: Sequence[int] = (2, 4)
    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    energy: float | None = None

    def __post_init__(self):
        for p in self.ps:
            _check_even(p)
        self.series = {p: [] for p in self.ps}

    def __call__(self, ens):
        if self.energy is None:
            self.energy = ens.energy0
        self.times.append(ens.t)
        for p in self.ps:
            self.series[p].append(_k.moments_p(ens.velocities, float(p)))

    def trend(self, p: int) -> TrendTest:
        return trend_test(self.times, self.series[p])


def gaussian_moment(p: int, energy: float = 1.0) -> float:
    """E|v|^p for the isotropic Gaussian with E|v|^2 = energy."""
    _check_even(p)
    # |v|^2 = (energy/3) chi^2_3 and E (chi^2_3)^k = 3 * 5 * ... * (2k + 1)
    k = p // 2
    return (energy / 3.0) ** k * math.prod(range(3, 2 * k + 2, 2))
