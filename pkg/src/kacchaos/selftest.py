"""Closed-form versus oracle checks run by ``kacchaos selftest``."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .circles import circle_of, phi_avg_cost, w2_circles, z_phi_avg_cost
from .geometry import HALF_PI, AngularKernel, frame, sphere_vs_param_check
from .moments import circle_moment_identity, povzner_constants
from .oracles import (phi_avg_cost_quadrature, w2_bruteforce, w2_circles_discrete,
                      z_phi_avg_cost_quadrature)
from .rng import child_generator
from .wasserstein import w2_exact


class Check(NamedTuple):
    name: str
    ok: bool
    worst: float
    tol: float


def _rand_vel(rng, n=1):
    return rng.normal(size=(n, 3)) * rng.exponential(1.0, size=(n, 1))


def check_frame(rng, n=200) -> Check:
    worst = 0.0
    for x in _rand_vel(rng, n):
        ii, jj = frame(x)
        r2 = float(x @ x)
        errs = [abs(ii @ x), abs(jj @ x), abs(ii @ jj), abs(ii @ ii - r2), abs(jj @ jj - r2)]
        mi, mj = frame(-x)
        errs += [np.max(np.abs(mi + ii)), np.max(np.abs(mj + jj))]
        worst = max(worst, max(errs) / (1.0 + r2))
    return Check("frame orthogonality and oddness", worst <= 1e-12, worst, 1e-12)


def check_phi_avg(rng, n=100) -> Check:
    worst = 0.0
    for _ in range(n):
        v, vs, u, us = _rand_vel(rng, 4)
        th, vt = rng.uniform(0.0, HALF_PI, 2)
        worst = max(worst, abs(phi_avg_cost(v, vs, u, us, th, vt)
                               - phi_avg_cost_quadrature(v, vs, u, us, th, vt)))
    return Check("phi-averaged coupled cost", worst <= 1e-6, worst, 1e-6)


def check_z_phi_avg(rng, n=20, kernel=AngularKernel()) -> Check:
    worst = 0.0
    for m in range(n):
        v, vs, u, us = _rand_vel(rng, 4)
        L = rng.uniform(0.0, 20.0)
        K = math.inf if m % 4 == 0 else L + rng.exponential(20.0)
        worst = max(worst, abs(z_phi_avg_cost(v, vs, u, us, L, K, kernel)
                               - z_phi_avg_cost_quadrature(v, vs, u, us, L, K, kernel)))
    return Check("(z, phi)-integrated coupled cost", worst <= 1e-6, worst, 1e-6)


def check_w2_circles(rng, n=10) -> Check:
    worst = 0.0
    for _ in range(n):
        c1 = circle_of(*_rand_vel(rng, 2), rng.uniform(0.0, HALF_PI))
        c2 = circle_of(*_rand_vel(rng, 2), rng.uniform(0.0, HALF_PI))
        a = w2_circles(c1, c2)
        worst = max(worst, abs(a - w2_circles_discrete(c1, c2)) / max(a, 1e-300))
    return Check("W2 between circles vs 512-point assignment", worst <= 1e-3, worst, 1e-3)


def check_circle_moment(rng, n=20) -> Check:
    worst = 0.0
    for _ in range(n):
        v, vs = _rand_vel(rng, 2)
        for i in (1, 2, 3):
            c, q = circle_moment_identity(v, vs, i)
            worst = max(worst, abs(c - q) / (1.0 + abs(c)))
    return Check("circle moment identity", worst <= 1e-8, worst, 1e-8)


def check_sphere_param(rng, n=3) -> Check:
    worst = 0.0
    fns: list[Callable[[np.ndarray], float]] = [
        lambda w: float(w @ w) ** 2,
        lambda w: math.cos(w[0]) + w[1] * w[2],
    ]
    for _ in range(n):
        v, vs = _rand_vel(rng, 2)
        for f in fns:
            s, p = sphere_vs_param_check(v, vs, f, theta_min=0.05, n_phi=32)
            worst = max(worst, abs(s - p) / (1.0 + abs(s)))
    return Check("sphere vs (theta, phi) parametrization", worst <= 1e-6, worst, 1e-6)


def check_povzner(kernel=AngularKernel()) -> Check:
    # 1 - sin^4(t/2) - cos^4(t/2) = sin^2(t)/2
    ref, _ = integrate.quad(lambda t: 0.5 * math.sin(t) ** 2 * t ** (-1.0 - kernel.nu),
                            0.0, HALF_PI, epsabs=1e-12, epsrel=1e-12, limit=500)
    a4 = povzner_constants(4, kernel).A_p
    a2 = povzner_constants(2, kernel).A_p
    worst = max(abs(a4 - ref), abs(a2))
    return Check("Povzner A_2 = 0 and A_4 trigonometric reduction", worst <= 1e-8, worst, 1e-8)


def check_H(kernel=AngularKernel()) -> Check:
    ref, _ = integrate.quad(lambda t: t ** (-1.0 - kernel.nu), 1.0, HALF_PI, epsabs=1e-13)
    worst = abs(kernel.H(1.0) - ref)
    return Check("H against its defining integral", worst <= 1e-10, worst, 1e-10)


def check_w2_bruteforce(rng, n=30) -> Check:
    worst = 0.0
    for m in range(n):
        k = 1 + m % 7
        A, B = rng.normal(size=(2, k, 3))
        worst = max(worst, abs(w2_exact(A, B) - w2_bruteforce(A, B)))
    return Check("assignment vs exhaustive permutations", worst <= 1e-12, worst, 1e-12)


def run_all(seed: int = 0) -> list[Check]:
    rng = child_generator(seed, 0, "misc")
    return [
        check_frame(rng),
        check_H(),
        check_phi_avg(rng),
        check_z_phi_avg(rng),
        check_w2_circles(rng),
        check_circle_moment(rng),
        check_sphere_param(rng),
        check_povzner(),
        check_w2_bruteforce(rng),
    ]
