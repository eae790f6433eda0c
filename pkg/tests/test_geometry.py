import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kacchaos.geometry import (HALF_PI, AngularKernel, CutoffSpec, deflection, frame, gamma,
                               phi_LK, phi_tail_constant, post_collision, sin2_integral,
                               sphere_vs_param_check)

# keep squared norms out of the subnormal range
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False).map(
    lambda x: 0.0 if abs(x) < 1e-100 else x)
vec = st.tuples(finite, finite, finite).map(np.array)


def test_frame_canonical_example():
    ii, jj = frame([2.0, 0.0, 0.0])
    assert np.array_equal(ii, [0.0, 0.0, 2.0])
    mi, _ = frame([-2.0, 0.0, 0.0])
    assert np.array_equal(mi, [0.0, 0.0, -2.0])
    assert np.allclose(np.cross([1.0, 0, 0], ii / 2), jj / 2)


def test_frame_of_zero_is_degenerate():
    ii, jj = frame([0.0, 0.0, 0.0])
    assert not ii.any() and not jj.any()


@settings(max_examples=300, deadline=None)
@given(vec)
def test_frame_invariants(x):
    r2 = float(x @ x)
    if r2 == 0.0:
        return
    ii, jj = frame(x)
    scale = 1e-12 * r2
    assert abs(ii @ x) <= scale and abs(jj @ x) <= scale and abs(ii @ jj) <= scale
    assert math.isclose(ii @ ii, r2, rel_tol=1e-12)
    assert math.isclose(jj @ jj, r2, rel_tol=1e-12)


def test_frame_homogeneous_and_odd(rng):
    xs = rng.normal(size=(10_000, 3))
    for lam in (-3.0, -1.0, 0.5, 2.0):
        worst = 0.0
        for x in xs:
            ii, jj = frame(x)
            li, lj = frame(lam * x)
            worst = max(worst, np.max(np.abs(li - lam * ii)), np.max(np.abs(lj - lam * jj)))
        assert worst <= 1e-12


def test_frame_rejects_bad_input():
    with pytest.raises(ValueError):
        frame([1.0, 2.0])
    with pytest.raises(ValueError):
        frame([1.0, np.nan, 0.0])


def test_gamma_examples():
    x = np.array([2.0, 0.0, 0.0])
    ii, jj = frame(x)
    assert np.array_equal(gamma(x, 0.0), ii)
    assert np.allclose(gamma(x, HALF_PI), jj, atol=1e-15)
    assert np.allclose(gamma(x, math.pi), [0.0, 0.0, -2.0], atol=1e-15)
    assert not gamma([0.0, 0.0, 0.0], 1.0).any()


@settings(max_examples=200, deadline=None)
@given(vec, st.floats(0.0, 2 * math.pi, exclude_max=True))
def test_gamma_norm_and_orthogonality(x, phi):
    g = gamma(x, phi)
    r2 = float(x @ x)
    assert math.isclose(g @ g, r2, rel_tol=1e-12, abs_tol=1e-300)
    assert abs(g @ x) <= 1e-12 * max(r2, 1e-300)


def test_deflection_examples():
    v, vs = [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]
    assert np.allclose(deflection(v, vs, HALF_PI, 0.0), [-1.0, 0.0, 1.0], atol=1e-15)
    assert not deflection(v, vs, 0.0, 1.3).any()
    assert not deflection(v, v, 1.0, 1.3).any()


def test_deflection_is_order_theta(rng):
    for _ in range(500):
        v, vs = rng.normal(size=(2, 3))
        th = rng.uniform(0.0, HALF_PI)
        a = deflection(v, vs, th, rng.uniform(0, 2 * math.pi))
        # |a| = sin(theta/2) |v - v*| <= theta/2 |v - v*|
        assert np.linalg.norm(a) <= 0.5 * th * np.linalg.norm(v - vs) * (1 + 1e-12)


def test_post_collision_examples():
    v, vs = np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])
    vp, vsp = post_collision(v, vs, HALF_PI, 0.0)
    assert np.allclose(vp, [0.0, 0.0, 1.0], atol=1e-15)
    assert np.allclose(vsp, [0.0, 0.0, -1.0], atol=1e-15)
    assert math.isclose(vp @ vp + vsp @ vsp, 2.0, rel_tol=1e-15)
    a, b = post_collision(v, vs, 0.0, 2.0)
    assert np.array_equal(a, v) and np.array_equal(b, vs)


def test_post_collision_conservation(rng):
    n = 20_000
    V = rng.normal(size=(n, 2, 3)) * rng.exponential(size=(n, 1, 1))
    th = rng.uniform(0, HALF_PI, n)
    ph = rng.uniform(0, 2 * math.pi, n)
    for (v, vs), t, p in zip(V, th, ph):
        a, b = post_collision(v, vs, t, p)
        e0 = v @ v + vs @ vs
        assert np.max(np.abs(a + b - v - vs)) <= 1e-12 * (1 + math.sqrt(e0))
        assert abs(a @ a + b @ b - e0) <= 1e-10 * e0


def test_kernel_rejects_nu_outside_unit_interval():
    for nu in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            AngularKernel(nu)


def test_H_and_G():
    k = AngularKernel(0.5)
    assert k.G(0.0) == pytest.approx(HALF_PI, rel=1e-15)
    ref = float(mpmath.quad(lambda x: x ** mpmath.mpf(-1.5), [1, mpmath.pi / 2]))
    assert k.H(1.0) == pytest.approx(ref, abs=1e-13)
    assert k.H(1.0) == pytest.approx(0.40423, abs=1e-5)
    assert k.G(k.H(1.0)) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(ValueError):
        k.H(0.0)
    with pytest.raises(ValueError):
        k.H(2.0)
    with pytest.raises(ValueError):
        k.G(-1.0)
    assert k.G(math.inf) == 0.0


@pytest.mark.parametrize("nu", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_G_inverts_H_and_is_monotone(nu):
    k = AngularKernel(nu)
    th = np.linspace(1e-3, HALF_PI, 2000)
    assert np.max(np.abs(k.G(k.H(th)) - th)) <= 1e-12
    z = np.linspace(0, 1e3, 5000)
    assert np.all(np.diff(k.G(z)) < 0)


@pytest.mark.parametrize("nu", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_boundG(nu):
    k = AngularKernel(nu)
    z = np.concatenate([[0.0], np.logspace(-6, 6, 20_000)])
    scaled = k.G(z) * (1 + z) ** (1 / nu)
    assert np.all(scaled >= k.c2 * (1 - 1e-12))
    assert np.all(scaled <= k.c3 * (1 + 1e-12))
    assert k.c2 < k.c3


def test_boundG_example_z100():
    k = AngularKernel(0.5)
    assert k.c2 == pytest.approx(HALF_PI)
    assert k.c3 == pytest.approx(4.0)
    g = k.G(100.0)
    assert k.c2 * 101 ** -2 <= g <= k.c3 * 101 ** -2


def test_cutoff_spec():
    CutoffSpec(K=10, L=2)
    CutoffSpec()
    with pytest.raises(ValueError):
        CutoffSpec(K=1, L=2)
    with pytest.raises(ValueError):
        CutoffSpec(K=0, L=0)


def test_phi_LK_properties():
    k = AngularKernel(0.5)
    assert phi_LK(3.0, 3.0, k) == 0.0
    with pytest.raises(ValueError):
        phi_LK(3.0, 2.0, k)
    full = phi_LK(0.0, math.inf, k)
    # second scheme: mpmath tanh-sinh on (1 - cos t)/2 t^{-3/2}
    ref = float(mpmath.quad(lambda t: (1 - mpmath.cos(t)) / 2 * t ** mpmath.mpf(-1.5),
                            [0, mpmath.pi / 2]))
    assert full == pytest.approx(ref, abs=1e-8)
    for L, K in [(0.0, 5.0), (1.0, 100.0), (2.0, math.inf)]:
        assert phi_LK(0.0, K, k) == pytest.approx(phi_LK(0.0, L, k) + phi_LK(L, K, k), abs=1e-10)


def test_phi_LK_in_z_variable():
    k = AngularKernel(0.5)
    direct, _ = integrate.quad(lambda z: (1 - math.cos(k.G(z))) / 2, 2.0, 10.0, epsabs=1e-13)
    assert phi_LK(2.0, 10.0, k) == pytest.approx(direct, abs=1e-10)


@pytest.mark.parametrize("nu", [0.2, 0.5, 0.8])
def test_phi_tail_bound(nu):
    k = AngularKernel(nu)
    C = phi_tail_constant(k)
    for L in (0.0, 1.0, 3.0, 10.0, 100.0, 1e4):
        assert phi_LK(L, math.inf, k) <= C * (1 + L) ** (1 - 2 / nu)


def test_sin2_integral():
    k = AngularKernel(0.5)
    direct, _ = integrate.quad(lambda z: math.sin(k.G(z)) ** 2 / 4, 0.0, 7.0, epsabs=1e-13)
    assert sin2_integral(7.0, k) == pytest.approx(direct, abs=1e-10)
    assert sin2_integral(0.0, k) == 0.0


def test_sphere_vs_param_energy_example():
    v, vs = np.array([1.0, 0.0, 0.0]), np.zeros(3)
    k = AngularKernel(0.5)
    f = lambda w: float(w @ w)
    s, p = sphere_vs_param_check(v, vs, f, theta_min=0.01)
    # phi-average of |v'|^2 - |v|^2 is (1 - cos t)/2 (|v*|^2 - |v|^2), times 2 pi
    oracle = 2 * math.pi * k.theta_integral(lambda t: -(1 - math.cos(t)) / 2, 0.01, HALF_PI)
    assert s == pytest.approx(oracle, abs=1e-8)
    assert p == pytest.approx(oracle, abs=1e-8)


def test_sphere_vs_param_constant_and_linear(rng):
    s, p = sphere_vs_param_check([1.0, 2, 3], [0.0, -1, 2], lambda w: 4.2)
    assert s == 0.0 and p == 0.0
    for _ in range(3):
        v, vs = rng.normal(size=(2, 3))
        s, p = sphere_vs_param_check(v, vs, lambda w: float(w[0]), n_phi=16)
        assert s == pytest.approx(p, abs=1e-6)


def test_sphere_vs_param_polynomial_battery(rng):
    fns = [lambda w: float(w @ w) ** 2, lambda w: w[0] * w[1], lambda w: w[2] ** 3 - w[0]]
    v, vs = rng.normal(size=(2, 3))
    for f in fns:
        s, p = sphere_vs_param_check(v, vs, f, theta_min=0.05, n_phi=32)
        assert s == pytest.approx(p, abs=1e-8)
