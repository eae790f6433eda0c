"""Compiled scalar kernels shared by the geometry API and the event loops.

Vectors are passed as separate float components so the hot loops never
allocate.  Everything here is pure and deterministic.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
# below this |d x d~| the two collision axes are treated as parallel
PARALLEL_TOL = 1e-12


@njit(cache=True)
def g_of_z(z, nu):
    if z == np.inf:
        return 0.0
    return (nu * z + HALF_PI ** (-nu)) ** (-1.0 / nu)


@njit(cache=True)
def orientation(x0, x1, x2):
    """Sign of the first nonzero component (0 for the zero vector)."""
    if x0 != 0.0:
        return 1.0 if x0 > 0.0 else -1.0
    if x1 != 0.0:
        return 1.0 if x1 > 0.0 else -1.0
    if x2 != 0.0:
        return 1.0 if x2 > 0.0 else -1.0
    return 0.0


@njit(cache=True)
def frame3(x0, x1, x2):
    """Odd orthogonal frame (ii, jj) of x, both of length |x|."""
    nrm = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    if nrm == 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    a0 = abs(x0)
    a1 = abs(x1)
    a2 = abs(x2)
    # cross with the least aligned coordinate axis, lowest index on ties
    if a0 <= a1 and a0 <= a2:
        c0, c1, c2 = 0.0, x2, -x1
    elif a1 <= a2:
        c0, c1, c2 = -x2, 0.0, x0
    else:
        c0, c1, c2 = x1, -x0, 0.0
    cn = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    f = nrm / cn
    i0 = c0 * f
    i1 = c1 * f
    i2 = c2 * f
    eps = orientation(x0, x1, x2) / nrm
    j0 = eps * (x1 * i2 - x2 * i1)
    j1 = eps * (x2 * i0 - x0 * i2)
    j2 = eps * (x0 * i1 - x1 * i0)
    return i0, i1, i2, j0, j1, j2


@njit(cache=True)
def deflection3(d0, d1, d2, theta, phi):
    """a(v, v*, theta, phi) as a function of the difference d = v - v*."""
    i0, i1, i2, j0, j1, j2 = frame3(d0, d1, d2)
    cp = math.cos(phi)
    sp = math.sin(phi)
    sh = math.sin(0.5 * theta)
    c = sh * sh
    s = 0.5 * math.sin(theta)
    return (-c * d0 + s * (cp * i0 + sp * j0),
            -c * d1 + s * (cp * i1 + sp * j1),
            -c * d2 + s * (cp * i2 + sp * j2))


@njit(cache=True)
def wrap_angle(a):
    a = a - TWO_PI * math.floor(a / TWO_PI)
    if a >= TWO_PI or a < 0.0:
        a = 0.0
    return a


@njit(cache=True)
def varphi3(v0, v1, v2, u0, u1, u2, phi):
    """Angle re-coupling map between circles with axes v and u.

    Returns -1.0 when either difference vector vanishes.
    """
    if v0 == u0 and v1 == u1 and v2 == u2:
        return phi
    nv = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    nu_ = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
    if nv == 0.0 or nu_ == 0.0:
        return -1.0
    d0, d1, d2 = v0 / nv, v1 / nv, v2 / nv
    e0, e1, e2 = u0 / nu_, u1 / nu_, u2 / nu_
    h0 = d1 * e2 - d2 * e1
    h1 = d2 * e0 - d0 * e2
    h2 = d0 * e1 - d1 * e0
    hn = math.sqrt(h0 * h0 + h1 * h1 + h2 * h2)
    if hn <= PARALLEL_TOL:
        h0, h1, h2, _, _, _ = frame3(d0, d1, d2)
        hn = math.sqrt(h0 * h0 + h1 * h1 + h2 * h2)
    h0 /= hn
    h1 /= hn
    h2 /= hn
    i0, i1, i2, j0, j1, j2 = frame3(v0, v1, v2)
    phi1 = math.atan2(h0 * j0 + h1 * j1 + h2 * j2, h0 * i0 + h1 * i1 + h2 * i2)
    i0, i1, i2, j0, j1, j2 = frame3(u0, u1, u2)
    phi2 = math.atan2(h0 * j0 + h1 * j1 + h2 * j2, h0 * i0 + h1 * i1 + h2 * i2)
    s = orientation(v0, v1, v2) * orientation(u0, u1, u2)
    if d0 * e0 + d1 * e1 + d2 * e2 < 0.0:
        s = -s
    return wrap_angle(s * (phi - phi1) + phi2)


@njit(cache=True)
def collide_pair(vel, i, j, theta, phi):
    """Binary collision of particles i and j in place."""
    d0 = vel[i, 0] - vel[j, 0]
    d1 = vel[i, 1] - vel[j, 1]
    d2 = vel[i, 2] - vel[j, 2]
    if d0 == 0.0 and d1 == 0.0 and d2 == 0.0:
        return
    a0, a1, a2 = deflection3(d0, d1, d2, theta, phi)
    vel[i, 0] += a0
    vel[i, 1] += a1
    vel[i, 2] += a2
    vel[j, 0] -= a0
    vel[j, 1] -= a1
    vel[j, 2] -= a2


@njit(cache=True)
def collide_one(x, m, s0, s1, s2, theta, phi):
    """One-sided collision of row m of x against the partner s."""
    a0, a1, a2 = deflection3(x[m, 0] - s0, x[m, 1] - s1, x[m, 2] - s2, theta, phi)
    x[m, 0] += a0
    x[m, 1] += a1
    x[m, 2] += a2


@njit(cache=True)
def kac_block(vel, ii, jj, zz, pp, nu, K):
    """Apply a time-ordered block of events to the cutoff-K system."""
    n_applied = 0
    for e in range(ii.shape[0]):
        z = zz[e]
        if z > K:
            continue
        collide_pair(vel, ii[e], jj[e], g_of_z(z, nu), pp[e])
        n_applied += 1
    return n_applied


@njit(cache=True)
def ladder_block(vels, cutoffs, ii, jj, zz, pp, nu):
    """Systems at increasing cutoffs driven by one stream.

    vels[-1] is the reference (largest cutoff) and uses the raw angle;
    every other level re-couples its angle to the reference pair.
    """
    top = vels.shape[0] - 1
    for e in range(ii.shape[0]):
        z = zz[e]
        i = ii[e]
        j = jj[e]
        th = g_of_z(z, nu)
        phi = pp[e]
        r0 = vels[top, i, 0] - vels[top, j, 0]
        r1 = vels[top, i, 1] - vels[top, j, 1]
        r2 = vels[top, i, 2] - vels[top, j, 2]
        for lvl in range(top):
            if z > cutoffs[lvl]:
                continue
            w = vels[lvl]
            q0 = w[i, 0] - w[j, 0]
            q1 = w[i, 1] - w[j, 1]
            q2 = w[i, 2] - w[j, 2]
            ang = varphi3(r0, r1, r2, q0, q1, q2, phi)
            if ang < 0.0:
                # reference pair coincides: its collision is a no-op, the
                # re-coupled angle only needs to stay uniform
                ang = phi
            collide_pair(w, i, j, th, ang)
        if z <= cutoffs[top]:
            collide_pair(vels[top], i, j, th, phi)


@njit(cache=True)
def nonlinear_event(V, U, i, j, z, phi, nu, K, L, pi0, pi1, pi2, pj0, pj1, pj2):
    """One atom of the coupled (V, U) dynamics.

    (pi*) is the reference partner of U[i] (matched to U[j]) and (pj*) the
    partner of U[j] (matched to U[i]).  Returns the two U-side angles, -1.0
    meaning the U particle did not jump.
    """
    th = g_of_z(z, nu)
    ang_i = -1.0
    ang_j = -1.0
    if z <= L:
        vd0 = V[i, 0] - V[j, 0]
        vd1 = V[i, 1] - V[j, 1]
        vd2 = V[i, 2] - V[j, 2]
        ang_i = varphi3(vd0, vd1, vd2, U[i, 0] - pi0, U[i, 1] - pi1, U[i, 2] - pi2, phi)
        ang_j = varphi3(-vd0, -vd1, -vd2, U[j, 0] - pj0, U[j, 1] - pj1, U[j, 2] - pj2, phi)
        if ang_i < 0.0:
            ang_i = phi
        if ang_j < 0.0:
            ang_j = phi
        collide_one(U, i, pi0, pi1, pi2, th, ang_i)
        collide_one(U, j, pj0, pj1, pj2, th, ang_j)
    if z <= K:
        collide_pair(V, i, j, th, phi)
    return ang_i, ang_j


@njit(cache=True)
def _tilde_jump(Ut, U, m, row, p0, p1, p2, th, ang):
    # angle re-coupled between the circles of U[m] and Ut[row] around p
    tang = varphi3(U[m, 0] - p0, U[m, 1] - p1, U[m, 2] - p2,
                   Ut[row, 0] - p0, Ut[row, 1] - p1, Ut[row, 2] - p2, ang)
    if tang < 0.0:
        tang = ang
    collide_one(Ut, row, p0, p1, p2, th, tang)


@njit(cache=True)
def coupled_block(V, U, Ut, ks, ref, assign, ii, jj, zz, pp, src, nu, K, L):
    """Coupled (V, U) dynamics plus decoupled copies over a block of atoms.

    Ut[c, m] is the decoupled copy of U[m] for the c-th tagged-set size
    ks[c] (rows m >= ks[c] are unused).  src[e] = -1 marks an atom of the
    main stream; src[e] = c marks an auxiliary atom feeding only Ut[c].
    The partner of U[m] against U[p] is ref[assign[p]].
    """
    for e in range(ii.shape[0]):
        i = ii[e]
        j = jj[e]
        z = zz[e]
        phi = pp[e]
        c = src[e]
        if c >= 0:
            if z > L:
                continue
            # auxiliary atom: only the copy Ut[c, j] jumps, partner via i
            th = g_of_z(z, nu)
            a = assign[i]
            p0, p1, p2 = ref[a, 0], ref[a, 1], ref[a, 2]
            ang = varphi3(V[j, 0] - V[i, 0], V[j, 1] - V[i, 1], V[j, 2] - V[i, 2],
                          U[j, 0] - p0, U[j, 1] - p1, U[j, 2] - p2, phi)
            if ang < 0.0:
                ang = phi
            _tilde_jump(Ut[c], U, j, j, p0, p1, p2, th, ang)
            continue
        ai = assign[j]
        aj = assign[i]
        pi0, pi1, pi2 = ref[ai, 0], ref[ai, 1], ref[ai, 2]
        pj0, pj1, pj2 = ref[aj, 0], ref[aj, 1], ref[aj, 2]
        if z <= L and ks.shape[0] > 0:
            # tilde jumps use the pre-event U state
            th = g_of_z(z, nu)
            vd0 = V[i, 0] - V[j, 0]
            vd1 = V[i, 1] - V[j, 1]
            vd2 = V[i, 2] - V[j, 2]
            ang_i = varphi3(vd0, vd1, vd2, U[i, 0] - pi0, U[i, 1] - pi1, U[i, 2] - pi2, phi)
            ang_j = varphi3(-vd0, -vd1, -vd2, U[j, 0] - pj0, U[j, 1] - pj1, U[j, 2] - pj2, phi)
            if ang_i < 0.0:
                ang_i = phi
            if ang_j < 0.0:
                ang_j = phi
            for cc in range(ks.shape[0]):
                k = ks[cc]
                if i < k:
                    _tilde_jump(Ut[cc], U, i, i, pi0, pi1, pi2, th, ang_i)
                elif j < k:
                    _tilde_jump(Ut[cc], U, j, j, pj0, pj1, pj2, th, ang_j)
        nonlinear_event(V, U, i, j, z, phi, nu, K, L, pi0, pi1, pi2, pj0, pj1, pj2)


@njit(cache=True)
def moments_p(vel, p):
    n = vel.shape[0]
    acc = 0.0
    for m in range(n):
        r2 = vel[m, 0] ** 2 + vel[m, 1] ** 2 + vel[m, 2] ** 2
        acc += r2 ** (0.5 * p)
    return acc / n
