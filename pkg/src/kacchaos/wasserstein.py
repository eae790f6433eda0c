"""Quadratic Wasserstein metrology on equal-weight point clouds in R^3.

Distances use the normalized metric |x|_k^2 = (1/k) sum |x^i|^2, so
w2_exact returns min over permutations of (1/k) sum |a^i - b^pi(i)|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .rng import generator

DEFAULT_CAP = 4096

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def as_cloud(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1 and a.shape[0] == 3:
        a = a[None]
    if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 1:
        raise ValueError(f"expected a (k, 3) point cloud, got shape {a.shape}")
    return a


def assignment(A, B) -> tuple[np.ndarray, float]:
    """Optimal permutation (B index per A row) and total squared cost."""
    cost = cdist(A, B, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return cols, float(cost[rows, cols].sum())


def _sinkhorn(A, B, reg: float = 1e-2, iters: int = 2000) -> float:
    # log-domain entropic transport, cost normalized by its mean
    cost = cdist(A, B, "sqeuclidean")
    k = cost.shape[0]
    scale = float(cost.mean()) or 1.0
    c = cost / (scale * reg)
    logw = -math.log(k)
    f = np.zeros(k)
    g = np.zeros(k)
    for _ in range(iters):
        f = logw - logsumexp(g[None, :] - c, axis=1)
        g = logw - logsumexp(f[:, None] - c, axis=0)
    plan = np.exp(f[:, None] + g[None, :] - c)
    return float((plan * cost).sum())


def w2_exact(A, B, return_perm: bool = False, cap: int = DEFAULT_CAP,
             approximate: bool = False):
    """Squared W2 between the uniform measures on A and B (same size).

    Solved exactly as a linear assignment problem.  Clouds above ``cap``
    points are refused unless ``approximate`` is set, in which case an
    entropic (Sinkhorn) estimate is returned and no permutation exists.
    """
    A = as_cloud(A)
    B = as_cloud(B)
    if A.shape != B.shape:
        raise ValueError(f"size mismatch: {A.shape[0]} vs {B.shape[0]}")
    k = A.shape[0]
    if k > cap:
        if not approximate:
            raise ValueError(f"k={k} exceeds the exact-solver cap {cap}")
        if return_perm:
            raise ValueError("the approximate solver gives no permutation")
        return _sinkhorn(A, B)
    perm, total = assignment(A, B)
    val = total / k
    return (val, perm) if return_perm else val


def gaussian_sampler(var_per_coord: float = 1.0 / 3.0) -> Sampler:
    sd = math.sqrt(var_per_coord)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(0.0, sd, size=(n, 3))
    return draw


def point_mass_sampler(at=(0.0, 0.0, 0.0)) -> Sampler:
    x = np.asarray(at, dtype=float)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return np.repeat(x[None], n, axis=0)
    return draw


class Estimate(NamedTuple):
    mean: float
    stderr: float
    reps: int
    surrogate_m: int


def surrogate_w2(cloud, sampler: Sampler, rng: np.random.Generator, factor: int = 1,
                 cap: int = DEFAULT_CAP) -> tuple[float, int]:
    """W2^2 between a cloud and an independent m-sample of mu, m = factor * n.

    The cloud is replicated ``factor`` times so both sides have m atoms,
    which leaves its empirical measure unchanged.
    """
    X = as_cloud(cloud)
    n = X.shape[0]
    factor = max(1, min(int(factor), cap // n))
    m = factor * n
    Z = sampler(rng, m)
    return w2_exact(np.tile(X, (factor, 1)), Z, cap=cap), m


def eps_n(sampler: Sampler, n: int, reps: int, seed: int = 0, factor: int = 16,
          cap: int = DEFAULT_CAP) -> Estimate:
    """Monte-Carlo estimate of eps_n(mu) = E W2^2(mu, empirical n-sample).

    mu is represented by an independent m-sample surrogate (m = factor * n,
    reduced to respect ``cap``); the surrogate adds a positive bias of the
    order of eps_m(mu), and m is reported with the result.
    """
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    rng = generator(seed)
    vals = np.empty(reps)
    m = n
    for r in range(reps):
        vals[r], m = surrogate_w2(sampler(rng, n), sampler, rng, factor, cap)
    se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return Estimate(float(vals.mean()), se, reps, m)


def block_decomposition(m: int, n: int) -> tuple[int, int]:
    """(k, l) with m = k n + l and 0 <= l <= n - 1."""
    if not 1 <= n <= m:
        raise ValueError(f"need 1 <= n <= m, got n={n}, m={m}")
    return divmod(m, n)


@dataclass(frozen=True)
class BlockBound:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    k: int
    l: int
    surrogate_m: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * math.hypot(self.lhs_se, self.rhs_se)


def block_bound_check(replicas, mu_sampler: Sampler, n: int, seed: int = 0,
                      law_cost_n: float = 0.0, law_cost_l: float = 0.0,
                      eps_reps: int | None = None, factor: int = 4) -> BlockBound:
    """Both sides of the block bound for E W2^2(X-bar, mu).

    ``replicas`` has shape (R, m, 3), one exchangeable draw of X per row.
    lhs = (1/2) E W2^2(X-bar, mu);
    rhs = (kn/m)(W_n + eps_n) + (l/m)(W_l + eps_l), where W_n, W_l are the
    law-level distances between law^n(X) and mu^{(x)n}.  These are zero for
    iid X; otherwise pass upper bounds (e.g. a coupling cost).
    """
    X = np.asarray(replicas, dtype=float)
    if X.ndim != 3 or X.shape[2] != 3:
        raise ValueError("replicas must have shape (R, m, 3)")
    R, m, _ = X.shape
    k, l = block_decomposition(m, n)
    rng = generator(seed)
    vals = np.empty(R)
    sm = m
    for r in range(R):
        vals[r], sm = surrogate_w2(X[r], mu_sampler, rng, factor)
    lhs = 0.5 * float(vals.mean())
    lhs_se = 0.5 * float(vals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    reps = eps_reps or max(R, 8)
    en = eps_n(mu_sampler, n, reps, seed=seed + 1, factor=factor)
    rhs = k * n / m * (law_cost_n + en.mean)
    rhs_var = (k * n / m * en.stderr) ** 2
    if l > 0:
        el = eps_n(mu_sampler, l, reps, seed=seed + 2, factor=factor)
        rhs += l / m * (law_cost_l + el.mean)
        rhs_var += (l / m * el.stderr) ** 2
    return BlockBound(lhs, lhs_se, rhs, math.sqrt(rhs_var), k, l, sm)


class StandardizedCloud(NamedTuple):
    points: np.ndarray
    M: np.ndarray
    S: float

    @property
    def cost(self) -> float:
        """(1/N) sum |X^i - Y^i|^2, which equals (S - 1)^2 + |M|^2."""
        return (self.S - 1.0) ** 2 + float(self.M @ self.M)


def sphere_substitute(N: int) -> np.ndarray:
    """Fixed cloud with mean 0 and unit mean energy, built from antipodal pairs.

    Pairs +-e cycle through the coordinate axes; odd N starts with an
    equilateral triple in the (e1, e2) plane.
    """
    if N < 2:
        raise ValueError("the Boltzmann sphere is empty for N < 2")
    pts = []
    if N % 2:
        h = math.sqrt(3.0) / 2.0
        pts += [(1.0, 0.0, 0.0), (-0.5, h, 0.0), (-0.5, -h, 0.0)]
    axis = 0
    while len(pts) < N:
        e = [0.0, 0.0, 0.0]
        e[axis] = 1.0
        pts.append(tuple(e))
        pts.append(tuple(-c for c in e))
        axis = (axis + 1) % 3
    return np.array(pts)


def standardize(X) -> StandardizedCloud:
    """Project a cloud onto the Boltzmann sphere: Y = (X - M) / S."""
    X = as_cloud(X)
    M = X.mean(axis=0)
    C = X - M
    S = math.sqrt(float(np.mean(np.sum(C * C, axis=1))))
    if S > 0.0:
        return StandardizedCloud(C / S, M, S)
    return StandardizedCloud(sphere_substitute(X.shape[0]), M, 0.0)


def sample_boltzmann_sphere(N: int, seed: int = 0) -> np.ndarray:
    if N < 2:
        raise ValueError("need N >= 2")
    rng = generator(seed)
    return standardize(rng.normal(0.0, math.sqrt(1.0 / 3.0), size=(N, 3))).points
