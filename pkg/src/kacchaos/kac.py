"""Event-driven Kac N-particle system with Grad cutoff K.

Atoms (t, z, phi, i, j) arrive at total rate N K / 2 with z uniform on
[0, K], phi uniform on [0, 2pi) and (i, j) uniform over ordered pairs of
distinct indices.  Each atom collides particles i and j with deviation
angle G(z).  Momentum and energy are conserved collision by collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _kernels as _k
from .geometry import AngularKernel
from .rng import generator

TWO_PI = 2.0 * math.pi


@dataclass
class Ensemble:
    velocities: np.ndarray
    t: float = 0.0
    momentum0: np.ndarray = field(init=False)
    energy0: float = field(init=False)
    n_events: int = field(default=0, init=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.velocities, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"velocities must have shape (N, 3), got {v.shape}")
        if v.shape[0] < 2:
            raise ValueError("an ensemble needs N >= 2 particles")
        self.velocities = v
        self.momentum0 = v.mean(axis=0)
        self.energy0 = float(np.mean(np.sum(v * v, axis=1)))

    @property
    def N(self) -> int:
        return self.velocities.shape[0]

    def momentum(self) -> np.ndarray:
        return self.velocities.mean(axis=0)

    def energy(self) -> float:
        return float(np.mean(np.sum(self.velocities ** 2, axis=1)))

    def drift(self) -> tuple[float, float]:
        """Relative (momentum, energy) drift against the t=0 ledger."""
        scale = max(self.energy0, np.finfo(float).tiny)
        dm = float(np.linalg.norm(self.momentum() - self.momentum0)) / math.sqrt(scale)
        de = abs(self.energy() - self.energy0) / scale
        return dm, de

    def copy(self) -> "Ensemble":
        out = Ensemble(self.velocities.copy(), self.t)
        out.momentum0 = self.momentum0.copy()
        out.energy0 = self.energy0
        out.n_events = self.n_events
        return out


@dataclass(frozen=True)
class CollisionEvent:
    t: float
    i: int
    j: int
    z: float
    phi: float
    nu: float = 0.5

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a collision needs two distinct indices")

    @property
    def theta(self) -> float:
        return _k.g_of_z(self.z, self.nu)


class EventBlock(NamedTuple):
    t: np.ndarray
    i: np.ndarray
    j: np.ndarray
    z: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return self.t.shape[0]


def _empty_block() -> EventBlock:
    return EventBlock(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64),
                      np.empty(0), np.empty(0))


def concat_blocks(blocks: Sequence[EventBlock]) -> EventBlock:
    if not blocks:
        return _empty_block()
    return EventBlock(*(np.concatenate(parts) for parts in zip(*blocks)))


class EventStream:
    """Replayable Poisson stream of collision atoms with z in [0, K].

    Atoms are drawn in fixed-size chunks from a Philox generator, so the
    realized stream depends only on (seed, N, K, rate, chunk), never on how
    the caller slices time.
    """

    def __init__(self, seed: int, N: int, K: float, chunk: int | None = None, t0: float = 0.0,
                 rate: float | None = None):
        if N < 2:
            raise ValueError("need N >= 2")
        if not (0 < K < math.inf):
            raise ValueError("the stream needs a finite positive cutoff")
        self.seed = int(seed)
        self.N = int(N)
        self.K = float(K)
        # a thinned or auxiliary stream may run at another total rate
        self.rate = 0.5 * N * K if rate is None else float(rate)
        if not self.rate > 0:
            raise ValueError("the stream rate must be positive")
        # about one time unit of atoms per draw unless told otherwise
        self.chunk = int(chunk) if chunk else int(min(1 << 14, max(64, math.ceil(self.rate))))
        self._gen = generator(seed)
        self._t_last = float(t0)
        self._buf = _empty_block()
        self._pos = 0

    def _draw(self) -> EventBlock:
        g = self._gen
        n = self.chunk
        t = self._t_last + np.cumsum(g.exponential(1.0 / self.rate, n))
        i = g.integers(0, self.N, n)
        j = g.integers(0, self.N - 1, n)
        j += j >= i
        z = g.uniform(0.0, self.K, n)
        phi = g.uniform(0.0, TWO_PI, n)
        self._t_last = float(t[-1])
        return EventBlock(t, i, j, z, phi)

    def _refill(self, t_end: float = -math.inf):
        # draw every chunk needed to pass t_end, then concatenate once
        parts = [EventBlock(*(a[self._pos:] for a in self._buf))]
        parts.append(self._draw())
        while self._t_last <= t_end:
            parts.append(self._draw())
        self._buf = concat_blocks(parts)
        self._pos = 0

    def take_until(self, t_end: float) -> EventBlock:
        """All pending atoms with time <= t_end, in time order."""
        if self._t_last <= t_end:
            self._refill(t_end)
        stop = int(np.searchsorted(self._buf.t, t_end, side="right"))
        out = EventBlock(*(a[self._pos:stop] for a in self._buf))
        self._pos = stop
        return out

    def peek_time(self) -> float:
        if self._pos >= len(self._buf):
            self._refill()
        return float(self._buf.t[self._pos])


def init(ic, N: int | None = None, seed: int = 0) -> Ensemble:
    """Initial ensemble from a descriptor.

    ``ic`` is an explicit (N, 3) array, or one of ``"gaussian"`` (iid with
    per-coordinate variance 1/3), ``"sphere"`` (standardized Gaussian, on
    the Boltzmann sphere), ``"two-point"`` (half the particles at +e1, half
    at -e1) or ``"student-t:DF"`` (iid Student-t coordinates standardized to
    the sphere; finite fourth moment needs DF > 4).
    """
    if not isinstance(ic, str):
        return Ensemble(np.array(ic, dtype=float))
    if N is None or N < 2:
        raise ValueError("need N >= 2")
    g = generator(seed)
    name, _, arg = ic.partition(":")
    if name == "gaussian":
        v = g.normal(0.0, math.sqrt(1.0 / 3.0), size=(N, 3))
    elif name == "sphere":
        from .wasserstein import standardize
        v = standardize(g.normal(0.0, math.sqrt(1.0 / 3.0), size=(N, 3))).points
    elif name == "two-point":
        v = np.zeros((N, 3))
        v[: N // 2, 0] = 1.0
        v[N // 2:, 0] = -1.0
        if N % 2:
            from .wasserstein import standardize
            v = standardize(v).points
    elif name == "student-t":
        from .wasserstein import standardize
        df = float(arg) if arg else 6.0
        v = standardize(g.standard_t(df, size=(N, 3))).points
    else:
        raise ValueError(f"unknown initial condition {ic!r}")
    return Ensemble(v)


def step(ens: Ensemble, ev: CollisionEvent) -> Ensemble:
    """Apply one collision in place and return the ensemble."""
    if not (0 <= ev.i < ens.N and 0 <= ev.j < ens.N):
        raise IndexError(f"event indices ({ev.i}, {ev.j}) out of range for N={ens.N}")
    if ev.t < ens.t:
        raise ValueError("events must not go back in time")
    _k.collide_pair(ens.velocities, ev.i, ev.j, ev.theta, ev.phi)
    ens.t = ev.t
    ens.n_events += 1
    return ens


def _rescale(ens: Ensemble):
    # restore the ledger after accumulated rounding; off by default
    v = ens.velocities
    m = v.mean(axis=0)
    var = float(np.mean(np.sum((v - m) ** 2, axis=1)))
    target = ens.energy0 - float(ens.momentum0 @ ens.momentum0)
    if var > 0 and target > 0:
        v[:] = (v - m) * math.sqrt(target / var) + ens.momentum0


def run(ens: Ensemble, K: float, t_end: float, stream: EventStream,
        kernel: AngularKernel = AngularKernel(),
        observe: Sequence[float] = (), callback: Callable[[Ensemble], None] | None = None,
        rescale_every: int | None = None) -> Ensemble:
    """Advance ``ens`` in place to ``t_end``.

    ``callback(ens)`` fires at each time in ``observe`` (clipped to
    [ens.t, t_end]).  The stream may carry a larger cutoff than K; atoms
    with z > K are then discarded, which leaves the law unchanged.
    """
    if not math.isfinite(K):
        raise ValueError("the non-cutoff system has infinite rate; use a finite K")
    if stream.N != ens.N:
        raise ValueError("stream and ensemble disagree on N")
    if stream.K < K:
        raise ValueError(f"stream cutoff {stream.K} is below K={K}")
    if t_end < ens.t:
        raise ValueError("t_end is before the ensemble time")
    stops = sorted({float(s) for s in observe if ens.t <= s <= t_end} | {float(t_end)})
    for stop in stops:
        block = stream.take_until(stop)
        if rescale_every:
            for lo in range(0, len(block), rescale_every):
                sl = slice(lo, lo + rescale_every)
                ens.n_events += _k.kac_block(ens.velocities, block.i[sl], block.j[sl],
                                             block.z[sl], block.phi[sl], kernel.nu, K)
                if lo + rescale_every <= len(block):
                    _rescale(ens)
        else:
            ens.n_events += _k.kac_block(ens.velocities, block.i, block.j, block.z,
                                         block.phi, kernel.nu, K)
        ens.t = stop
        if callback is not None and stop in observe:
            callback(ens)
    return ens


def run_cutoff_ladder(ens0: Ensemble, cutoffs: Sequence[float], t_end: float,
                      stream: EventStream, kernel: AngularKernel = AngularKernel(),
                      observe: Sequence[float] = ()) -> tuple[list[Ensemble], dict[float, np.ndarray]]:
    """Copies of ``ens0`` at increasing cutoffs, coupled jump by jump.

    All copies consume the same stream (whose cutoff must equal the largest
    one); the largest-cutoff copy uses the raw angles and every other copy
    re-couples its angle to it through varphi.  Returns the terminal
    ensembles and, for each observation time, the distances
    (1/N) sum_i |V^{K_l,i} - V^{K_max,i}|^2 of every level.
    """
    cut = np.asarray(cutoffs, dtype=float)
    if np.any(np.diff(cut) < 0) or not np.all(np.isfinite(cut)):
        raise ValueError("cutoffs must be finite and ascending")
    if stream.K != cut[-1]:
        raise ValueError("the stream must run at the largest cutoff")
    vels = np.repeat(ens0.velocities[None], len(cut), axis=0)
    dists: dict[float, np.ndarray] = {}
    stops = sorted({float(s) for s in observe if ens0.t <= s <= t_end} | {float(t_end)})
    for stop in stops:
        b = stream.take_until(stop)
        _k.ladder_block(vels, cut, b.i, b.j, b.z, b.phi, kernel.nu)
        if stop in observe or stop == t_end:
            dists[stop] = np.mean(np.sum((vels - vels[-1]) ** 2, axis=2), axis=1)
    out = []
    for lvl in range(len(cut)):
        e = ens0.copy()
        e.velocities = vels[lvl].copy()
        e.t = t_end
        out.append(e)
    return out, dists


def run_coupled_cutoffs(ens0: Ensemble, K1: float, K2: float, t_end: float,
                        stream: EventStream, kernel: AngularKernel = AngularKernel(),
                        observe: Sequence[float] = ()):
    """Two-level ladder: returns (V^{K1}, V^{K2}, {t: distance})."""
    if not K1 <= K2:
        raise ValueError("need K1 <= K2")
    (e1, e2), d = run_cutoff_ladder(ens0, [K1, K2], t_end, stream, kernel, observe)
    return e1, e2, {t: float(v[0]) for t, v in d.items()}
