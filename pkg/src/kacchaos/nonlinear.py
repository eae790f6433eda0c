"""Cutoff nonlinear processes coupled to the Kac system.

Each particle U^i follows the cutoff-L nonlinear dynamics: at every atom
that moves V^i it also jumps (when z <= L), one-sidedly, against a partner
drawn from the reference law f_t^L.  The partner is the reference atom that
an optimal matching assigns to U^j, where j is the V-partner of i, and the
jump angle is re-coupled to the V jump through varphi.

Matching policy: one optimal N-to-N assignment between U and N reference
atoms, recomputed every R atoms.  Restricted to U^{-i} it is an optimal
assignment onto the N-1 atoms other than the one matched to U^i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as _k
from .geometry import AngularKernel
from .kac import Ensemble, EventBlock, EventStream, CollisionEvent, concat_blocks, run as kac_run
from .rng import child_seed, generator
from .wasserstein import as_cloud, assignment

FLOW_MODES = ("gaussian", "self-consistent", "mirror")


class ReferenceFlow:
    """Source of reference atoms for f_t^L.

    ``gaussian``: fresh iid draws from the centered Gaussian with variance 1/3
    per coordinate (stationary, hence exact at every t).
    ``self-consistent``: an independent M-particle cutoff-L Kac system,
    subsampled without replacement; approximates f_t^L.
    ``mirror``: the current V ensemble itself (degenerate self-coupling).
    """

    def __init__(self, mode: str = "gaussian", seed: int = 0, L: float = 20.0,
                 M: int | None = None, initial=None, kernel: AngularKernel = AngularKernel()):
        if mode not in FLOW_MODES:
            raise ValueError(f"unknown reference mode {mode!r}; expected one of {FLOW_MODES}")
        self.mode = mode
        self.t = 0.0
        self._rng = generator(child_seed(seed, 0, "reference"))
        self.kernel = kernel
        self.ensemble: Ensemble | None = None
        if mode == "self-consistent":
            if initial is None:
                if M is None:
                    raise ValueError("self-consistent mode needs M or an initial ensemble")
                initial = self._rng.normal(0.0, math.sqrt(1.0 / 3.0), size=(M, 3))
            self.ensemble = Ensemble(np.array(initial, dtype=float))
            self.L = float(L)
            self._stream = EventStream(child_seed(seed, 0, "flow"), self.ensemble.N, self.L)

    @property
    def approximate(self) -> bool:
        return self.mode == "self-consistent"

    def advance(self, t: float):
        if self.ensemble is not None and t > self.ensemble.t:
            kac_run(self.ensemble, self.L, t, self._stream, self.kernel)
        self.t = max(self.t, t)

    def reference(self, n: int, t: float, V: np.ndarray | None = None) -> np.ndarray:
        """n reference atoms at time t."""
        if self.mode == "gaussian":
            self.t = t
            return self._rng.normal(0.0, math.sqrt(1.0 / 3.0), size=(n, 3))
        if self.mode == "mirror":
            if V is None or V.shape[0] != n:
                raise ValueError("mirror mode needs the current V ensemble of matching size")
            self.t = t
            return V.copy()
        self.advance(t)
        M = self.ensemble.N
        if n > M:
            raise ValueError(f"reference system has M={M} < {n} atoms")
        if n == M:
            return self.ensemble.velocities.copy()
        idx = self._rng.choice(M, size=n, replace=False)
        return self.ensemble.velocities[idx].copy()


def default_refresh(N: int) -> int:
    return 1 if N <= 256 else N


class MatchingTable:
    """Optimal matching of the U ensemble to reference atoms.

    ``assign[m]`` is the reference row matched to U^m (-1 for an excluded
    index).  The table goes stale after ``refresh`` main atoms.
    """

    def __init__(self, refresh: int = 1):
        if refresh < 1:
            raise ValueError("refresh must be a positive event count")
        self.refresh = int(refresh)
        self.assign: np.ndarray | None = None
        self.ref: np.ndarray | None = None
        self.stale = 0
        self.cost = math.nan
        self.n_refresh = 0

    def update(self, U, ref, exclude: int | None = None):
        U = as_cloud(U)
        ref = as_cloud(ref)
        N = U.shape[0]
        if exclude is None:
            if ref.shape[0] != N:
                raise ValueError("full matching needs as many atoms as particles")
            perm, total = assignment(U, ref)
            self.assign = perm.astype(np.int64)
            self.cost = total / N
        else:
            if ref.shape[0] != N - 1:
                raise ValueError("matching U^{-i} needs N - 1 atoms")
            keep = np.delete(np.arange(N), exclude)
            perm, total = assignment(U[keep], ref)
            self.assign = np.full(N, -1, dtype=np.int64)
            self.assign[keep] = perm
            self.cost = total / (N - 1)
        self.ref = np.ascontiguousarray(ref)
        self.stale = 0
        self.n_refresh += 1

    def needs_refresh(self) -> bool:
        return self.assign is None or self.stale >= self.refresh

    def partner(self, p: int) -> np.ndarray:
        a = self.assign[p]
        if a < 0:
            raise IndexError(f"U^{p} is excluded from this matching")
        return self.ref[a]

    def restricted_cost(self, U, i: int) -> float:
        """Cost of the matching restricted to U^{-i}, normalized by N - 1."""
        U = as_cloud(U)
        keep = [m for m in range(U.shape[0]) if m != i and self.assign[m] >= 0]
        d = U[keep] - self.ref[self.assign[keep]]
        return float(np.sum(d * d)) / len(keep)


def optimal_matching(X, ref) -> tuple[np.ndarray, float]:
    """Assignment of X onto ref (same size) and its normalized cost."""
    X = as_cloud(X)
    perm, total = assignment(X, as_cloud(ref))
    return perm, total / X.shape[0]


@dataclass
class CoupledState:
    V: Ensemble
    U: Ensemble
    K: float
    L: float
    t: float = 0.0
    n_events: int = field(default=0)

    def __post_init__(self):
        if self.V.N != self.U.N:
            raise ValueError("V and U must have the same size")
        if not self.L <= self.K:
            raise ValueError(f"need L <= K, got L={self.L}, K={self.K}")

    @property
    def distance(self) -> float:
        d = self.V.velocities - self.U.velocities
        return float(np.mean(np.sum(d * d, axis=1)))


def _refresh(table: MatchingTable, st: CoupledState, flow: ReferenceFlow, t: float):
    N = st.U.N
    table.update(st.U.velocities, flow.reference(N, t, st.V.velocities))


def pi_sample(U: Ensemble, i: int, j: int, flow: ReferenceFlow, table: MatchingTable,
              t: float = 0.0, V: Ensemble | None = None) -> np.ndarray:
    """Reference partner of U^i against U^j: the atom matched to U^j."""
    if i == j:
        raise ValueError("pi_sample needs j != i")
    if table.needs_refresh():
        Vv = None if V is None else V.velocities
        table.update(U.velocities, flow.reference(U.N, t, Vv))
    return table.partner(j)


def coupled_step(st: CoupledState, ev: CollisionEvent, flow: ReferenceFlow,
                 table: MatchingTable) -> CoupledState:
    """Apply one atom to (V, U) in place."""
    if ev.z > st.K:
        raise ValueError("atom lies above the V cutoff")
    if ev.t < st.t:
        raise ValueError("events must not go back in time")
    if table.needs_refresh():
        _refresh(table, st, flow, ev.t)
    pi = table.partner(ev.j)
    pj = table.partner(ev.i)
    _k.nonlinear_event(st.V.velocities, st.U.velocities, ev.i, ev.j, ev.z, ev.phi, ev.nu,
                       st.K, st.L, pi[0], pi[1], pi[2], pj[0], pj[1], pj[2])
    table.stale += 1
    st.t = st.V.t = st.U.t = ev.t
    st.n_events += 1
    return st


def _merge(main: EventBlock, aux: Sequence[tuple[int, EventBlock]]):
    if not aux:
        return main, np.full(len(main), -1, dtype=np.int64)
    blocks = [main] + [b for _, b in aux]
    src = np.concatenate([np.full(len(main), -1, dtype=np.int64)]
                         + [np.full(len(b), c, dtype=np.int64) for c, b in aux])
    block = concat_blocks(blocks)
    order = np.argsort(block.t, kind="stable")
    return EventBlock(*(a[order] for a in block)), src[order]


def _drive(st: CoupledState, flow: ReferenceFlow, table: MatchingTable, stream: EventStream,
           t_end: float, observe: Sequence[float], kernel: AngularKernel,
           Ut: np.ndarray, ks: np.ndarray, aux: Sequence[tuple[int, EventStream]], on_observe):
    if stream.N != st.V.N:
        raise ValueError("stream and ensembles disagree on N")
    if stream.K < st.K:
        raise ValueError("stream cutoff is below K")
    if t_end < st.t:
        raise ValueError("t_end is before the current time")
    obs = {float(s) for s in observe if st.t <= s <= t_end}
    for stop in sorted(obs | {float(t_end)}):
        block, src = _merge(stream.take_until(stop), [(c, a.take_until(stop)) for c, a in aux])
        main_cum = np.cumsum(src < 0)
        n = len(block)
        pos = 0
        while pos < n:
            if table.needs_refresh():
                _refresh(table, st, flow, float(block.t[pos]))
            base = int(main_cum[pos - 1]) if pos else 0
            budget = table.refresh - table.stale
            end = min(int(np.searchsorted(main_cum, base + budget, side="left")) + 1, n)
            sl = slice(pos, end)
            _k.coupled_block(st.V.velocities, st.U.velocities, Ut, ks, table.ref, table.assign,
                             block.i[sl], block.j[sl], block.z[sl], block.phi[sl], src[sl],
                             kernel.nu, st.K, st.L)
            done = int(main_cum[end - 1]) - base
            table.stale += done
            st.n_events += done
            pos = end
        st.t = st.V.t = st.U.t = stop
        if on_observe is not None and (stop in obs or stop == t_end):
            on_observe(stop)


@dataclass
class CoupledRun:
    state: CoupledState
    table: MatchingTable
    distance: dict[float, float]


def run_coupled(V0: Ensemble, U0: Ensemble, K: float, L: float, t_end: float,
                flow: ReferenceFlow, stream: EventStream, refresh: int | None = None,
                observe: Sequence[float] = (), kernel: AngularKernel = AngularKernel(),
                on_observe=None) -> CoupledRun:
    """Integrate (V, U^L) over one shared stream.

    Records (1/N) sum |V^i - U^i|^2 at each observation time and at t_end;
    the inputs are copied.  ``on_observe(state, t)`` may collect further diagnostics.
    """
    if K < L:
        raise ValueError(f"need K >= L, got K={K}, L={L}")
    st = CoupledState(V0.copy(), U0.copy(), K, L, t=V0.t)
    table = MatchingTable(refresh or default_refresh(V0.N))
    dist: dict[float, float] = {}

    def hook(t):
        dist[t] = st.distance
        if on_observe is not None:
            on_observe(st, t)

    empty = np.zeros((0, V0.N, 3))
    _drive(st, flow, table, stream, t_end, observe, kernel, empty,
           np.zeros(0, dtype=np.int64), (), hook)
    return CoupledRun(st, table, dist)


@dataclass
class DecoupledRun:
    state: CoupledState
    tilde: np.ndarray
    ks: tuple[int, ...]
    distance: dict[int, dict[float, float]]


def aux_rate(N: int, k: int, L: float) -> float:
    """Total rate of tagged ordered pairs dropped from the tilde copies."""
    return L * k * (k - 1) / (2.0 * (N - 1))


def run_decoupled(V0: Ensemble, U0: Ensemble, K: float, L: float, ks: Sequence[int],
                  t_end: float, flow: ReferenceFlow, stream: EventStream, aux_seed: int,
                  refresh: int | None = None, observe: Sequence[float] = (),
                  kernel: AngularKernel = AngularKernel()) -> DecoupledRun:
    """U^L together with decoupled copies of its first k particles, for each k.

    The copy of U^m (m < k) takes every atom where m is the first index, and
    every atom where m is the second index and the first is untagged; those
    jumps reuse the U partner and re-couple their angle through varphi.
    Atoms with both indices tagged are replaced, for the second index, by an
    independent auxiliary stream of the same per-pair intensity.  Returns
    E-ready samples (1/k) sum_{m<k} |U^m - U~^m|^2 at observation times.
    """
    N = V0.N
    ks = tuple(int(k) for k in ks)
    for k in ks:
        if not 1 <= k <= N:
            raise ValueError(f"tagged count k={k} out of range 1..{N}")
    if K < L:
        raise ValueError(f"need K >= L, got K={K}, L={L}")
    st = CoupledState(V0.copy(), U0.copy(), K, L, t=V0.t)
    table = MatchingTable(refresh or default_refresh(N))
    Ut = np.repeat(st.U.velocities[None], len(ks), axis=0)
    karr = np.array(ks, dtype=np.int64)
    aux = []
    for c, k in enumerate(ks):
        if k >= 2:
            aux.append((c, EventStream(child_seed(aux_seed, c, "aux_events"), k, L,
                                       rate=aux_rate(N, k, L), t0=st.t)))
    dist: dict[int, dict[float, float]] = {k: {} for k in ks}

    def hook(t):
        for c, k in enumerate(ks):
            d = st.U.velocities[:k] - Ut[c, :k]
            dist[k][t] = float(np.mean(np.sum(d * d, axis=1)))

    _drive(st, flow, table, stream, t_end, observe, kernel, Ut, karr, aux, hook)
    return DecoupledRun(st, Ut, ks, dist)
