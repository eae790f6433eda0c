"""Replicated, seeded experiments with log-log rate fits.

Every replica draws its randomness from the seed tree keyed by
(master seed, replicate, role, abscissa), so any subset of replicas can be
recomputed in isolation.  Standard errors and slope confidence intervals
come from a replica bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import RunConfig
from .geometry import AngularKernel
from .kac import EventStream, init, run, run_cutoff_ladder
from .moments import MomentTracker, gaussian_moment, povzner_inequality_probe
from .nonlinear import ReferenceFlow, default_refresh, run_coupled, run_decoupled
from .rng import child_generator, child_seed
from .store import MetricsRecord
from .wasserstein import gaussian_sampler

GAUSS = gaussian_sampler()


@dataclass
class RateFit:
    label: str
    x: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    slope: float
    ci: tuple[float, float]
    intercept: float

    def summary(self) -> dict:
        return {"label": self.label, "x": self.x.tolist(), "mean": self.mean.tolist(),
                "stderr": self.stderr.tolist(), "slope": self.slope,
                "ci_low": self.ci[0], "ci_high": self.ci[1]}


def _slope(logx, y):
    return np.polyfit(logx, np.log(y), 1)


def fit_loglog(x, samples: Sequence[np.ndarray], n_boot: int = 1000, seed: int = 0,
               label: str = "", min_points: int = 4) -> RateFit:
    """OLS slope of log(mean) against log(x), with a replica-bootstrap 95% CI."""
    x = np.asarray(x, dtype=float)
    samples = [np.asarray(s, dtype=float) for s in samples]
    if len(x) < min_points:
        raise ValueError(f"a rate fit needs at least {min_points} abscissae")
    if len(samples) != len(x):
        raise ValueError("one sample array per abscissa")
    mean = np.array([s.mean() for s in samples])
    if np.any(mean <= 0):
        raise ValueError("log-log fit needs positive means")
    logx = np.log(x)
    slope, icpt = _slope(logx, mean)
    rng = child_generator(seed, 0, "bootstrap")
    boot_means = np.empty((n_boot, len(x)))
    for a, s in enumerate(samples):
        idx = rng.integers(0, len(s), size=(n_boot, len(s)))
        boot_means[:, a] = s[idx].mean(axis=1)
    ok = np.all(boot_means > 0, axis=1)
    slopes = np.array([_slope(logx, bm)[0] for bm in boot_means[ok]])
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    se = boot_means.std(axis=0, ddof=1)
    return RateFit(label, x, mean, se, float(slope), (float(lo), float(hi)), float(icpt))


def bootstrap_se(s, n_boot: int = 1000, seed: int = 0) -> float:
    s = np.asarray(s, dtype=float)
    if len(s) < 2:
        return math.nan
    rng = child_generator(seed, 1, "bootstrap")
    idx = rng.integers(0, len(s), size=(n_boot, len(s)))
    return float(s[idx].mean(axis=1).std(ddof=1))


@dataclass
class ExperimentResult:
    cfg: RunConfig
    records: list[MetricsRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        return f"{self.cfg.experiment}-{self.cfg.hash}"

    def add(self, metric: str, value: float, t: float, replicate: int = -1,
            stderr: float = math.nan, N: int | None = None, K: float | None = None,
            k: int | None = None, surrogate_m: int | None = None):
        c = self.cfg
        self.records.append(MetricsRecord(
            self.run_id, c.experiment, c.nu, int(N if N is not None else c.N),
            float(K if K is not None else c.K), c.L, k, float(t), int(replicate), metric,
            float(value), float(stderr), c.seed, surrogate_m, c.hash))


def _times(cfg: RunConfig, default) -> tuple[float, ...]:
    return tuple(sorted(set(cfg.observe))) if cfg.observe else tuple(default)


def _w2_gauss(V: np.ndarray, rng, factor: int) -> tuple[float, int]:
    from .wasserstein import surrogate_w2
    return surrogate_w2(V, GAUSS, rng, factor)


def _kac_w2_series(cfg: RunConfig, N: int, r: int, times, kernel) -> tuple[np.ndarray, int]:
    ens = init(cfg.ic, N, child_seed(cfg.seed, r, "init", N))
    stream = EventStream(child_seed(cfg.seed, r, "events", N), N, cfg.K)
    rng = child_generator(cfg.seed, r, "surrogate", N)
    out = []
    m = [N]

    def hook(e):
        val, m[0] = _w2_gauss(e.velocities, rng, cfg.surrogate_factor)
        out.append(val)

    run(ens, cfg.K, max(times), stream, kernel, observe=times, callback=hook)
    return np.array(out), m[0]


def chaos_rate(cfg: RunConfig) -> ExperimentResult:
    """E W2^2(V-bar_t, gamma) over an N sweep, stationary Gaussian data."""
    kernel = AngularKernel(cfg.nu)
    Ns = tuple(int(n) for n in cfg.sweep) or (64, 128, 256, 512, 1024, 2048)
    times = _times(cfg, (cfg.t_end,))
    res = ExperimentResult(cfg)
    samples = {t: [] for t in times}
    for N in Ns:
        rows = []
        for r in range(cfg.replicates):
            series, m = _kac_w2_series(cfg, N, r, times, kernel)
            rows.append(series)
            for t, v in zip(times, series):
                res.add("w2_gamma", v, t, r, N=N, surrogate_m=m)
        rows = np.array(rows)
        for a, t in enumerate(times):
            samples[t].append(rows[:, a])
            res.add("w2_gamma_mean", rows[:, a].mean(), t, -1,
                    bootstrap_se(rows[:, a], cfg.bootstrap, cfg.seed), N=N, surrogate_m=m)
    res.data = {"N": Ns, "times": times, "samples": samples}
    if len(Ns) >= 4:
        fit = fit_loglog(Ns, samples[cfg.t_end if cfg.t_end in samples else times[-1]],
                         cfg.bootstrap, cfg.seed, "N")
        res.fits["N"] = fit
        res.summary["slope"] = fit.summary()
        res.summary["pass_upper_ci_le_-1/3"] = bool(fit.ci[1] <= -1.0 / 3.0)
    return res


def _final_half_slope(times, rows, n_boot, seed):
    t = np.asarray(times)
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    slope = float(np.polyfit(t[half], rows[:, half].mean(axis=0), 1)[0])
    rng = child_generator(seed, 2, "bootstrap")
    R = rows.shape[0]
    bs = []
    for _ in range(n_boot):
        idx = rng.integers(0, R, R)
        bs.append(np.polyfit(t[half], rows[idx][:, half].mean(axis=0), 1)[0])
    lo, hi = np.percentile(bs, [2.5, 97.5])
    return slope, (float(lo), float(hi))


def uniform_in_time(cfg: RunConfig) -> ExperimentResult:
    """E W2^2(V-bar_t, gamma) along a long horizon at fixed N."""
    kernel = AngularKernel(cfg.nu)
    times = _times(cfg, np.linspace(0.0, cfg.t_end, 21))
    res = ExperimentResult(cfg)
    rows = []
    for r in range(cfg.replicates):
        series, m = _kac_w2_series(cfg, cfg.N, r, times, kernel)
        rows.append(series)
        for t, v in zip(times, series):
            res.add("w2_gamma", v, t, r, surrogate_m=m)
    rows = np.array(rows)
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1 else np.full(len(times), math.nan)
    for a, t in enumerate(times):
        res.add("w2_gamma_mean", mean[a], t, -1, se[a])
    res.data = {"times": np.array(times), "rows": rows, "mean": mean, "stderr": se}
    if len(times) >= 6 and len(rows) > 1:
        slope, ci = _final_half_slope(times, rows, cfg.bootstrap, cfg.seed)
        t = np.array(times)
        plateau = float(mean[t >= t[0] + 0.5 * (t[-1] - t[0])].mean())
        res.summary.update({"final_half_slope": slope, "slope_ci": ci,
                            "no_upward_trend": bool(ci[0] <= 0.0),
                            "ci_contains_0": bool(ci[0] <= 0.0 <= ci[1]),
                            "plateau": plateau})
    return res


def decoupling_rate(cfg: RunConfig) -> ExperimentResult:
    """E (1/k) sum_{j<k} |U^j - U~^j|^2 at t_end over a k sweep."""
    kernel = AngularKernel(cfg.nu)
    ks = tuple(int(k) for k in cfg.sweep) or (1, 10, 20, 50, 100)
    N = cfg.N
    refresh = cfg.refresh or default_refresh(N)
    res = ExperimentResult(cfg)
    vals = {k: [] for k in ks}
    for r in range(cfg.replicates):
        V0 = init(cfg.ic, N, child_seed(cfg.seed, r, "init"))
        flow = ReferenceFlow(cfg.reference, child_seed(cfg.seed, r, "reference"), cfg.L,
                             M=cfg.M or N, kernel=kernel)
        out = run_decoupled(V0, V0, cfg.K, cfg.L, ks, cfg.t_end, flow,
                            EventStream(child_seed(cfg.seed, r, "events"), N, cfg.K),
                            child_seed(cfg.seed, r, "aux_events"), refresh, (cfg.t_end,), kernel)
        for k in ks:
            d = out.distance[k][cfg.t_end]
            vals[k].append(d)
            res.add("decoupling", d, cfg.t_end, r, k=k)
    for k in ks:
        a = np.array(vals[k])
        res.add("decoupling_mean", a.mean(), cfg.t_end, -1, bootstrap_se(a, cfg.bootstrap, cfg.seed), k=k)
    res.data = {"k": ks, "values": {k: np.array(v) for k, v in vals.items()}}
    pos = [k for k in ks if k >= 2]
    if len(pos) >= 4:
        fit = fit_loglog(pos, [res.data["values"][k] for k in pos], cfg.bootstrap, cfg.seed, "k")
        res.fits["k"] = fit
        res.summary["slope"] = fit.summary()
    if 1 in vals:
        res.summary["k1_max"] = float(np.max(vals[1]))
    if 10 in vals and 100 in vals:
        ratio = float(np.mean(vals[100]) / np.mean(vals[10]))
        res.summary["ratio_100_10"] = ratio
    return res


def cutoff_bias(cfg: RunConfig) -> ExperimentResult:
    """E (1/N) sum |V^K - V^Kref|^2 over a K sweep, coupled through one stream."""
    kernel = AngularKernel(cfg.nu)
    Ks = tuple(float(k) for k in cfg.sweep) or (2.0, 4.0, 8.0, 16.0)
    times = _times(cfg, (0.5, 1.0, 2.0))
    ladder = list(Ks) + [cfg.kref]
    N = cfg.N
    res = ExperimentResult(cfg)
    rows = []  # replica x time x level
    for r in range(cfg.replicates):
        ens = init(cfg.ic, N, child_seed(cfg.seed, r, "init"))
        stream = EventStream(child_seed(cfg.seed, r, "events"), N, cfg.kref)
        _, d = run_cutoff_ladder(ens, ladder, max(times), stream, kernel, observe=times)
        rows.append([d[t][:-1] for t in times])
        for a, t in enumerate(times):
            for b, K in enumerate(Ks):
                res.add("cutoff_distance", d[t][b], t, r, K=K)
    rows = np.array(rows)
    for a, t in enumerate(times):
        for b, K in enumerate(Ks):
            res.add("cutoff_distance_mean", rows[:, a, b].mean(), t, -1,
                    bootstrap_se(rows[:, a, b], cfg.bootstrap, cfg.seed), K=K)
    res.data = {"K": Ks, "times": times, "rows": rows}
    t_fit = cfg.t_end if cfg.t_end in times else times[len(times) // 2]
    a = times.index(t_fit)
    if len(Ks) >= 4:
        fit = fit_loglog(Ks, [rows[:, a, b] for b in range(len(Ks))], cfg.bootstrap, cfg.seed, "K")
        fit1 = fit_loglog(np.array(Ks) + 1.0, [rows[:, a, b] for b in range(len(Ks))],
                          cfg.bootstrap, cfg.seed, "1+K")
        res.fits.update({"K": fit, "1+K": fit1})
        res.summary.update({"slope_K": fit.summary(), "slope_1pK": fit1.summary(),
                            "target": 1.0 - 2.0 / cfg.nu})
    if len(times) >= 2:
        m = rows.mean(axis=0)  # time x level
        per_t = m / np.array(times)[:, None]
        spread = per_t.max(axis=0) / per_t.min(axis=0)
        res.summary["linear_in_t_spread"] = spread.tolist()
    return res


def coupling_distance(cfg: RunConfig) -> ExperimentResult:
    """(1/N) sum |V^i - U^i|^2 and W2^2(U-bar, gamma) over time, optionally over an N sweep."""
    kernel = AngularKernel(cfg.nu)
    Ns = tuple(int(n) for n in cfg.sweep) or (cfg.N,)
    times = _times(cfg, np.linspace(0.0, cfg.t_end, 6))
    res = ExperimentResult(cfg)
    out = {}
    for N in Ns:
        dist = []
        w2u = []
        for r in range(cfg.replicates):
            V0 = init(cfg.ic, N, child_seed(cfg.seed, r, "init", N))
            flow = ReferenceFlow(cfg.reference, child_seed(cfg.seed, r, "reference", N), cfg.L,
                                 M=cfg.M or N, kernel=kernel)
            rng = child_generator(cfg.seed, r, "surrogate", N)
            wrow = []

            def hook(st, t):
                wrow.append(_w2_gauss(st.U.velocities, rng, cfg.surrogate_factor)[0])

            cr = run_coupled(V0, V0, cfg.K, cfg.L, max(times), flow,
                             EventStream(child_seed(cfg.seed, r, "events", N), N, cfg.K),
                             cfg.refresh or default_refresh(N), times, kernel, hook)
            dist.append([cr.distance[t] for t in times])
            w2u.append(wrow)
            for a, t in enumerate(times):
                res.add("coupling_distance", dist[-1][a], t, r, N=N)
                res.add("w2_U_gamma", wrow[a], t, r, N=N, surrogate_m=N * cfg.surrogate_factor)
        out[N] = {"distance": np.array(dist), "w2_U": np.array(w2u)}
        for a, t in enumerate(times):
            col = out[N]["distance"][:, a]
            res.add("coupling_distance_mean", col.mean(), t, -1,
                    bootstrap_se(col, cfg.bootstrap, cfg.seed), N=N)
    res.data = {"N": Ns, "times": times, "series": out}
    res.summary["final_mean"] = {int(N): float(out[N]["distance"][:, -1].mean()) for N in Ns}
    res.summary["reference_approximate"] = cfg.reference == "self-consistent"
    return res


def simulate(cfg: RunConfig) -> ExperimentResult:
    """One Kac run with moment tracking; the terminal state is kept in ``data``."""
    kernel = AngularKernel(cfg.nu)
    times = _times(cfg, (0.0, cfg.t_end))
    res = ExperimentResult(cfg)
    ps = sorted({2, cfg.p})
    finals = []
    for r in range(cfg.replicates):
        ens = init(cfg.ic, cfg.N, child_seed(cfg.seed, r, "init"))
        tracker = MomentTracker(ps)
        stream = EventStream(child_seed(cfg.seed, r, "events"), cfg.N, cfg.K)
        run(ens, cfg.K, cfg.t_end, stream, kernel, observe=times, callback=tracker)
        for a, t in enumerate(tracker.times):
            for p in ps:
                res.add(f"m{p}", tracker.series[p][a], t, r)
        dm, de = ens.drift()
        res.add("momentum_drift", dm, cfg.t_end, r)
        res.add("energy_drift", de, cfg.t_end, r)
        res.add("events", ens.n_events, cfg.t_end, r)
        finals.append(ens)
    res.data = {"final": finals}
    res.summary["gaussian_m4"] = gaussian_moment(4)
    return res


def povzner(cfg: RunConfig) -> ExperimentResult:
    """Povzner constants and the empirical A~_p over random probe pairs."""
    kernel = AngularKernel(cfg.nu)
    rng = child_generator(cfg.seed, 0, "misc")
    pairs = rng.normal(size=(cfg.replicates, 2, 3)) * rng.exponential(1.0, size=(cfg.replicates, 2, 1))
    rep = povzner_inequality_probe(pairs, cfg.p, kernel=kernel)
    res = ExperimentResult(cfg)
    res.add("A_p", rep.A_p, 0.0)
    res.add("I", rep.I, 0.0)
    res.add("A_tilde_empirical", rep.A_tilde, 0.0)
    res.summary.update({"p": cfg.p, "A_p": rep.A_p, "I": rep.I, "A_tilde": rep.A_tilde,
                        "pairs": cfg.replicates, "holds": rep.holds})
    return res


RUNNERS = {
    "simulate": simulate,
    "chaos-rate": chaos_rate,
    "uniform-time": uniform_in_time,
    "decoupling": decoupling_rate,
    "cutoff-bias": cutoff_bias,
    "coupling": coupling_distance,
    "povzner": povzner,
}
