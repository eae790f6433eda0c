"""Run configuration in a flat ``key = value`` text format.

Lines starting with ``#`` and blank lines are ignored.  Tuples are written
comma-separated.  ``dump`` emits every key in declaration order with a
canonical number format, so dump(load(dump(cfg))) == dump(cfg).
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .nonlinear import FLOW_MODES

REQUIRED = ("experiment", "seed")
EXPERIMENTS = ("simulate", "chaos-rate", "uniform-time", "decoupling", "cutoff-bias",
               "coupling", "povzner", "w2", "selftest")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int
    nu: float = 0.5
    N: int = 128
    K: float = 20.0
    L: float = 0.0  # 0 means L = K
    t_end: float = 1.0
    observe: tuple[float, ...] = ()
    replicates: int = 1
    reference: str = "gaussian"
    refresh: int = 0  # 0: one event for N <= 256, N events above
    M: int = 0  # self-consistent reference size, 0 means N
    ic: str = "gaussian"
    sweep: tuple[float, ...] = ()
    kref: float = 64.0
    surrogate_factor: int = 1
    p: int = 4
    bootstrap: int = 1000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 0.0 < self.nu < 1.0:
            raise ConfigError(f"nu must lie in (0, 1), got {self.nu}")
        if self.N < 2:
            raise ConfigError("N must be at least 2")
        if self.L == 0:
            object.__setattr__(self, "L", self.K)
        if not (self.K > 0 and self.L > 0 and self.L <= self.K):
            raise ConfigError(f"need 0 < L <= K, got L={self.L}, K={self.K}")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be nonnegative")
        if self.replicates < 1 or self.bootstrap < 1 or self.surrogate_factor < 1:
            raise ConfigError("replicates, bootstrap and surrogate_factor must be positive")
        if self.refresh < 0 or self.M < 0:
            raise ConfigError("refresh and M must be nonnegative")
        if self.reference not in FLOW_MODES:
            raise ConfigError(f"reference must be one of {FLOW_MODES}")
        if any(t < 0 for t in self.observe):
            raise ConfigError("observation times must be nonnegative")

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    @property
    def hash(self) -> str:
        return hashlib.sha256(dump(self).encode()).hexdigest()[:16]


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _fmt(name: str, value) -> str:
    typ = _TYPES[name]
    if typ == "float":
        return _fmt_float(value)
    if typ == "int":
        return str(int(value))
    if typ.startswith("tuple"):
        return ",".join(_fmt_float(v) for v in value)
    return str(value)


def parse_value(name: str, raw: str):
    if name not in _TYPES:
        raise ConfigError(f"unknown key {name!r}")
    typ = _TYPES[name]
    raw = raw.strip()
    try:
        if typ == "float":
            return float(raw)
        if typ == "int":
            return int(raw)
        if typ.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: expected {typ}, got {raw!r}") from exc
    return raw


def loads(text: str, overrides: dict | None = None) -> RunConfig:
    vals = {}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"line {no}: expected key = value")
        key, raw = s.split("=", 1)
        key = key.strip()
        if key in vals:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        vals[key] = parse_value(key, raw)
    vals.update(overrides or {})
    missing = [k for k in REQUIRED if k not in vals]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    try:
        return RunConfig(**vals)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        val = _fmt(f.name, getattr(cfg, f.name))
        lines.append(f"{f.name} = {val}\n" if val else f"{f.name} =\n")
    return "".join(lines)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text, overrides)


def save_config(cfg: RunConfig, path):
    from .store import atomic_write_text
    atomic_write_text(path, dump(cfg))
