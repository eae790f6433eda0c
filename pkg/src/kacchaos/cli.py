"""Command-line entry point.

    kacchaos <experiment> [--config FILE] [--out-dir DIR] [--key value ...]
    kacchaos w2 A.csv B.csv [--perm]
    kacchaos selftest [--seed S]

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump, load_config, loads, parse_value
from .store import output_dir, atomic_write_text, load_snapshot, metrics_csv, snapshot_csv

EXPERIMENT_COMMANDS = ("simulate", "chaos-rate", "uniform-time", "decoupling", "cutoff-bias",
                       "coupling", "povzner")


class NumericalFailure(RuntimeError):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kacchaos", description="Kac particle system and "
                                 "propagation-of-chaos metrology.")
    ap.add_argument("--version", action="version", version=f"kacchaos {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in EXPERIMENT_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out-dir", help="output directory (default: $KACCHAOS_OUTPUT_DIR or .)")
        for f in fields(RunConfig):
            if f.name != "experiment":
                p.add_argument(_flag(f.name), dest=f.name, default=None, metavar=f.name.upper())
    w2 = sub.add_parser("w2", help="squared W2 between two snapshot files")
    w2.add_argument("a")
    w2.add_argument("b")
    w2.add_argument("--perm", action="store_true", help="also print the optimal permutation")
    st = sub.add_parser("selftest", help="closed-form vs oracle checks")
    st.add_argument("--seed", type=int, default=0)
    return ap


def _config_from_args(args) -> RunConfig:
    overrides = {f.name: parse_value(f.name, getattr(args, f.name))
                 for f in fields(RunConfig)
                 if f.name != "experiment" and getattr(args, f.name) is not None}
    overrides["experiment"] = args.command
    if args.config:
        return load_config(args.config, overrides)
    return loads("", overrides)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


def run_experiment(cfg: RunConfig, out: Path) -> list[Path]:
    from .experiments import RUNNERS
    res = RUNNERS[cfg.experiment](cfg)
    if any(not math.isfinite(r.value) for r in res.records):
        raise NumericalFailure("non-finite metric value produced")
    base = out / res.run_id
    paths = [base.with_suffix(".csv"), base.with_suffix(".json"), base.with_suffix(".cfg")]
    atomic_write_text(paths[0], metrics_csv(res.records))
    summary = {"run_id": res.run_id, "config_hash": cfg.hash, "seed": cfg.seed,
               "summary": res.summary}
    atomic_write_text(paths[1], json.dumps(summary, indent=2, sort_keys=True,
                                           default=_jsonable) + "\n")
    atomic_write_text(paths[2], dump(cfg))
    if cfg.experiment == "simulate":
        for r, ens in enumerate(res.data["final"]):
            p = out / f"{res.run_id}-snapshot-r{r}.csv"
            atomic_write_text(p, snapshot_csv(ens.velocities, ens.t, cfg.seed, cfg.K, cfg.nu))
            paths.append(p)
    return paths


def _cmd_w2(args) -> int:
    from .wasserstein import w2_exact
    try:
        A, _ = load_snapshot(args.a)
        B, _ = load_snapshot(args.b)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if A.shape != B.shape:
        raise ConfigError(f"snapshots differ in size: {A.shape[0]} vs {B.shape[0]}")
    val, perm = w2_exact(A, B, return_perm=True)
    print(repr(float(val)) if val else "0")
    if args.perm:
        print(" ".join(str(int(p)) for p in perm))
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_all
    checks = run_all(args.seed)
    for c in checks:
        print(f"{'ok  ' if c.ok else 'FAIL'} {c.name}: worst={c.worst:.3e} tol={c.tol:.0e}")
    return 0 if all(c.ok for c in checks) else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "w2":
            return _cmd_w2(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        cfg = _config_from_args(args)
        out = output_dir(args.out_dir)
        for p in run_experiment(cfg, out):
            print(p)
        return 0
    except ConfigError as exc:
        print(f"kacchaos: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, FloatingPointError, ArithmeticError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"kacchaos: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
