"""Metrics CSV, velocity snapshots and atomic file output."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
METRICS_HEADER = f"# kacchaos metrics schema={SCHEMA_VERSION}"
SNAPSHOT_HEADER = f"# kacchaos snapshot schema={SCHEMA_VERSION}"
OUTPUT_ENV = "KACCHAOS_OUTPUT_DIR"


def output_dir(explicit=None) -> Path:
    d = Path(explicit or os.environ.get(OUTPUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def atomic_write_text(path, text: str):
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    experiment: str
    nu: float
    N: int
    K: float
    L: float
    k: int | None
    t: float
    replicate: int
    metric_name: str
    value: float
    stderr: float
    seed: int
    surrogate_m: int | None
    config_hash: str

    def __post_init__(self):
        if not self.config_hash or self.seed is None:
            raise ValueError("every record needs seed and config_hash provenance")


COLUMNS = [f.name for f in fields(MetricsRecord)]
_TEXT = {"run_id", "experiment", "metric_name", "config_hash"}


def metrics_csv(records) -> str:
    buf = io.StringIO()
    buf.write(METRICS_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([v if name in _TEXT else fmt_num(v) for name, v in zip(COLUMNS, astuple(r))])
    return buf.getvalue()


def save_results(records, path):
    atomic_write_text(path, metrics_csv(records))


def _parse_cell(name: str, cell: str):
    if name in _TEXT:
        return cell
    if cell == "":
        return None
    if name in ("N", "k", "replicate", "seed", "surrogate_m"):
        return int(cell)
    return float(cell)


def load_results(path) -> list[MetricsRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# kacchaos metrics"):
        raise ValueError(f"{path} is not a metrics file")
    rows = list(csv.reader(lines[1:]))
    if rows[0] != COLUMNS:
        raise ValueError("unexpected metrics columns")
    return [MetricsRecord(*(_parse_cell(n, c) for n, c in zip(COLUMNS, row))) for row in rows[1:]]


def snapshot_csv(velocities, t: float, seed: int, K: float, nu: float) -> str:
    v = np.asarray(velocities, dtype=float)
    head = (f"{SNAPSHOT_HEADER} N={v.shape[0]} t={fmt_num(t)} seed={int(seed)} "
            f"K={fmt_num(K)} nu={fmt_num(nu)}\n")
    body = "".join(f"{fmt_num(a)},{fmt_num(b)},{fmt_num(c)}\n" for a, b, c in v)
    return head + "vx,vy,vz\n" + body


def save_snapshot(path, velocities, t: float, seed: int, K: float, nu: float):
    atomic_write_text(path, snapshot_csv(velocities, t, seed, K, nu))


def load_snapshot(path) -> tuple[np.ndarray, dict]:
    """Velocities and header metadata of a snapshot file.

    Plain CSVs with three numeric columns (optionally with a header row)
    are accepted too, with empty metadata.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta: dict = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0].split()[1:]:
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
        lines = lines[1:]
    if lines and not _is_numeric_row(lines[0]):
        lines = lines[1:]
    rows = [[float(c) for c in ln.split(",")] for ln in lines if ln.strip()]
    v = np.array(rows, dtype=float).reshape(-1, 3) if rows else np.zeros((0, 3))
    if "N" in meta and int(meta["N"]) != v.shape[0]:
        raise ValueError(f"{path}: header says N={meta['N']} but holds {v.shape[0]} rows")
    return v, meta


def _is_numeric_row(line: str) -> bool:
    try:
        [float(c) for c in line.split(",")]
        return True
    except ValueError:
        return False
