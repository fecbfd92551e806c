"""CSV and manifest files.

Floats are written with 17 significant digits so every value survives a
write/read cycle bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .schedule import JointSchedule
from .simulator import RiskTrajectory, Source

SCHEDULE_COLUMNS = ("step", "time", "batch", "p")
TRAJECTORY_COLUMNS = ("time", "mean_risk", "se_risk", "source")
COMPARISON_COLUMNS = ("time", "measured_mean", "measured_se", "theory_scaled")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _read_rows(path, header: Sequence[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != tuple(header):
        raise ValueError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def write_schedule_csv(path, schedule: JointSchedule) -> Path:
    k = np.arange(schedule.steps)
    return _write_rows(path, SCHEDULE_COLUMNS,
                       zip(k, k * schedule.eta, schedule.batch, schedule.quality))


def read_schedule_csv(path, eta: Optional[float] = None) -> JointSchedule:
    """Rebuild a schedule; ``eta`` defaults to the spacing of the time column."""
    rows = _read_rows(path, SCHEDULE_COLUMNS)
    if not rows:
        raise ValueError(f"{path}: schedule has no steps")
    arr = np.array([[float(v) for v in r] for r in rows])
    if eta is None:
        eta = arr[1, 1] - arr[0, 1] if len(arr) > 1 else float("nan")
        if not eta > 0:
            raise ValueError(f"{path}: cannot infer eta from a single step")
    return JointSchedule(float(eta), arr[:, 2], arr[:, 3])


def write_trajectory_csv(path, traj: RiskTrajectory) -> Path:
    src = Source(traj.source).value
    return _write_rows(path, TRAJECTORY_COLUMNS,
                       ((t, m, s, src) for t, m, s in zip(traj.times, traj.mean_risk, traj.se_risk)))


def read_trajectory_csv(path) -> RiskTrajectory:
    rows = _read_rows(path, TRAJECTORY_COLUMNS)
    sources = {r[3] for r in rows}
    if len(sources) != 1:
        raise ValueError(f"{path}: mixed or missing source column")
    arr = np.array([[float(v) for v in r[:3]] for r in rows])
    return RiskTrajectory(arr[:, 0], arr[:, 1], arr[:, 2], Source(sources.pop()))


def write_comparison_csv(path, measured: RiskTrajectory, theory_scaled: np.ndarray) -> Path:
    return _write_rows(path, COMPARISON_COLUMNS,
                       zip(measured.times, measured.mean_risk, measured.se_risk, theory_scaled))


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return _write_rows(path, header, rows)


def write_constants(path, constants: Mapping[str, object]) -> Path:
    """Flat ``key = value`` block, one entry per line, keys sorted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {fmt(constants[k])}" for k in sorted(constants)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_constants(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        val = val.strip()
        try:
            out[key.strip()] = int(val) if val.lstrip("-").isdigit() else float(val)
        except ValueError:
            out[key.strip()] = val
    return out


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "value"):
        return obj.value
    return obj


def config_hash(config: Mapping) -> str:
    """SHA-256 of the canonical JSON encoding (sorted keys, no whitespace)."""
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(directory, config: Mapping, extra: Optional[Mapping] = None) -> Path:
    from . import __version__

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"config": _jsonable(config), "config_hash": config_hash(config),
           "package_version": __version__,
           "threads": os.environ.get("FSLSCHED_THREADS")}
    if extra:
        doc["results"] = _jsonable(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if config_hash(doc["config"]) != doc.get("config_hash"):
        raise ValueError(f"{path}: config hash does not match its contents")
    return doc
