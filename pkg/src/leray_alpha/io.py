"""Artifact writers: CSV curves, flat binary snapshots, JSON records, manifest."""

from __future__ import annotations

import datetime as _dt
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import energy_report

__all__ = [
    "RunManifest",
    "RunResult",
    "atomic_write",
    "format_csv",
    "read_states",
    "write_artifacts",
]

TRAJECTORY_COLUMNS = ("t", "l2_norm", "v_norm", "da_norm", "energy_residual")
CONTROL_COLUMNS = ("t", "l2_omega_norm")


@dataclass
class RunResult:
    """One named run: optional trajectory and control plus JSON records."""

    name: str
    trajectory: object = None
    control: object = None
    alpha: float = 0.0
    source: object = None
    record: dict = field(default_factory=dict)
    sweep: object = None


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str
    threads: str
    files: list
    records: dict

    def to_dict(self):
        return {
            "config": self.config,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "threads": self.threads,
            "files": self.files,
            "records": self.records,
        }


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def atomic_write(path, data):
    """Write bytes to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def format_csv(columns, rows):
    buf = _io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue().encode()


def _json_bytes(obj):
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def trajectory_rows(tr, v=None, alpha=0.0, source=None):
    rep = energy_report(tr, v, alpha, source)
    res = np.concatenate([[math.nan], rep.residuals])
    return zip(tr.time_grid.times, rep.l2_norms, rep.v_norms, rep.da_norms, res)


def _states_payload(tr):
    arr = np.stack([tr.coef.real, tr.coef.imag], axis=-1).astype("<f8")
    meta = {
        "dtype": "<f8",
        "order": "C",
        "shape": list(arr.shape),
        "layout": "[time][mode][real, imag]",
        "basis": tr.basis.describe(),
        "T": tr.time_grid.T,
        "M": tr.time_grid.M,
    }
    return arr.tobytes(), meta


def _control_payload(v):
    arr = np.ascontiguousarray(v.values, dtype="<f8")
    meta = {
        "dtype": "<f8",
        "order": "C",
        "shape": list(arr.shape),
        "layout": "[time][x1][x2][component]",
        "T": v.time_grid.T,
        "M": v.time_grid.M,
    }
    return arr.tobytes(), meta


def read_states(bin_path):
    """Load a snapshot file written by :func:`write_artifacts` as complex (M + 1, m)."""
    bin_path = Path(bin_path)
    meta = json.loads(bin_path.with_suffix(".json").read_text())
    arr = np.fromfile(bin_path, dtype=meta["dtype"]).reshape(meta["shape"])
    return arr[..., 0] + 1j * arr[..., 1], meta


def write_artifacts(results, config, directory=None, started=None):
    """Write every run result, then the manifest.

    ``results`` is a list of :class:`RunResult`; ``config`` a RunConfig or a
    plain dict.  Files land in ``directory`` (default: the configured output
    directory).  The manifest lists each file with its sha256 and is written
    last, so a killed run never leaves a manifest pointing at missing files.
    """
    cfg_dict = config.to_dict() if hasattr(config, "to_dict") else dict(config or {})
    if directory is None:
        directory = cfg_dict.get("output", {}).get("directory", ".")
    formats = set(cfg_dict.get("output", {}).get("formats", ("csv", "binary", "json")))
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    started = started or _now()
    files = []
    records = {}

    def emit(name, data):
        atomic_write(out / name, data)
        files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    for res in results:
        tr, v = res.trajectory, res.control
        if tr is not None:
            if "csv" in formats:
                rows = trajectory_rows(tr, v, res.alpha, res.source)
                emit(f"{res.name}_trajectory.csv", format_csv(TRAJECTORY_COLUMNS, rows))
            if "binary" in formats:
                data, meta = _states_payload(tr)
                emit(f"{res.name}_states.bin", data)
                emit(f"{res.name}_states.json", _json_bytes(meta))
        if v is not None:
            if "csv" in formats:
                rows = zip(v.time_grid.times, v.l2_norms())
                emit(f"{res.name}_control.csv", format_csv(CONTROL_COLUMNS, rows))
            if "binary" in formats:
                data, meta = _control_payload(v)
                emit(f"{res.name}_control.bin", data)
                emit(f"{res.name}_control.json", _json_bytes(meta))
        if res.sweep is not None and "csv" in formats:
            from .experiments import SweepRow

            rows = [r.csv_values() for r in res.sweep.rows]
            emit(f"{res.name}_sweep.csv", format_csv(SweepRow.CSV_COLUMNS, rows))
        if res.record:
            records[res.name] = _jsonable(res.record)
            if "json" in formats:
                emit(f"{res.name}_record.json", _json_bytes(res.record))

    manifest = RunManifest(
        config=cfg_dict,
        version=__version__,
        started=started,
        finished=_now(),
        threads=os.environ.get("LAL_THREADS", "1"),
        files=files,
        records=records,
    )
    atomic_write(out / "manifest.json", _json_bytes(manifest.to_dict()))
    return manifest
