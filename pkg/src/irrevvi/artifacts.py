"""Byte-stable CSV/JSON serialization of trajectories and reports."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .evolution import Trajectory
from .mesh_ops import DiscreteOperators, grid_labels
from .reports import _plain

SCHEMA_VERSION = 1
INCOMPLETE_MARKER = "INCOMPLETE"


def fmt(x: float) -> str:
    return "%.17g" % x


def table_csv(header: Iterable[str], rows: Iterable[Iterable[float]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def field_rows(ops: DiscreteOperators, times, fields) -> str:
    """One row per time, one column per grid node (Dirichlet nodes included as 0)."""
    return table_csv(["t"] + grid_labels(ops.spec),
                     ([t, *ops.to_grid(z)] for t, z in zip(times, fields)))


def trajectory_csv(traj: Trajectory) -> str:
    return field_rows(traj.ops, traj.times, traj.snapshots)


def read_field_csv(path_or_text: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Inverse of :func:`field_rows`: ``(labels, times, grid_values)``."""
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    lines = text.rstrip("\n").split("\n")
    header = lines[0].split(",")
    if header[0] != "t":
        raise ValueError("field CSV must start with a 't' column")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header[1:], data[:, 0], data[:, 1:]


def json_text(obj: Any) -> str:
    payload = {"schema_version": SCHEMA_VERSION, **_plain(obj)}
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_outputs(artifacts: Mapping[str, str], out_dir: str | Path) -> list[Path]:
    """Write text artifacts with LF endings.  Clears a stale incomplete marker."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []
    for name in sorted(artifacts):
        path = out / name
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(artifacts[name])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        written.append(path)
    marker = out / INCOMPLETE_MARKER
    if marker.exists() and INCOMPLETE_MARKER not in artifacts:
        marker.unlink()
    return written


def write_failure(out_dir: str | Path, command: str, error: str, extra: Mapping | None = None):
    """Nothing but a summary flagged incomplete and a marker file are left behind.

    Files listed by a previous summary in the same directory are removed so
    stale results cannot be mistaken for this run's.
    """
    prev = Path(out_dir) / "summary.json"
    if prev.exists():
        try:
            stale = json.loads(prev.read_text()).get("files", [])
        except (ValueError, AttributeError):
            stale = []
        for name in stale:
            p = Path(out_dir) / Path(name).name
            if p.is_file():
                p.unlink()
    summary = {"command": command, "complete": False, "passed": False, "error": error,
               **(dict(extra) if extra else {})}
    return write_outputs({"summary.json": json_text(summary), INCOMPLETE_MARKER: error + "\n"},
                         out_dir)
