"""
Exports
-------
File formats shared by the solvers and the CLI:

- grid dump: header line `GRID nx ny L H`, then the nx * ny cell values
  row-major, one per line (value i * ny + j sits at the centre of cell (i, j))
- CSV tables for trajectories, controls, sweeps and convergence studies
- plain-text run reports

Every file is written to a temporary sibling and renamed into place, so an
interrupted run never leaves a half-written export behind.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from app.errors import ConfigurationError
from app.models.schemas import ControlSignal, GridField, RunReport, Trajectory


def write_atomic(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _num(x: float) -> str:
    return repr(float(x))


# --- grid dump -----------------------------------------------------------------


def render_grid(grid: GridField) -> str:
    lines = [f"GRID {grid.nx} {grid.ny} {_num(grid.length_L)} {_num(grid.height_H)}"]
    lines.extend(_num(v) for v in grid.values.reshape(-1))
    return "\n".join(lines) + "\n"


def parse_grid(text: str, source: str = "<grid>") -> GridField:
    tokens = text.split()
    if len(tokens) < 5 or tokens[0] != "GRID":
        raise ConfigurationError(f"{source}: missing 'GRID nx ny L H' header")
    try:
        nx, ny = int(tokens[1]), int(tokens[2])
        L, H = float(tokens[3]), float(tokens[4])
        values = np.array([float(t) for t in tokens[5:]])
    except ValueError as exc:
        raise ConfigurationError(f"{source}: malformed grid dump ({exc})") from exc
    if nx <= 0 or ny <= 0:
        raise ConfigurationError(f"{source}: grid dimensions must be positive, got {nx} x {ny}")
    if values.size != nx * ny:
        raise ConfigurationError(f"{source}: expected {nx * ny} values, found {values.size}")
    return GridField(nx=nx, ny=ny, length_L=L, height_H=H, values=values.reshape(nx, ny))


def read_grid(path: Union[str, Path]) -> GridField:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"grid file not found: {path}")
    return parse_grid(path.read_text(encoding="utf-8"), source=str(path))


def write_grid(path: Union[str, Path], grid: GridField) -> Path:
    return write_atomic(path, render_grid(grid))


def time_stamp(t: float) -> str:
    """Filename-safe time tag, e.g. 0.5 -> '0p500000'."""
    return f"{t:.6f}".replace(".", "p").replace("-", "m")


# --- CSV -----------------------------------------------------------------------


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def mode_columns(shape) -> List[str]:
    """mode_mn while both indices are single digits, mode_m_n beyond."""
    sep = "" if max(shape) <= 10 else "_"
    return [f"mode_{m}{sep}{n}" for m in range(shape[0]) for n in range(shape[1])]


def trajectory_csv(traj: Trajectory) -> str:
    flat = traj.coeffs.reshape(traj.times.size, -1)
    rows = ([float(t), *map(float, flat[j])] for j, t in enumerate(traj.times))
    return _csv_text(["t", *mode_columns(traj.domain.shape)], rows)


def control_csv(u: ControlSignal, length_L: float, height_H: float, points: int) -> str:
    """Coefficient tables as mode columns; rules as `t, xi1, xi2, u` rows on a points x points node grid."""
    if not u.is_rule:
        flat = u.coeffs.reshape(u.times.size, -1)
        rows = ([float(t), *map(float, flat[j])] for j, t in enumerate(u.times))
        return _csv_text(["t", *mode_columns(u.domain.shape)], rows)
    xs = np.linspace(0.0, length_L, points)
    ys = np.linspace(0.0, height_H, points)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    x_flat, y_flat = X.reshape(-1), Y.reshape(-1)

    def rows():
        for t in u.times:
            values = np.broadcast_to(u.rule(float(t), X, Y), X.shape).reshape(-1)
            for xi1, xi2, v in zip(x_flat, y_flat, values):
                yield [float(t), float(xi1), float(xi2), float(v)]

    return _csv_text(["t", "xi1", "xi2", "u"], rows())


def table_csv(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    return _csv_text(header, rows)


# --- report --------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def render_report(report: RunReport) -> str:
    lines = [f"problem: {report.problem}", f"status: {'ok' if report.ok else 'failed'}"]
    if report.values:
        lines.append("")
        lines.append("[values]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in report.values.items())
    if report.diagnostics:
        lines.append("")
        lines.append("[diagnostics]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in report.diagnostics.items())
    for name, rows in report.tables.items():
        lines.append("")
        lines.append(f"[table {name}]")
        if rows:
            cols = list(rows[0].keys())
            lines.append(" ".join(cols))
            lines.extend(" ".join(_fmt(row[c]) for c in cols) for row in rows)
    if report.files:
        lines.append("")
        lines.append("[files]")
        lines.extend(str(p) for p in report.files)
    return "\n".join(lines) + "\n"
