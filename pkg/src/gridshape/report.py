"""Deterministic CSV, JSON and SVG output."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import MissingSignalError  # noqa: E402
from .lti import Trajectory  # noqa: E402

_FMT = ".12g"

# signal stem -> (column unit suffix, scale as a function of f0); anything else is pu
_UNITS = {
    "omega": ("mhz", lambda f0: f0 * 1000.0),
    "omega_dot": ("hz_s", lambda f0: f0),
    "delta": ("rad", lambda f0: 1.0),
    "E_b": ("pu_s", lambda f0: 1.0),
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or isinstance(v, np.floating):
        v = float(v)
        if v == 0.0:
            return "0"
        if math.isnan(v):
            return "nan"
        return format(v, _FMT)
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> Path:
    """RFC-4180 CSV with LF endings and locale-independent number format."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path = Path(path)
    path.write_bytes(buf.getvalue().encode("utf-8"))
    return path


def _num(v: str) -> float:
    if v == "true":
        return 1.0
    if v == "false":
        return 0.0
    return float(v)


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        cols[name] = np.asarray([_num(r[j]) for r in body], dtype=float)
    return cols


def _column_name(signal: str) -> tuple[str, float]:
    for key, (suffix, scale) in _UNITS.items():
        if signal == key or (signal.startswith(key + "_") and signal[len(key) + 1:].isdigit()):
            return f"{signal}_{suffix}", scale
    return f"{signal}_pu", lambda f0: 1.0


def trajectory_table(traj: Trajectory, f0_hz: float, stride: int = 1) -> tuple[list[str], np.ndarray]:
    """Columns ``t_s`` then every signal in unit-suffixed form, every ``stride`` samples."""
    header = ["t_s"]
    cols = [traj.t[::stride]]
    for name in traj.signals:
        if name == "E_b_ode":
            continue
        col, scale = _column_name(name)
        header.append(col)
        cols.append(traj[name][::stride] * scale(f0_hz))
    return header, np.column_stack(cols)


def write_trajectory(path, traj: Trajectory, f0_hz: float, stride: int = 1) -> Path:
    header, table = trajectory_table(traj, f0_hz, stride)
    return write_csv(path, header, (list(map(float, r)) for r in table))


def write_json(path, obj) -> Path:
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return None if not math.isfinite(v) else v
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.bool_):
            return bool(v)
        return v

    path = Path(path)
    path.write_bytes((json.dumps(clean(obj), indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return path


_LABELS = {
    "t": "time [s]", "t_s": "time [s]",
    "m_v": "virtual inertia m_v [pu s]", "alpha_b": "storage droop alpha_b [pu]",
    "a": "shaped inertia a [pu s]", "b": "shaped damping b [pu]",
}


def _axis_label(col: str) -> str:
    if col in _LABELS:
        return _LABELS[col]
    for suffix, unit in (("_mhz", "mHz"), ("_hz_s", "Hz/s"), ("_pu_s", "pu s"), ("_pu_h", "pu h"),
                         ("_pu", "pu"), ("_rad", "rad"), ("_s", "s")):
        if col.endswith(suffix):
            return f"{col[: -len(suffix)]} [{unit}]"
    return col


def emit_plot(csv_path, x: str, ys: Sequence[str], out, title: str | None = None) -> Path:
    """Line chart of columns ``ys`` against ``x`` as a byte-stable SVG."""
    cols = read_csv(csv_path)
    for c in [x, *ys]:
        if c not in cols:
            raise MissingSignalError(f"no column {c!r} in {csv_path} (available: {', '.join(cols)})")
    return plot_columns(cols, x, ys, out, title)


def plot_columns(cols: dict, x: str, ys: Sequence[str], out, title: str | None = None) -> Path:
    rc = {"svg.hashsalt": "gridshape", "svg.fonttype": "none", "path.simplify": False}
    with plt.rc_context(rc):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for y in ys:
            ax.plot(cols[x], cols[y], label=y, linewidth=1.2)
        ax.set_xlabel(_axis_label(x))
        ax.set_ylabel(_axis_label(ys[0]))
        if len(ys) > 1:
            ax.legend(loc="best", fontsize="small")
        if title:
            ax.set_title(title)
        ax.grid(True, linewidth=0.4, alpha=0.6)
        fig.tight_layout()
        out = Path(out)
        fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return out
