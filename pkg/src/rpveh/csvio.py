"""CSV emission and loading.

Numbers are written with ``%.12g`` (locale independent, stable across runs);
metadata goes in leading ``#`` comment lines.
"""

from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path

import numpy as np

from .identification import PowerSurface
from .loads import GridDataset, RatioSweep
from .transient import SimResult

TRACE_COLUMNS = ("t", "accel", "v_load", "i_load", "p_dc", "x", "x_dot")


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return "%.12g" % value


def _write(path: str | Path | None, comments: list[str], header, rows) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def write_grid(path, ds: GridDataset) -> str:
    meta = " ".join(f"{k}={fmt(v)}" for k, v in ds.meta.items())
    comments = [f"axes={ds.axis1_name},{ds.axis2_name}"] + ([meta] if meta else [])
    return _write(path, comments, ("axis1", "axis2", "value"), ds.rows())


def write_ratio(path, sweep: RatioSweep) -> str:
    return _write(path, ["powers normalized to P_max at the tuning amplitude; lambda_waste in percent"],
                  RatioSweep.columns, sweep.rows())


def write_surface(path, s: PowerSurface) -> str:
    comments = [f"a_max={fmt(s.a_max)} f={fmt(s.f)}", "axes=v_load,phi_load"]
    if s.current is None:
        header = ("axis1", "axis2", "value")
        rows = ((v, phi, s.power[i, j]) for i, v in enumerate(s.v_load) for j, phi in enumerate(s.phi_load))
    else:
        header = ("axis1", "axis2", "value", "current")
        rows = (
            (v, phi, s.power[i, j], s.current[i, j])
            for i, v in enumerate(s.v_load)
            for j, phi in enumerate(s.phi_load)
        )
    return _write(path, comments, header, rows)


_META = re.compile(r"a_max\s*=\s*([^\s]+)\s+f\s*=\s*([^\s]+)")


def read_surface(path) -> PowerSurface:
    """Load a surface written by :func:`write_surface` (or by hand in the same layout)."""
    text = Path(path).read_text(encoding="utf-8")
    a_max = f = None
    data_lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            m = _META.search(line)
            if m:
                a_max, f = float(m.group(1)), float(m.group(2))
        elif line.strip():
            data_lines.append(line)
    if a_max is None:
        raise ValueError(f"{path}: missing '# a_max=<g> f=<Hz>' header line")
    rows = list(csv.reader(data_lines))
    header, body = rows[0], rows[1:]
    if header[:3] != ["axis1", "axis2", "value"]:
        raise ValueError(f"{path}: expected header 'axis1,axis2,value', got {','.join(header)}")
    arr = np.array([[float(x) for x in r] for r in body])
    v_axis = np.unique(arr[:, 0])
    phi_axis = np.unique(arr[:, 1])
    if len(arr) != len(v_axis) * len(phi_axis):
        raise ValueError(f"{path}: points do not form a rectangular grid")
    iv = np.searchsorted(v_axis, arr[:, 0])
    ip = np.searchsorted(phi_axis, arr[:, 1])
    power = np.full((len(v_axis), len(phi_axis)), math.nan)
    power[iv, ip] = arr[:, 2]
    current = None
    if arr.shape[1] > 3:
        current = np.full_like(power, math.nan)
        current[iv, ip] = arr[:, 3]
    return PowerSurface(v_axis, phi_axis, power, a_max, f, current)


def write_trace(path, result: SimResult) -> str:
    tr = result.traces
    rows = zip(*(tr[c] for c in TRACE_COLUMNS))
    return _write(path, [f"fidelity={result.fidelity} drive_freq={fmt(result.drive_freq)} dt={fmt(result.dt)}"],
                  TRACE_COLUMNS, rows)


def write_summary(path, summary: dict) -> str:
    return _write(path, [], tuple(summary), [tuple(summary.values())])


def write_table(path, header, rows, comments=()) -> str:
    return _write(path, list(comments), header, rows)
