"""Snapshot, time-series and summary output.

Snapshot format: a text header of key=value lines closed by an
`end_header` line, followed by raw little-endian 64-bit floats for every
field in the fixed order n, k, gamma, e, omega, e0psi, epsi, each stored
component-block first and row-major over the grid.  Reading a snapshot
back reproduces the field buffers bit for bit.

The CSV time series uses 17-significant-digit decimal floats so that
parsed values round-trip losslessly and reruns diff clean.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid
from .state import FIELD_SPECS, ReducedState

SNAPSHOT_MAGIC = "kasnersim-snapshot-v1"


def fmt(x) -> str:
    return "%.17g" % float(x)


def write_snapshot(path, grid: Grid, state: ReducedState, meta: dict | None = None):
    lines = [f"format={SNAPSHOT_MAGIC}",
             f"dim={grid.dim}",
             "active_dims=" + ",".join(str(a) for a in grid.active),
             "sizes=" + ",".join(str(n) for n in grid.shape),
             f"t={fmt(state.t)}"]
    counts = []
    for name, power in FIELD_SPECS:
        counts.append(f"{name}:{grid.dim ** power}")
    lines.append("fields=" + ",".join(counts))
    for key, value in (meta or {}).items():
        lines.append(f"{key}={value}")
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        for name, _ in FIELD_SPECS:
            arr = np.ascontiguousarray(getattr(state, name), dtype="<f8")
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Returns (grid, state, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"end_header\n"
    pos = raw.index(marker)
    header, payload = raw[:pos].decode("ascii"), raw[pos + len(marker):]
    meta = {}
    for line in header.splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    if meta.get("format") != SNAPSHOT_MAGIC:
        raise ValueError(f"not a {SNAPSHOT_MAGIC} file: {path}")
    dim = int(meta.pop("dim"))
    active = [int(a) for a in meta.pop("active_dims").split(",")]
    sizes = [int(n) for n in meta.pop("sizes").split(",")]
    t = float(meta.pop("t"))
    meta.pop("format")
    grid = Grid(dim=dim, active_dims=active, sizes=sizes)

    declared = meta.pop("fields")
    expected = ",".join(f"{n}:{dim ** p}" for n, p in FIELD_SPECS)
    if declared != expected:
        raise ValueError(f"unexpected field list {declared!r}")

    fields = {}
    offset = 0
    npts = grid.npoints
    for name, power in FIELD_SPECS:
        comps = dim ** power
        nbytes = comps * npts * 8
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8")
        offset += nbytes
        shape = (dim,) * power + grid.shape
        fields[name] = arr.reshape(shape).astype(float)
    if offset != len(payload):
        raise ValueError("trailing bytes in snapshot payload")
    return grid, ReducedState(t=t, **fields), meta


class CsvWriter:
    def __init__(self, path, columns):
        self.path = path
        self.columns = list(columns)
        self._fh = open(path, "w", encoding="ascii", newline="\n")
        self._fh.write(",".join(self.columns) + "\n")

    def write_row(self, values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match header")
        self._fh.write(",".join(fmt(v) for v in values) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path):
    """Returns (columns, rows) with rows as float lists."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        return [], []
    columns = lines[0].split(",")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return columns, rows


def write_summary(path, entries: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            if isinstance(value, float):
                value = fmt(value)
            fh.write(f"{key}={value}\n")


# -- gnuplot emission ---------------------------------------------------------

_PLOTS = (
    ("kretschmann", ["t", "kret_t4_sup", "kret_t4_mean"],
     "t^4 * Kretschmann scalar", "set logscale x\nset logscale y\n"),
    ("constraints", ["t", "ham_sup", "mom_sup"],
     "weighted constraint residuals", "set logscale x\nset logscale y\n"),
    ("structure", ["t", "structure_sup"],
     "t^q-weighted structure coefficient sup", "set logscale x\n"),
    ("norms", ["t", "L_total", "H_total", "D_total"],
     "solution norms", "set logscale x\nset logscale y\n"),
)


class PlotInputError(ValueError):
    pass


def write_plot_scripts(csv_path, outdir):
    """Emit gnuplot scripts plus the data files they reference.

    Returns the list of files written.  Raises PlotInputError when the CSV
    is empty or lacks a required column.
    """
    import os

    columns, rows = read_csv(csv_path)
    if not rows:
        raise PlotInputError(f"no data rows in {csv_path}")
    written = []
    for name, cols, title, axes in _PLOTS:
        for c in cols:
            if c not in columns:
                raise PlotInputError(f"column {c!r} missing from {csv_path}")
        idx = [columns.index(c) for c in cols]
        datname = f"{name}.dat"
        datpath = os.path.join(outdir, datname)
        with open(datpath, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# " + " ".join(cols) + "\n")
            for row in rows:
                fh.write(" ".join(fmt(row[i]) for i in idx) + "\n")
        gppath = os.path.join(outdir, f"{name}.gp")
        with open(gppath, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f'set title "{title}"\n')
            fh.write('set xlabel "t"\n')
            fh.write(axes)
            plots = ", ".join(
                f'"{datname}" using 1:{j + 2} with lines title "{cols[j + 1]}"'
                for j in range(len(cols) - 1))
            fh.write("plot " + plots + "\n")
        written += [datpath, gppath]
    return written
