"""Turn result CSVs into gnuplot data (``.dat``) and command (``.plt``) files.

Nothing is rendered; ``gnuplot name.plt`` in the run directory draws the plot.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import MissingColumn
from .output import FLOAT_FMT, read_csv


def _need(header, cols, path):
    for col in cols:
        if col not in header:
            raise MissingColumn(f"{os.path.basename(path)}: missing column {col!r}")
    return [header.index(col) for col in cols]


def _write_table(path, header, data):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in data:
            fh.write(" ".join(FLOAT_FMT % v for v in row) + "\n")
    return path


def _write_plt(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def observables_dat(csv_path: str, out_dir: str) -> list[str]:
    header, data = read_csv(csv_path)
    _need(header, ["t", "mean_q"], csv_path)
    dat = _write_table(os.path.join(out_dir, "observables.dat"), header, data)
    series = [f"'observables.dat' using 1:{header.index(col) + 1} with lines title '{col}'"
              for col in header[1:]]
    plt = _write_plt(os.path.join(out_dir, "observables.plt"),
                     ["set xlabel 't'", "plot " + ", \\\n     ".join(series)])
    return [dat, plt]


def density_dat(csv_path: str, out_dir: str, name: str = "density") -> list[str]:
    """Long ``t, x, density`` rows to a gnuplot nonuniform matrix (rows are times)."""
    header, data = read_csv(csv_path)
    it, ix, idens = _need(header, [header[0], header[1], "density"], csv_path)
    times = np.unique(data[:, it])
    xs = data[data[:, it] == times[0], ix]
    mat = data[:, idens].reshape(times.size, xs.size)
    dat = os.path.join(out_dir, f"{name}.dat")
    with open(dat, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nonuniform matrix: first row {header[1]} values, first column t\n")
        fh.write(" ".join(FLOAT_FMT % v for v in np.r_[xs.size, xs]) + "\n")
        for t, row in zip(times, mat):
            fh.write(" ".join(FLOAT_FMT % v for v in np.r_[t, row]) + "\n")
    plt = _write_plt(os.path.join(out_dir, f"{name}.plt"),
                     [f"set xlabel '{header[1]}'", "set ylabel 't'", "set view map",
                      f"splot '{name}.dat' nonuniform matrix with pm3d notitle"])
    return [dat, plt]


def overlay_dat(obs_path: str, oracle_path: str, out_dir: str) -> list[str]:
    """``<q>`` of the quantum run next to the classical oracle on the shared time column."""
    h1, d1 = read_csv(obs_path)
    h2, d2 = read_csv(oracle_path)
    t1, q = _need(h1, ["t", "mean_q"], obs_path)
    t2, qc = _need(h2, ["t", "q_cl"], oracle_path)
    if d1.shape[0] != d2.shape[0] or not np.array_equal(d1[:, t1], d2[:, t2]):
        raise ValueError("observables and oracle do not share a time column")
    dat = _write_table(os.path.join(out_dir, "overlay.dat"), ["t", "mean_q", "q_cl"],
                       np.column_stack([d1[:, t1], d1[:, q], d2[:, qc]]))
    plt = _write_plt(os.path.join(out_dir, "overlay.plt"),
                     ["set xlabel 't'",
                      "plot 'overlay.dat' using 1:2 with lines title '<q>', \\\n"
                      "     'overlay.dat' using 1:3 with points pointtype 7 pointsize 0.3 title 'oracle'"])
    return [dat, plt]


def table_dat(csv_path: str, out_dir: str, x: str, logscale: bool = False) -> list[str]:
    header, data = read_csv(csv_path)
    _need(header, [x], csv_path)
    name = os.path.splitext(os.path.basename(csv_path))[0]
    dat = _write_table(os.path.join(out_dir, f"{name}.dat"), header, data)
    ix = header.index(x) + 1
    series = [f"'{name}.dat' using {ix}:{i + 1} with linespoints title '{col}'"
              for i, col in enumerate(header) if col != x]
    lines = [f"set xlabel '{x}'"] + (["set logscale xy"] if logscale else [])
    plt = _write_plt(os.path.join(out_dir, f"{name}.plt"), lines + ["plot " + ", \\\n     ".join(series)])
    return [dat, plt]


def emit_plot_data(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Write plot data for every recognised CSV in ``run_dir``."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)

    def path(name):
        return os.path.join(run_dir, name)

    written = []
    if os.path.isfile(path("observables.csv")):
        written += observables_dat(path("observables.csv"), out_dir)
    if os.path.isfile(path("snapshots.csv")):
        written += density_dat(path("snapshots.csv"), out_dir)
    if os.path.isfile(path("p_marginal.csv")):
        written += density_dat(path("p_marginal.csv"), out_dir, "p_density")
    if os.path.isfile(path("oracle.csv")):
        written += overlay_dat(path("observables.csv"), path("oracle.csv"), out_dir)
    if os.path.isfile(path("diagnostics.csv")):
        written += table_dat(path("diagnostics.csv"), out_dir, "t")
    if os.path.isfile(path("limit.csv")):
        written += table_dat(path("limit.csv"), out_dir, "theta", logscale=True)
    if not written:
        raise FileNotFoundError(f"no result CSVs in {run_dir}")
    return written
