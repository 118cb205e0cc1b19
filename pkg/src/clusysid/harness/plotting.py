"""Turn run-history CSVs into per-figure tab-separated tables and SVG line charts.

Figures produced when their inputs are present:

* ``errors_clustered_vs_pooled`` -- error vs iteration, clustered and pooled, one series per cluster and mode
* ``errors_clustered_vs_single`` -- error vs iteration, clustered and single-agent
* ``misclassification`` -- misclassified systems vs iteration, one series per rollout count
  (median over seeds of the ``history_N<N>_seed<s>.csv`` files), or the
  clustered run alone when no sweep is present
"""
from __future__ import annotations

import csv
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .experiment import HISTORY_HEADER


class HistoryFormatError(ValueError):
    """A history file is missing, empty or does not follow the CSV schema."""


@dataclass
class History:
    iterations: np.ndarray
    errors: dict  # cluster -> array over iterations
    misclassified: np.ndarray | None


@dataclass
class FigureOutput:
    name: str
    table: Path
    chart: Path
    series: list = field(default_factory=list)


def read_history(path) -> History:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise HistoryFormatError(f"{path}: empty file")
    if tuple(rows[0]) != HISTORY_HEADER:
        raise HistoryFormatError(f"{path}: unexpected header {rows[0]!r}")
    if len(rows) == 1:
        raise HistoryFormatError(f"{path}: history has no iterations")
    by_iter = defaultdict(dict)
    mis = {}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(HISTORY_HEADER):
            raise HistoryFormatError(f"{path}:{n}: expected {len(HISTORY_HEADER)} fields, got {len(row)}")
        try:
            it, cl, err = int(row[0]), int(row[1]), float(row[2])
            if row[3] != "":
                mis[it] = int(row[3])
            float(row[4])
        except ValueError as exc:
            raise HistoryFormatError(f"{path}:{n}: {exc}") from exc
        by_iter[it][cl] = err
    its = np.array(sorted(by_iter))
    clusters = sorted({c for d in by_iter.values() for c in d})
    errors = {c: np.array([by_iter[i].get(c, np.nan) for i in its]) for c in clusters}
    misclassified = np.array([mis[i] for i in its]) if len(mis) == len(its) else None
    return History(its, errors, misclassified)


def _write_table(path: Path, columns: dict) -> None:
    """columns: name -> (x array, y array); rows are aligned on x."""
    xs = sorted({int(v) for x, _ in columns.values() for v in x})
    lookup = {name: dict(zip(map(int, x), y)) for name, (x, y) in columns.items()}
    with open(path, "w") as fh:
        fh.write("\t".join(["iteration", *columns]) + "\n")
        for x in xs:
            cells = [str(x)]
            for name in columns:
                v = lookup[name].get(x)
                cells.append("" if v is None else repr(float(v)))
            fh.write("\t".join(cells) + "\n")


def _write_chart(path: Path, columns: dict, ylabel: str, logy: bool) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "clusysid"  # stable element ids

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (x, y) in columns.items():
        ax.plot(x, y, marker="o" if len(x) == 1 else None, label=name)
    if logy and all(np.all(np.asarray(y) > 0) for _, y in columns.values()):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _figure(out: Path, name: str, columns: dict, ylabel: str, logy: bool) -> FigureOutput:
    table = out / f"{name}.tsv"
    chart = out / f"{name}.svg"
    _write_table(table, columns)
    _write_chart(chart, columns, ylabel, logy)
    return FigureOutput(name, table, chart, list(columns))


def _error_columns(histories: dict, modes: tuple) -> dict:
    cols = {}
    for mode in modes:
        h = histories[mode]
        for c, e in h.errors.items():
            cols[f"{mode}_cluster{c}"] = (h.iterations, e)
    return cols


_SWEEP = re.compile(r"history_N(\d+)_seed(\d+)\.csv$")


def emit_plot_data(in_dir, out_dir) -> list[FigureOutput]:
    in_dir, out = Path(in_dir), Path(out_dir)
    files = sorted(in_dir.glob("history_*.csv"))
    if not files:
        raise HistoryFormatError(f"{in_dir}: no history_*.csv files found")
    out.mkdir(parents=True, exist_ok=True)

    modes = {}
    sweep = defaultdict(list)
    for f in files:
        m = _SWEEP.match(f.name)
        if m:
            sweep[int(m.group(1))].append(read_history(f))
        else:
            modes[f.stem[len("history_"):]] = read_history(f)

    figures = []
    if "clustered" in modes and "pooled" in modes:
        figures.append(_figure(out, "errors_clustered_vs_pooled", _error_columns(modes, ("clustered", "pooled")), "spectral error", True))
    if "clustered" in modes and "single_agent" in modes:
        figures.append(
            _figure(out, "errors_clustered_vs_single", _error_columns(modes, ("clustered", "single_agent")), "spectral error", True)
        )

    mis_cols = {}
    for N in sorted(sweep):
        hs = [h for h in sweep[N] if h.misclassified is not None]
        if not hs:
            continue
        length = min(len(h.iterations) for h in hs)
        med = np.median(np.stack([h.misclassified[:length] for h in hs]), axis=0)
        mis_cols[f"N{N}"] = (hs[0].iterations[:length], med)
    if not mis_cols and "clustered" in modes and modes["clustered"].misclassified is not None:
        h = modes["clustered"]
        mis_cols["clustered"] = (h.iterations, h.misclassified)
    if mis_cols:
        figures.append(_figure(out, "misclassification", mis_cols, "misclassified systems", False))

    if not figures:
        # a lone history (e.g. pooled only): still emit its error curves
        name, h = next(iter(modes.items())) if modes else next(
            (f"N{N}", hs[0]) for N, hs in sorted(sweep.items())
        )
        cols = {f"{name}_cluster{c}": (h.iterations, e) for c, e in h.errors.items()}
        figures.append(_figure(out, f"errors_{name}", cols, "spectral error", True))
    return figures
