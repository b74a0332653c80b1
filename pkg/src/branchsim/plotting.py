"""Deterministic SVG line charts of curves and path overlays."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed element ids and no creation date, so identical data gives identical bytes
matplotlib.rcParams["svg.hashsalt"] = "branchsim"
matplotlib.rcParams["svg.fonttype"] = "none"
_SVG_META = {"Date": None, "Creator": "branchsim"}


class PlotInputError(ValueError):
    pass


def read_curve_csv(path):
    """(t, value) arrays from a curve CSV; ``#`` lines are comments."""
    ts, vs = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None:
            raise PlotInputError(f"{path}: empty CSV")
        if [h.strip() for h in header[:2]] != ["t", "value"]:
            raise PlotInputError(f"{path}: expected header 't,value', got {','.join(header)}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 2:
                raise PlotInputError(f"{path}: row {lineno}: expected 2 fields, got {len(row)}")
            try:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
            except ValueError:
                raise PlotInputError(f"{path}: row {lineno}: non-numeric value {row!r}") from None
    if not ts:
        raise PlotInputError(f"{path}: no data rows")
    return np.array(ts), np.array(vs)


def _save(fig, out):
    out = Path(out)
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return out


def plot_curves(csv_paths, out_dir, title_prefix: str = "") -> list:
    """One SVG per curve CSV, written next to ``out_dir/<stem>.svg``."""
    out_dir = Path(out_dir)
    written = []
    for p in csv_paths:
        t, v = read_curve_csv(p)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(t, v, lw=1.5)
        ax.set_xlabel("t")
        ax.set_title(f"{title_prefix}{Path(p).stem}")
        ax.grid(alpha=0.3)
        written.append(_save(fig, out_dir / f"{Path(p).stem}.svg"))
    return written


def plot_overlay(grid, paths, reference, out, title: str = "", ref_label: str = "limit"):
    """Thin lines for each row of ``paths`` plus the reference curve."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for row in np.atleast_2d(paths):
        ax.plot(grid, row, lw=0.6, alpha=0.5, color="tab:blue")
    ax.plot(grid, reference, lw=2.0, color="black", label=ref_label)
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend(loc="upper left")
    ax.grid(alpha=0.3)
    return _save(fig, out)


def plot_series(x, ys: dict, out, title: str = "", xlabel: str = "t", logy: bool = False):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in ys.items():
        ax.plot(x, y, marker="o" if len(x) < 12 else None, lw=1.2, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, out)
