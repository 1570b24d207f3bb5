"""Figures rendered from the emitted CSV files (Agg backend, no display)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = np.array([[float(v) for v in row] for row in r])
    return {h: rows[:, i] for i, h in enumerate(header)} if len(rows) else {h: np.array([]) for h in header}


def _finish(fig, ax, path, title):
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_timeseries(csv_path, png_path, columns=None, t_scale=1.0, xlabel="t", ylabel="", title=""):
    data = read_csv(csv_path)
    cols = columns or [c for c in data if c != "t"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in cols:
        ax.plot(data["t"] / t_scale, data[c], label=c)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(cols) > 1:
        ax.legend()
    return _finish(fig, ax, png_path, title)


def plot_field(csv_paths, png_path, title=""):
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, path in csv_paths:
        d = read_csv(path)
        ax.plot(d["x"], d["E"], lw=0.8, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("one-photon field")
    ax.legend(fontsize="small")
    return _finish(fig, ax, png_path, title)


def plot_spectrum(csv_path, png_path, title=""):
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(d["omega"], d["power"], ".-", ms=3)
    ax.set_xlabel("omega")
    ax.set_ylabel("|G(x_a, x_a)|^2")
    return _finish(fig, ax, png_path, title)


def plot_sweep(csv_path, png_path, x, y, xlabel=None, ylabel=None, title=""):
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(d[x], d[y], "o-", ms=4)
    ax.set_xlabel(xlabel or x)
    ax.set_ylabel(ylabel or y)
    return _finish(fig, ax, png_path, title)


PLOT_SCRIPT = '''"""Re-draw {what} from {csv_names}; needs only numpy and matplotlib."""
import csv
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

def read(name):
    with open(name, newline="") as fh:
        r = csv.reader(fh)
        head = next(r)
        rows = np.array([[float(v) for v in row] for row in r])
    return {{h: rows[:, i] for i, h in enumerate(head)}}

{body}
plt.tight_layout()
plt.savefig("{png}", dpi=120)
'''


def write_plot_script(path, what, csv_names, body, png):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT.format(what=what, csv_names=", ".join(csv_names), body=body.strip() + "\n", png=png))
    os.chmod(path, 0o755)
    return path
