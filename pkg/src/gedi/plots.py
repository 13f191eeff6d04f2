"""Figures rendered from a run directory's CSV files only.

Decoupling plots from in-memory state keeps them reproducible: the same CSVs
give byte-identical SVGs (fixed hash salt, no embedded date).
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .config import parse_config

matplotlib.rcParams["svg.hashsalt"] = "gedi"

_NO_DATE = {"Date": None}


def _read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def _column(rows, name):
    out = []
    for r in rows:
        v = r.get(name, "")
        out.append(float(v) if v not in ("", None) else np.nan)
    return np.asarray(out)


def plot_losses(run_dir, out_path):
    """Loss curves with reference lines at 0 and at ln(n_clusters)."""
    rows = _read_csv(os.path.join(run_dir, "metrics.csv"))
    steps = _column(rows, "step")
    n_clusters = 2
    resolved = os.path.join(run_dir, "resolved.cfg")
    if os.path.exists(resolved):
        n_clusters = parse_config(resolved)["model"]["n_clusters"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, label in (("loss_inv", "invariance"), ("loss_prior", "prior"),
                        ("loss_gen_surrogate", "generative surrogate"),
                        ("loss_nesy", "semantic")):
        vals = _column(rows, name)
        if np.any(np.isfinite(vals)):
            ax.plot(steps, vals, label=label, linewidth=1.0)
    ax.axhline(0.0, color="gray", linestyle=":", linewidth=1.0, label="optimum of invariance (0)")
    ax.axhline(np.log(n_clusters), color="black", linestyle="--", linewidth=1.0,
               label=f"optimum of prior (ln {n_clusters})")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_NO_DATE)
    plt.close(fig)


def plot_clusters(run_dir, out_path):
    """Test points colored by predicted cluster."""
    rows = _read_csv(os.path.join(run_dir, "points.csv"))
    x0 = _column(rows, "x0")
    x1 = _column(rows, "x1")
    cluster = _column(rows, "cluster").astype(int)
    fig, ax = plt.subplots(figsize=(5, 5))
    for c in np.unique(cluster):
        sel = cluster == c
        ax.scatter(x0[sel], x1[sel], s=8, label=f"cluster {c}")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_NO_DATE)
    plt.close(fig)


def plot_samples(run_dir, out_path):
    """SGLD buffer states, a view of what the energy considers data-like."""
    rows = _read_csv(os.path.join(run_dir, "samples.csv"))
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(_column(rows, "x0"), _column(rows, "x1"), s=8, color="tab:red")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(out_path, metadata=_NO_DATE)
    plt.close(fig)


def plot_run(run_dir, out_dir=None):
    """Render every figure whose source CSV exists; returns written paths."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []
    jobs = (("metrics.csv", "losses.svg", plot_losses),
            ("points.csv", "clusters.svg", plot_clusters),
            ("samples.csv", "samples.svg", plot_samples))
    for src, dst, fn in jobs:
        if os.path.exists(os.path.join(run_dir, src)):
            out_path = os.path.join(out_dir, dst)
            fn(run_dir, out_path)
            written.append(out_path)
    return written
