"""Matplotlib defaults and small figure helpers for report output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    "svg.hashsalt": "xrisk",
}

RISKY_COLOR = "#c0392b"
NONRISKY_COLOR = "#2471a3"


def new(width=5.0, height=3.2, nrows=1, ncols=1):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(nrows=nrows, ncols=ncols, figsize=(width, height))
    return fig, ax


def save(fig, path):
    with plt.rc_context(RC):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def cloud_bars(counts: dict[str, int], title: str, path, color=RISKY_COLOR, top=30):
    items = list(counts.items())[:top]
    fig, ax = new(5.0, max(1.6, 0.22 * len(items) + 0.8))
    if items:
        words, values = zip(*items)
        y = np.arange(len(words))
        ax.barh(y, values, color=color)
        ax.set_yticks(y)
        ax.set_yticklabels(words)
        ax.invert_yaxis()
        ax.set_xlabel("filtered frequency")
    else:
        ax.text(0.5, 0.5, "no words passed the filters", ha="center", va="center",
                transform=ax.transAxes)
        ax.set_axis_off()
    ax.set_title(title)
    return save(fig, path)


def sentence_alpha_bars(alphas, title: str, path, cutoff=None):
    alphas = np.asarray(alphas)
    fig, ax = new(5.0, 2.4)
    x = np.arange(1, len(alphas) + 1)
    ax.bar(x, alphas, color="#7f8c8d")
    if cutoff is not None:
        ax.axhline(cutoff, color=RISKY_COLOR, lw=0.8, ls="--", label=f"cutoff {cutoff:g}")
        ax.legend(frameon=False)
    ax.set_xlabel("sentence")
    ax.set_ylabel("attention weight")
    ax.set_title(title)
    return save(fig, path)


def metric_bars(rows: list[dict], path, keys=("f1_risky", "kendall_tau_b", "spearman_rho")):
    fig, ax = new(5.0, 2.8)
    labels = [str(r["seed"]) for r in rows]
    width = 0.8 / len(keys)
    x = np.arange(len(rows))
    for i, key in enumerate(keys):
        ax.bar(x + i * width, [float(r[key]) for r in rows], width, label=key)
    ax.set_xticks(x + width * (len(keys) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_xlabel("seed")
    ax.set_ylim(-1, 1)
    ax.axhline(0, color="black", lw=0.5)
    ax.legend(frameon=False, ncol=len(keys), fontsize=7)
    return save(fig, path)
