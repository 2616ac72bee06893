"""Report figures rendered next to the CSV output of each command."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .imageio import atomic_write  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "figure.dpi": 100,
    "svg.hashsalt": "c2f",
}

BAND_COLORS = ("#1f4e79", "#c55a11", "#548235", "#7030a0", "#bf9000", "#2e75b6")


def size(scale=1.0, ratio=0.62):
    width = 6.0 * scale
    return (width, width * ratio)


def new(nrows=1, ncols=1, scale=1.0, ratio=0.62):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows=nrows, ncols=ncols, figsize=size(scale * max(1, ncols * 0.8), ratio))
    return fig, ax


def save(fig, path):
    """PNG without volatile metadata, written atomically."""
    buf = io.BytesIO()
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def _band_label(b, n):
    if b == 0:
        return "band 0 (lowest freq.)"
    if b == n - 1:
        return f"band {b} (highest freq.)"
    return f"band {b}"


def plot_schedule(steps, f_values, alpha_bar, abar_quantiles, quantile_labels, path):
    fig, (ax0, ax1) = new(ncols=2)
    ax0.plot(steps, f_values, color="k")
    ax0.set_xlabel("step i")
    ax0.set_ylabel("blur exponent f(i)")
    ax0.set_title("blur schedule")
    for q, label in zip(np.asarray(abar_quantiles).T, quantile_labels):
        ax1.plot(steps, q, label=label)
    ax1.plot(steps, alpha_bar, "k--", label="alpha_bar (DC)")
    ax1.set_yscale("log")
    ax1.set_ylim(bottom=max(1e-12, float(np.min(abar_quantiles)) * 0.5))
    ax1.set_xlabel("step i")
    ax1.set_ylabel("per-frequency signal retention")
    ax1.set_title("Abar_i quantiles over frequencies")
    ax1.legend(frameon=False)
    save(fig, path)


def plot_bands(steps, curves, path, ylabel, title, log=False):
    """One line per band; ``curves`` is ``(n_steps, n_bands)``."""
    curves = np.asarray(curves)
    fig, ax = new()
    n = curves.shape[1]
    for b in range(n):
        ax.plot(steps, curves[:, b], color=BAND_COLORS[b % len(BAND_COLORS)], label=_band_label(b, n))
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("step i")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    save(fig, path)


def plot_loss(x, loss, path, xlabel, reference=None):
    fig, ax = new()
    ax.plot(x, loss, color="#1f4e79", label="model")
    if reference is not None:
        ax.axhline(reference, color="k", ls="--", label="oracle")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("noise-matching loss")
    ax.legend(frameon=False)
    save(fig, path)


def plot_band_comparison(labels, energies, path):
    """Grouped bars of per-band energy for several sample sets."""
    energies = np.asarray(energies)
    fig, ax = new()
    n_sets, n_bands = energies.shape
    width = 0.8 / n_sets
    for k in range(n_sets):
        ax.bar(np.arange(n_bands) + k * width, energies[k], width, label=labels[k])
    ax.set_xticks(np.arange(n_bands) + 0.4 - width / 2)
    ax.set_xticklabels([f"band {b}" for b in range(n_bands)])
    ax.set_ylabel("mean spectral energy")
    ax.legend(frameon=False)
    save(fig, path)
