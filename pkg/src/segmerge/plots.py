"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_sweep(rows, path) -> None:
    """Two panels: precision/recall/F and the error triple vs scale."""
    scales = [s for s, _ in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for name, color in (("precision", "tab:red"), ("recall", "tab:blue"), ("f_score", "tab:green")):
        ax1.plot(scales, [getattr(r, name) for _, r in rows], marker="o", label=name, color=color)
    ax1.set_xlabel("scale")
    ax1.set_ylim(0, 1.05)
    ax1.legend()
    ax1.grid(alpha=0.3)
    for name, color in (("gose", "tab:orange"), ("guse", "tab:purple"), ("te", "tab:brown")):
        ax2.plot(scales, [getattr(r, name) for _, r in rows], marker="o", label=name.upper(), color=color)
    ax2.set_xlabel("scale")
    ax2.legend()
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_histogram(hist: dict, path) -> None:
    edges = np.asarray(hist["edges"])
    counts = np.asarray(hist["counts"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="tab:blue", alpha=0.8)
    ax.set_xlabel("edge weight (feature distance)")
    ax.set_ylabel("edges")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curve(history, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([e for e, _ in history], [l for _, l in history], marker=".")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean pair loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_overlay(raster, segmap, path) -> None:
    """Segment boundaries drawn over the image."""
    img = raster.data
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    over = img.astype(np.float64).copy()
    labels = segmap.labels
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    over[edge] = (255.0, 255.0, 0.0)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(over.astype(np.uint8))
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
