"""Delimited report files and the matplotlib figures rendered beside them."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .training import METRIC_COLUMNS


def write_metrics_csv(rows, path) -> None:
    """Per-clip metric table: id plus the mae/mse/loss columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id",) + METRIC_COLUMNS)
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.8g}" for v in row[1:]])


def write_training_log_csv(records, path) -> None:
    """One `epoch,phase,lr,train_loss,val_loss` line per epoch."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "phase", "lr", "train_loss", "val_loss"))
        for r in records:
            writer.writerow((r.epoch, r.phase, f"{r.lr:.8g}", f"{r.train_loss:.8g}", f"{r.val_loss:.8g}"))


def write_spectrogram_csv(grid, sample_rate: int, hop: int, path) -> None:
    """Log-power grid (rows = frames, columns = bins) with axis metadata in
    leading comment lines."""
    grid = np.asarray(grid)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# sample_rate_hz={sample_rate}\n")
        fh.write(f"# hop_samples={hop}\n")
        fh.write(f"# n_frames={grid.shape[0]}\n")
        fh.write(f"# n_bins={grid.shape[1]}\n")
        fh.write(f"# seconds_per_frame={hop / sample_rate:.8g}\n")
        fh.write(f"# hz_per_bin={sample_rate / (2 * (grid.shape[1] - 1)):.8g}\n")
        for row in grid:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")


def render_spectrogram_figure(grid, sample_rate: int, hop: int, path) -> None:
    grid = np.asarray(grid)
    duration = grid.shape[0] * hop / sample_rate
    fig, ax = plt.subplots(figsize=(7, 4))
    im = ax.imshow(
        grid.T,
        origin="lower",
        aspect="auto",
        extent=(0.0, duration, 0.0, sample_rate / 2.0 / 1000.0),
        cmap="magma",
    )
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (kHz)")
    fig.colorbar(im, ax=ax, label="log power")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_training_curves(records, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = [r.epoch for r in records]
    ax.plot(epochs, [r.train_loss for r in records], label="train")
    ax.plot(epochs, [r.val_loss for r in records], label="validation")
    for boundary in _phase_boundaries(records):
        ax.axvline(boundary, color="grey", linestyle=":", linewidth=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metrics_figure(rows, path) -> None:
    clip_rows = [r for r in rows if r[0] != "mean"]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    labels = [r[0] for r in clip_rows]
    for ax, column, title in zip(axes, (1, 2, 3), METRIC_COLUMNS):
        ax.bar(range(len(clip_rows)), [r[column] for r in clip_rows], color="#444444")
        ax.set_xticks(range(len(clip_rows)))
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _phase_boundaries(records) -> list:
    boundaries = []
    for prev, cur in zip(records, records[1:]):
        if cur.phase != prev.phase:
            boundaries.append(cur.epoch)
    return boundaries


def figure_path_for(csv_path) -> str:
    text = str(csv_path)
    stem = text[: -len(".csv")] if text.endswith(".csv") else text
    return stem + ".png"
