"""Figures written straight to image files (non-interactive backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def _axis_mm(n: int, dx: float) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2) * dx * 1e3


def plot_target_comparison(q: np.ndarray, q0: np.ndarray, dx: float, path, title: str = "") -> Path:
    """Achieved amplitude next to the target (profiles in 2D mode, images in 3D)."""
    q, q0 = np.asarray(q), np.asarray(q0)
    if q.ndim == 1:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        x = _axis_mm(q.size, dx)
        ax.plot(x, q0 / q0.max(), "k--", label="target")
        ax.plot(x, q / q.max(), label="achieved")
        ax.set_xlabel("transverse position (mm)")
        ax.set_ylabel("normalised amplitude")
        ax.legend()
    else:
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
        ext = [*(_axis_mm(q.shape[1], dx)[[0, -1]]), *(_axis_mm(q.shape[0], dx)[[-1, 0]])]
        for ax, img, label in zip(axes, (q0, q), ("target", "achieved")):
            im = ax.imshow(img / img.max(), extent=ext, cmap="viridis", vmin=0, vmax=1)
            ax.set_title(label)
            ax.set_xlabel("mm")
        fig.colorbar(im, ax=axes, shrink=0.8)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_loss_history(history: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(np.arange(len(history)), history)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_sound_speed(c: np.ndarray, dx: float, path, title: str = "lens sound speed") -> Path:
    """Axial cut (2D) or central axial slice (3D) of the lens sound speed."""
    c = np.asarray(c)
    if c.ndim == 3:
        c = c[:, :, c.shape[2] // 2]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    im = ax.imshow(c.T, origin="lower", aspect="auto", cmap="magma",
                   extent=[0, c.shape[0] * dx * 1e3, 0, c.shape[1] * dx * 1e3])
    ax.set_xlabel("axial (mm)")
    ax.set_ylabel("transverse (mm)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="m/s")
    return _save(fig, path)


def plot_binarization(rows: Sequence[tuple], path) -> Path:
    rows = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(rows[:, 0], rows[:, 2], "o-", label="saturated fraction")
    ax.plot(rows[:, 0], rows[:, 1], "s-", label="binarization error")
    ax.set_xlabel("iteration")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_plane_map(values: np.ndarray, dx: float, path, label: str, cmap: str = "twilight") -> Path:
    values = np.asarray(values)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if values.ndim == 1:
        ax.plot(_axis_mm(values.size, dx), values)
        ax.set_xlabel("transverse position (mm)")
        ax.set_ylabel(label)
    else:
        im = ax.imshow(values, cmap=cmap)
        fig.colorbar(im, ax=ax, label=label)
    return _save(fig, path)


def plot_depth_sweep(depths: np.ndarray, correlations: Sequence[float], path,
                     best: Optional[float] = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(np.asarray(depths) * 1e3, correlations, "o-")
    if best is not None:
        ax.axvline(best * 1e3, color="k", ls="--")
    ax.set_xlabel("distance from extraction plane (mm)")
    ax.set_ylabel("correlation with target")
    ax.grid(alpha=0.3)
    return _save(fig, path)
