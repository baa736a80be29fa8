"""Design loss and evaluation metrics on target-plane amplitude images."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import AmplitudeImage


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    """``lam`` weights the intensity term. ``kind`` is ``"correlation"`` (the
    hologram loss) or ``"focus"`` (mean squared amplitude over the mask)."""

    lam: float = 0.0
    kind: str = "correlation"

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ObjectiveError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.kind not in ("correlation", "focus"):
            raise ObjectiveError(f"unknown loss kind {self.kind!r}")


@dataclass(frozen=True)
class TargetSpec:
    q0: AmplitudeImage
    mask: np.ndarray
    depth: float

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if mask.shape != self.q0.shape:
            raise ObjectiveError("target mask and q0 differ in shape")
        if not np.any(self.q0.values):
            raise ObjectiveError("target amplitude is identically zero")
        if not mask.any() or mask.all():
            raise ObjectiveError("target mask must be a nonempty strict subset of pixels")


def default_lambda(q0) -> float:
    return 1e-3 / np.linalg.norm(_values(q0))


def _values(img) -> np.ndarray:
    return np.asarray(img.values if isinstance(img, AmplitudeImage) else img, dtype=float)


def _norms(q, q0):
    nq, nq0 = np.linalg.norm(q), np.linalg.norm(q0)
    if nq == 0 or nq0 == 0:
        raise ObjectiveError("correlation undefined for a zero-norm image")
    return nq, nq0


def correlation(q, q0) -> float:
    """Normalised inner product of two nonnegative images."""
    q, q0 = _values(q), _values(q0)
    if q.shape != q0.shape:
        raise ObjectiveError(f"shape mismatch {q.shape} vs {q0.shape}")
    nq, nq0 = _norms(q, q0)
    return float(np.vdot(q0, q) / (nq0 * nq))


def loss(q, target, cfg: LossConfig = LossConfig()) -> float:
    """``-<q0, q> / (|q0| |q|) - lam |q|`` (or the focus variant)."""
    return loss_and_grad(q, target, cfg)[0]


def loss_and_grad(q, target, cfg: LossConfig = LossConfig()):
    """Loss value and its gradient with respect to the amplitude image ``q``."""
    q = _values(q)
    q0 = _values(target.q0 if isinstance(target, TargetSpec) else target)
    if q.shape != q0.shape:
        raise ObjectiveError(f"shape mismatch {q.shape} vs {q0.shape}")
    if cfg.kind == "focus":
        if not isinstance(target, TargetSpec):
            raise ObjectiveError("the focus loss needs a TargetSpec with a mask")
        m = target.mask
        n = m.sum()
        value = -float(np.sum(q[m] ** 2) / n)
        grad = np.where(m, -2 * q / n, 0.0)
        return value, grad
    nq, nq0 = _norms(q, q0)
    inner = float(np.vdot(q0, q))
    value = -inner / (nq0 * nq) - cfg.lam * nq
    grad = -q0 / (nq0 * nq) + inner * q / (nq0 * nq**3) - cfg.lam * q / nq
    return value, grad


def cnr(q, target_mask) -> float:
    """Mean amplitude over the mask divided by the mean over its complement."""
    q = _values(q)
    mask = np.asarray(target_mask, dtype=bool)
    if mask.shape != q.shape:
        raise ObjectiveError("mask and image differ in shape")
    if not mask.any() or mask.all():
        raise ObjectiveError("mask and its complement must both be nonempty")
    background = q[~mask].mean()
    if background <= 0:
        raise ObjectiveError("background mean is zero")
    return float(q[mask].mean() / background)


def find_target_depth(planes: Sequence, depths: Sequence[float], q0):
    """Depth whose plane correlates best with ``q0``; the smallest depth wins ties."""
    if len(planes) == 0:
        raise ObjectiveError("no planes to search")
    if len(planes) != len(depths):
        raise ObjectiveError("planes and depths differ in length")
    order = np.argsort(np.asarray(depths, dtype=float), kind="stable")
    best_depth, best_score = None, -np.inf
    for i in order:
        score = correlation(planes[i], q0)
        if score > best_score:
            best_depth, best_score = float(depths[i]), score
    return best_depth, float(best_score)
