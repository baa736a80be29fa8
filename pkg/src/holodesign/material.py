"""Two-material mixture model for printable lenses.

A single real field ``gamma`` over the lens box selects, per voxel, a blend of
two printable materials::

    theta = (m1 - m0) * sigmoid(gamma) + m0,     theta = (c, rho, alpha)

so every property stays between the two materials for any finite gamma.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .grid import Grid, GridError, Medium, MediumError, region_slices

BINARY_SATURATION = 0.45


class Material(NamedTuple):
    c: float
    rho: float
    alpha: float = 0.0


@dataclass(frozen=True)
class MaterialPair:
    material0: Material
    material1: Material

    def __post_init__(self):
        m0, m1 = Material(*self.material0), Material(*self.material1)
        object.__setattr__(self, "material0", m0)
        object.__setattr__(self, "material1", m1)
        for m in (m0, m1):
            if m.c <= 0 or m.rho <= 0 or m.alpha < 0:
                raise MediumError(f"material {m} violates positivity")
        if m0 == m1:
            raise MediumError("the two materials must differ in at least one property")

    def delta(self) -> np.ndarray:
        return np.array(self.material1) - np.array(self.material0)


@dataclass(frozen=True)
class DesignVariable:
    gamma: np.ndarray
    pair: MaterialPair
    lens_offset: tuple[int, ...]
    grid: Grid

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float, copy=True)
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lens_offset", tuple(int(o) for o in self.lens_offset))
        if not np.all(np.isfinite(gamma)):
            raise ValueError("gamma must be finite")
        if gamma.ndim != self.grid.ndim:
            raise GridError("gamma must have one axis per grid axis")
        region_slices(self.lens_offset, gamma.shape, self.grid.shape)
        w = self.grid.absorber_width
        for o, n, m in zip(self.lens_offset, gamma.shape, self.grid.shape):
            if o < w or o + n > m - w:
                raise GridError("lens region reaches into the absorber")

    @property
    def lens_shape(self) -> tuple[int, ...]:
        return self.gamma.shape

    @property
    def lens_slices(self) -> tuple[slice, ...]:
        return region_slices(self.lens_offset, self.gamma.shape, self.grid.shape)

    def with_gamma(self, gamma) -> "DesignVariable":
        return DesignVariable(gamma, self.pair, self.lens_offset, self.grid)


def random_design(pair: MaterialPair, lens_offset, lens_shape, grid: Grid, seed: int = 0,
                  spread: float = 0.1) -> DesignVariable:
    """Design with gamma drawn i.i.d. uniform in [-spread, spread]."""
    rng = np.random.default_rng(seed)
    return DesignVariable(rng.uniform(-spread, spread, size=tuple(lens_shape)), pair, lens_offset, grid)


def sigmoid(x):
    return expit(x)


def _fields_from_weight(pair: MaterialPair, w: np.ndarray):
    m0 = np.array(pair.material0)
    d = pair.delta()
    # m0 + d * w, written so w in {0, 1} reproduces the endpoints exactly
    return tuple(np.where(w == 1, m1, m0_ + di * w) for m0_, di, m1 in zip(m0, d, pair.material1))


def mixture_fields(design: DesignVariable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(c, rho, alpha) arrays over the lens box."""
    return _fields_from_weight(design.pair, sigmoid(design.gamma))


def mixture_derivative(design: DesignVariable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """d(c, rho, alpha)/d gamma over the lens box."""
    s = sigmoid(design.gamma)
    ds = s * (1 - s)
    return tuple(di * ds for di in design.pair.delta())


def binary_fields(design: DesignVariable, threshold_gamma: float = 0.0):
    w = (design.gamma > threshold_gamma).astype(float)
    return _fields_from_weight(design.pair, w)


class LensPatch(NamedTuple):
    """Property arrays for the lens box, ready to embed into a scenario medium."""
    offset: tuple[int, ...]
    c: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray


def mixture(design: DesignVariable) -> LensPatch:
    c, rho, alpha = mixture_fields(design)
    return LensPatch(design.lens_offset, c, rho, alpha)


def binarize(design: DesignVariable, threshold_gamma: float = 0.0) -> LensPatch:
    c, rho, alpha = binary_fields(design, threshold_gamma)
    return LensPatch(design.lens_offset, c, rho, alpha)


def embed_patch(base: Medium, patch: LensPatch) -> Medium:
    sl = region_slices(patch.offset, patch.c.shape, base.grid.shape)
    out = {}
    for name in ("c", "rho", "alpha"):
        arr = np.array(getattr(base, name))
        arr[sl] = getattr(patch, name)
        out[name] = arr
    return Medium(base.grid, **out)


def binarization_fraction(gamma: np.ndarray, saturation: float = BINARY_SATURATION) -> float:
    """Share of voxels with ``|sigmoid(gamma) - 0.5| > saturation``."""
    return float(np.mean(np.abs(sigmoid(gamma) - 0.5) > saturation))


def material_indices(patch: LensPatch, pair: MaterialPair) -> np.ndarray:
    """Map a two-valued patch back to 0/1 material indices; raises if any voxel
    matches neither material."""
    idx = np.full(patch.c.shape, -1, dtype=np.int8)
    for i, m in enumerate((pair.material0, pair.material1)):
        hit = (patch.c == m.c) & (patch.rho == m.rho) & (patch.alpha == m.alpha)
        idx[hit & (idx < 0)] = i
    if np.any(idx < 0):
        raise MediumError("medium is not two-valued in the given material pair")
    return idx.astype(np.uint8)


def binarization_error(design: DesignVariable, scenario, threshold_gamma: float = 0.0) -> float:
    """``|corr(q_continuous, q0) - corr(q_binary, q0)|`` through the full forward model."""
    from .scenario import binarization_error as _impl

    return _impl(design, scenario, threshold_gamma)
