"""Computational grids, fields, media and sources.

Axis 0 is always the propagation (axial) axis. The remaining one or two axes
are transverse. Every container here is immutable: arrays are copied on
construction and flagged read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MIN_CELLS = 8
MIN_POINTS_PER_WAVELENGTH = 4.0


class GridError(ValueError):
    pass


class MediumError(ValueError):
    pass


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform isotropic Cartesian lattice with an absorbing rim of
    ``absorber_width`` cells on each side."""

    shape: tuple[int, ...]
    dx: float
    absorber_width: int = 0

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (2, 3):
            raise GridError(f"grid must be 2D or 3D, got {len(shape)} axes")
        if min(shape) < MIN_CELLS:
            raise GridError(f"every axis needs at least {MIN_CELLS} cells, got {shape}")
        if not (np.isfinite(self.dx) and self.dx > 0):
            raise GridError(f"dx must be positive, got {self.dx}")
        if self.absorber_width < 0 or 2 * self.absorber_width >= min(shape):
            raise GridError(
                f"absorber_width={self.absorber_width} must be >= 0 and < min(shape)/2 = {min(shape) / 2}"
            )

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def transverse_shape(self) -> tuple[int, ...]:
        return self.shape[1:]

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(n * self.dx for n in self.shape)

    def interior_slice(self, axis: int) -> slice:
        return slice(self.absorber_width, self.shape[axis] - self.absorber_width)

    def in_interior(self, axis: int, index: int) -> bool:
        return self.absorber_width <= index < self.shape[axis] - self.absorber_width

    def points_per_wavelength(self, c_min: float, frequency: float) -> float:
        return c_min / frequency / self.dx

    def check_sampling(self, c_min: float, frequency: float) -> None:
        ppw = self.points_per_wavelength(c_min, frequency)
        if ppw < MIN_POINTS_PER_WAVELENGTH:
            raise GridError(
                f"only {ppw:.2f} points per wavelength (need >= {MIN_POINTS_PER_WAVELENGTH}); reduce dx"
            )


def make_grid(shape: Sequence[int], dx: float, absorber_width: int = 0) -> Grid:
    return Grid(tuple(shape), float(dx), int(absorber_width))


@dataclass(frozen=True)
class ComplexField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.complex128)
        if values.shape != self.grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("field contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PlaneField:
    """Complex field sampled on a plane (a line in 2D mode)."""

    shape: tuple[int, ...]
    dx: float
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.complex128)
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if values.shape != self.shape:
            raise GridError(f"plane values {values.shape} do not match shape {self.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("plane field contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, dx: float) -> "PlaneField":
        values = np.asarray(values)
        return cls(values.shape, dx, values)

    def amplitude(self) -> "AmplitudeImage":
        return AmplitudeImage(self.shape, self.dx, np.abs(self.values))


@dataclass(frozen=True)
class AmplitudeImage:
    shape: tuple[int, ...]
    dx: float
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if values.shape != self.shape:
            raise GridError(f"image values {values.shape} do not match shape {self.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise GridError("amplitude image must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, dx: float) -> "AmplitudeImage":
        values = np.asarray(values, dtype=float)
        return cls(values.shape, dx, values)


@dataclass(frozen=True)
class Medium:
    """Sound speed (m/s), density (kg/m^3) and absorption (Np/m at the design
    frequency) sampled on one grid."""

    grid: Grid
    c: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        for name in ("c", "rho", "alpha"):
            arr = _frozen(np.broadcast_to(getattr(self, name), self.grid.shape), np.float64)
            if not np.all(np.isfinite(arr)):
                raise MediumError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.c <= 0):
            raise MediumError("sound speed must be positive everywhere")
        if np.any(self.rho <= 0):
            raise MediumError("density must be positive everywhere")
        if np.any(self.alpha < 0):
            raise MediumError("absorption must be nonnegative everywhere")

    @property
    def c_min(self) -> float:
        return float(self.c.min())

    def with_values(self, c=None, rho=None, alpha=None) -> "Medium":
        return Medium(
            self.grid,
            self.c if c is None else c,
            self.rho if rho is None else rho,
            self.alpha if alpha is None else alpha,
        )


def homogeneous_medium(grid: Grid, c0: float, rho0: float, alpha0: float = 0.0) -> Medium:
    if c0 <= 0 or rho0 <= 0 or alpha0 < 0:
        raise MediumError(f"invalid homogeneous parameters c={c0}, rho={rho0}, alpha={alpha0}")
    shape = grid.shape
    return Medium(grid, np.full(shape, float(c0)), np.full(shape, float(rho0)), np.full(shape, float(alpha0)))


def region_slices(offset: Sequence[int], shape: Sequence[int], outer: Sequence[int]) -> tuple[slice, ...]:
    """Slices placing a box of ``shape`` at ``offset`` inside ``outer``; raises
    if the box leaves the outer array."""
    if len(offset) != len(outer) or len(shape) != len(outer):
        raise GridError(f"offset {tuple(offset)} / shape {tuple(shape)} do not match {len(outer)} axes")
    for o, n, m in zip(offset, shape, outer):
        if o < 0 or o + n > m:
            raise GridError(f"region at offset {tuple(offset)} with shape {tuple(shape)} leaves grid {tuple(outer)}")
    return tuple(slice(int(o), int(o) + int(n)) for o, n in zip(offset, shape))


def embed_region(base: Medium, patch: Medium, offset: Sequence[int]) -> Medium:
    """Copy ``patch`` into ``base`` at ``offset``. The grids must share dx."""
    if not np.isclose(base.grid.dx, patch.grid.dx, rtol=1e-12, atol=0):
        raise GridError(f"patch dx {patch.grid.dx} differs from base dx {base.grid.dx}")
    sl = region_slices(offset, patch.grid.shape, base.grid.shape)
    out = {}
    for name in ("c", "rho", "alpha"):
        arr = np.array(getattr(base, name))
        arr[sl] = getattr(patch, name)
        out[name] = arr
    return Medium(base.grid, **out)


def disc_mask(shape: Sequence[int], dx: float, diameter: float, center=None) -> np.ndarray:
    """Boolean disc (segment in 1D) of the given physical diameter centred on
    the plane. Cell centres within ``diameter / 2`` are inside."""
    shape = tuple(int(n) for n in shape)
    if center is None:
        center = [(n - 1) / 2 for n in shape]
    coords = np.meshgrid(*[(np.arange(n) - c0) * dx for n, c0 in zip(shape, center)], indexing="ij")
    r2 = sum(x**2 for x in coords)
    return r2 <= (diameter / 2) ** 2 + 1e-15


@dataclass(frozen=True)
class SourcePlane:
    """Piston source on the plane ``index`` along ``axis``.

    ``weights`` optionally shapes the per-cell complex drive (used to inject a
    prescribed field, e.g. for time-reversal); a uniform piston otherwise.
    """

    axis: int
    index: int
    aperture_mask: np.ndarray
    amplitude: float = 1.0
    phase: float = 0.0
    frequency: float = 2e6
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        mask = _frozen(self.aperture_mask, bool)
        object.__setattr__(self, "aperture_mask", mask)
        if self.weights is not None:
            w = _frozen(self.weights, np.complex128)
            if w.shape != mask.shape or not np.all(np.isfinite(w)):
                raise GridError("source weights must be finite and match the aperture mask")
            object.__setattr__(self, "weights", w)
        if not mask.any():
            raise GridError("source aperture is empty")
        if not self.frequency > 0:
            raise GridError(f"frequency must be positive, got {self.frequency}")

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.frequency

    @property
    def complex_amplitude(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)

    def validate_on(self, grid: Grid) -> None:
        if not 0 <= self.axis < grid.ndim:
            raise GridError(f"source axis {self.axis} out of range")
        if not grid.in_interior(self.axis, self.index):
            raise GridError(f"source plane index {self.index} is inside the absorber or off the grid")
        in_plane = tuple(n for i, n in enumerate(grid.shape) if i != self.axis)
        if self.aperture_mask.shape != in_plane:
            raise GridError(f"aperture mask {self.aperture_mask.shape} does not match plane {in_plane}")


def disc_source(grid: Grid, index: int, diameter: float, frequency: float,
                amplitude: float = 1.0, phase: float = 0.0, axis: int = 0) -> SourcePlane:
    in_plane = tuple(n for i, n in enumerate(grid.shape) if i != axis)
    src = SourcePlane(axis, index, disc_mask(in_plane, grid.dx, diameter), amplitude, phase, frequency)
    src.validate_on(grid)
    return src
