"""Plane extraction and angular-spectrum propagation through the homogeneous
background.

Planes are 1D (2D mode) or 2D arrays of complex pressure. The transfer
function for a distance ``d`` is ``exp(i kz d)`` with
``kz = sqrt(k^2 - kx^2 - ky^2)``; evanescent components either decay as
``exp(-|kz| |d|)`` or are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, GridError, PlaneField

EVANESCENT_POLICIES = ("decay", "zero")


@dataclass(frozen=True)
class ASPlan:
    """Angular-spectrum propagation settings for one plane shape.

    ``pad`` zero-pads the plane before the FFT to suppress periodic
    wrap-around: ``True`` doubles each axis, an integer ``p > 1`` multiplies
    each axis by ``p``. Near-grazing waves wrap coherently, so long
    propagation of wide-angle fields may need ``p`` above 2.
    """

    shape: tuple[int, ...]
    dx: float
    c0: float
    frequency: float
    evanescent_policy: str = "decay"
    pad: bool | int = False

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if not isinstance(self.pad, (bool, int, np.integer)) or self.pad < 0:
            raise ValueError("pad must be a bool or a non-negative integer factor")
        if self.c0 <= 0 or self.frequency <= 0:
            raise ValueError("background sound speed and frequency must be positive")
        if self.evanescent_policy not in EVANESCENT_POLICIES:
            raise ValueError(f"evanescent_policy must be one of {EVANESCENT_POLICIES}")

    @property
    def k(self) -> float:
        return 2 * np.pi * self.frequency / self.c0

    @property
    def work_shape(self) -> tuple[int, ...]:
        return tuple(self.pad_factor * n for n in self.shape)

    @property
    def pad_factor(self) -> int:
        if isinstance(self.pad, bool):
            return 2 if self.pad else 1
        return max(int(self.pad), 1)

    def _kz(self):
        ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, self.dx) for n in self.work_shape], indexing="ij")
        kt2 = sum(kk**2 for kk in ks)
        kz2 = self.k**2 - kt2
        return np.sqrt(np.abs(kz2)), kz2 > 0

    def propagating_mask(self) -> np.ndarray:
        return self._kz()[1]

    def transfer(self, d: float) -> np.ndarray:
        kz, prop = self._kz()
        h = np.where(prop, np.exp(1j * kz * d), 0)
        if self.evanescent_policy == "decay":
            h = np.where(prop, h, np.exp(-kz * abs(d)))
        return h


def _check(plan: ASPlan, plane: PlaneField):
    if tuple(plane.shape) != plan.shape:
        raise GridError(f"plane shape {plane.shape} does not match plan shape {plan.shape}")


def _canonical_shift(values: np.ndarray) -> tuple[int, ...]:
    """Roll that brings the plane to a position depending only on its content.

    The largest magnitude goes to the origin, and ties are broken by the byte
    order of the rolled arrays. Propagating the canonical copy and rolling
    back makes periodic translations of the input commute with propagation
    bit for bit, which FFT round-off alone does not give.
    """
    mag = np.abs(values).ravel()
    candidates = np.flatnonzero(mag == mag.max())
    if candidates.size == mag.size:
        return (0,) * values.ndim
    if candidates.size > 1:
        def key(i):
            shift = np.unravel_index(i, values.shape)
            return np.roll(values, [-s for s in shift], axis=tuple(range(values.ndim))).tobytes()
        candidates = [min(candidates, key=key)]
    return tuple(int(s) for s in np.unravel_index(candidates[0], values.shape))


def _apply(plan: ASPlan, values: np.ndarray, h: np.ndarray) -> np.ndarray:
    if plan.pad_factor > 1:
        work = np.zeros(plan.work_shape, dtype=complex)
        work[tuple(slice(0, n) for n in plan.shape)] = values
        return np.fft.ifftn(h * np.fft.fftn(work))[tuple(slice(0, n) for n in plan.shape)]
    axes = tuple(range(values.ndim))
    shift = _canonical_shift(values)
    work = np.roll(values, [-s for s in shift], axis=axes)
    return np.roll(np.fft.ifftn(h * np.fft.fftn(work)), shift, axis=axes)


def angular_spectrum(plan: ASPlan, plane: PlaneField, d: float) -> PlaneField:
    """Propagate ``plane`` a signed distance ``d`` (metres).

    With the decay policy a zero distance is the identity and returns the
    input values unchanged.
    """
    _check(plan, plane)
    if d == 0 and plan.evanescent_policy == "decay":
        return PlaneField(plan.shape, plan.dx, plane.values)
    return PlaneField(plan.shape, plan.dx, _apply(plan, plane.values, plan.transfer(float(d))))


def angular_spectrum_adjoint(plan: ASPlan, plane: PlaneField, d: float) -> PlaneField:
    """Adjoint of :func:`angular_spectrum` in the plain complex inner product."""
    _check(plan, plane)
    if d == 0 and plan.evanescent_policy == "decay":
        return PlaneField(plan.shape, plan.dx, plane.values)
    # with padding the forward map is crop . F^-1 H F . embed, and crop/embed are
    # each other's transposes, so only the transfer function changes
    h = np.conj(plan.transfer(float(d)))
    return PlaneField(plan.shape, plan.dx, _apply(plan, plane.values, h))


def extract_slice(field: ComplexField, axis: int, index: int) -> PlaneField:
    grid = field.grid
    if not 0 <= axis < grid.ndim:
        raise GridError(f"axis {axis} out of range for a {grid.ndim}D field")
    if not grid.in_interior(axis, index):
        raise GridError(f"index {index} on axis {axis} lies in the absorber or off the grid")
    values = np.take(field.values, index, axis=axis)
    return PlaneField(values.shape, grid.dx, values)


def inject_slice(plane_values: np.ndarray, shape, axis: int, index: int) -> np.ndarray:
    """Transpose of :func:`extract_slice`: zero volume with the plane set."""
    out = np.zeros(shape, dtype=complex)
    sl = [slice(None)] * len(shape)
    sl[axis] = index
    out[tuple(sl)] = plane_values
    return out


def propagate_to_target(field: ComplexField, axis: int, extraction_index: int, d: float,
                        plan: ASPlan) -> PlaneField:
    """Target-plane field: extract at ``extraction_index`` then propagate ``d``."""
    return angular_spectrum(plan, extract_slice(field, axis, extraction_index), d)
