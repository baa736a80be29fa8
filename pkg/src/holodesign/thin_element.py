"""Thin-element hologram baselines.

Phase maps are designed on a plane (IASA phase retrieval, or back-propagation
through an aberrator followed by phase conjugation), converted to column
heights of a single lens material, and voxelised so the baseline lens can be
simulated with the same full-wave model as the volumetric designs.

Sign convention: a column of height ``t`` inside a slab of thickness
``t_max`` transmits with phase ``k0 (t_max - t) + kL t = k0 t_max - (k0 - kL) t``.
:func:`phase_to_thickness` inverts ``phase = (k0 - kL) t`` (mod 2 pi), so a
lens realising the field phase ``psi`` is cut from the retardation map
``-psi`` (see :func:`retardation`).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import GridError, Medium, PlaneField, SourcePlane, disc_mask
from .helmholtz import HelmholtzOperator, HelmholtzSettings, source_term
from .material import LensPatch, Material, embed_patch
from .objective import correlation
from .propagation import ASPlan, angular_spectrum

TWO_PI = 2 * np.pi


def wrap(phase):
    """Phase reduced to [0, 2 pi)."""
    r = np.mod(phase, TWO_PI)
    return np.where(r >= TWO_PI, 0.0, r)


def principal(phase):
    """Phase reduced to (-pi, pi]. Values already in range are returned
    unchanged, so negation inside the range is exact."""
    phase = np.asarray(phase, dtype=float)
    reduced = np.where(np.abs(phase) <= np.pi, phase, np.pi - np.mod(np.pi - phase, TWO_PI))
    return np.where(reduced <= -np.pi, np.pi, reduced)


@dataclass(frozen=True)
class PhaseMap:
    """Phase on a plane, held in (-pi, pi] and zero outside the aperture."""

    dx: float
    phase: np.ndarray
    aperture: np.ndarray

    def __post_init__(self):
        aperture = np.array(self.aperture, dtype=bool)
        phase = np.where(aperture, principal(self.phase), 0.0)
        if phase.shape != aperture.shape:
            raise GridError("phase and aperture differ in shape")
        for arr in (phase, aperture):
            arr.setflags(write=False)
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "aperture", aperture)

    @property
    def shape(self):
        return self.phase.shape

    def conjugate(self) -> "PhaseMap":
        return PhaseMap(self.dx, -self.phase, self.aperture)

    def transmission(self) -> np.ndarray:
        return np.where(self.aperture, np.exp(1j * self.phase), 0)


@dataclass(frozen=True)
class ThicknessMap:
    dx: float
    thickness: np.ndarray
    t_max: float

    def __post_init__(self):
        t = np.array(self.thickness, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + 1e-12)):
            raise ValueError("thickness must lie in [0, t_max]")
        t.setflags(write=False)
        object.__setattr__(self, "thickness", t)

    @property
    def shape(self):
        return self.thickness.shape


def retardation(field_phase: PhaseMap) -> PhaseMap:
    """Phase map to cut so the lens imprints ``field_phase``."""
    return field_phase.conjugate()


# -- IASA -------------------------------------------------------------------------

def _iasa_cycle(plan: ASPlan, field: np.ndarray, q0: np.ndarray, src_amp: np.ndarray, d: float):
    Q = angular_spectrum(plan, PlaneField.from_array(field, plan.dx), d).values
    amp = np.abs(Q)
    scale = np.vdot(q0, amp).real / np.vdot(q0, q0).real
    Q = scale * q0 * np.exp(1j * np.angle(Q))
    back = angular_spectrum(plan, PlaneField.from_array(Q, plan.dx), -d).values
    return src_amp * np.exp(1j * np.angle(back)), amp


def iasa_design(q0, source_amplitude, d: float, n_iter: int, plan: ASPlan,
                initial_phase=None, history: Optional[list] = None) -> PhaseMap:
    """Iterative angular-spectrum phase retrieval between the hologram plane
    and a target plane at distance ``d``.

    ``source_amplitude`` is the illuminating amplitude on the hologram plane;
    its support is the aperture. Both propagations drop evanescent waves. If
    ``history`` is a list, the correlation of each iterate's propagated
    amplitude with ``q0`` is appended to it.
    """
    q0 = np.asarray(getattr(q0, "values", q0), dtype=float)
    src_amp = np.asarray(getattr(source_amplitude, "values", source_amplitude), dtype=float)
    if d <= 0 or n_iter < 1:
        raise ValueError("need d > 0 and n_iter >= 1")
    if q0.shape != plan.shape or src_amp.shape != plan.shape:
        raise GridError("target, source amplitude and plan shapes must agree")
    if not np.any(src_amp):
        raise ValueError("source amplitude is zero everywhere")
    plan = replace(plan, evanescent_policy="zero")
    phase0 = np.zeros(plan.shape) if initial_phase is None else np.asarray(initial_phase, dtype=float)
    field = src_amp * np.exp(1j * phase0)
    for _ in range(n_iter):
        field, amp = _iasa_cycle(plan, field, q0, src_amp, d)
        if history is not None:
            history.append(correlation(amp, q0))
    if history is not None:
        amp = np.abs(angular_spectrum(plan, PlaneField.from_array(field, plan.dx), d).values)
        history.append(correlation(amp, q0))
    return PhaseMap(plan.dx, np.angle(field), src_amp > 0)


# -- phase <-> thickness ----------------------------------------------------------

def _dk(c_lens: float, c0: float, f: float) -> float:
    if c_lens == c0:
        raise ValueError("lens and background sound speeds are equal; no phase contrast")
    return TWO_PI * f / c0 - TWO_PI * f / c_lens


def phase_to_thickness(phase: PhaseMap, c_lens: float, c0: float, f: float, t_max: float) -> ThicknessMap:
    dk = _dk(c_lens, c0, f)
    if t_max < TWO_PI / abs(dk):
        raise ValueError(f"t_max={t_max:.4g} m cannot cover a full 2 pi (needs {TWO_PI / abs(dk):.4g} m)")
    t = wrap(np.sign(dk) * phase.phase) / abs(dk)
    t = np.where(phase.aperture, t, 0.0)
    return ThicknessMap(phase.dx, np.minimum(t, t_max), t_max)


def thickness_to_phase(t: ThicknessMap, c_lens: float, c0: float, f: float, aperture=None) -> PhaseMap:
    dk = _dk(c_lens, c0, f)
    aperture = np.ones(t.shape, bool) if aperture is None else aperture
    return PhaseMap(t.dx, wrap(dk * t.thickness), aperture)


def column_counts(t: ThicknessMap, dx: float) -> np.ndarray:
    return np.rint(t.thickness / dx).astype(int)


def thickness_to_patch(t: ThicknessMap, offset, n_axial: int, lens: Material, background: Material) -> LensPatch:
    """Voxelised column lens: voxel ``j`` along the axis (counted from the
    input face) holds lens material where ``j < round(t / dx)``."""
    dx = t.dx
    if n_axial < 2 or round(t.t_max / dx) < 2:
        raise GridError("grid too coarse: the lens slab needs at least 2 voxels")
    counts = np.minimum(column_counts(t, dx), n_axial)
    depth = np.arange(n_axial).reshape((n_axial,) + (1,) * counts.ndim)
    inside = depth < counts[None]
    props = [np.where(inside, getattr(lens, n), getattr(background, n)) for n in ("c", "rho", "alpha")]
    return LensPatch(tuple(int(o) for o in offset), *props)


def thickness_to_medium(t: ThicknessMap, base: Medium, offset, n_axial: int, lens: Material,
                        background: Optional[Material] = None) -> Medium:
    if background is None:
        sl = tuple(slice(o, o + 1) for o in offset)
        background = Material(float(base.c[sl].ravel()[0]), float(base.rho[sl].ravel()[0]),
                              float(base.alpha[sl].ravel()[0]))
    return embed_patch(base, thickness_to_patch(t, offset, n_axial, lens, background))


# -- phase conjugation ---------------------------------------------------------------

def phase_conjugate_design(q0, medium: Medium, frequency: float, hologram_index: int, target_index: int,
                           aperture, settings: HelmholtzSettings = HelmholtzSettings(),
                           target_phase=None) -> PhaseMap:
    """Back-propagate the target through ``medium`` and conjugate.

    The conjugated target field is injected as a plane source at
    ``target_index``; the returned map is the conjugate of the phase found
    on the plane ``hologram_index``.
    """
    q0 = np.asarray(getattr(q0, "values", q0), dtype=float)
    target = q0 * (np.exp(1j * np.asarray(target_phase)) if target_phase is not None else 1)
    grid = medium.grid
    if q0.shape != grid.transverse_shape:
        raise GridError("target shape does not match the grid's transverse shape")
    src = SourcePlane(0, target_index, np.ones(q0.shape, bool), 1.0, 0.0, frequency,
                      weights=np.conj(target))
    op = HelmholtzOperator(medium, src.omega, settings)
    u = op.solve(op.rhs(source_term(medium, src)))
    plane = np.take(op.sqrt_rho * u, hologram_index, axis=0)
    return PhaseMap(grid.dx, -np.angle(plane), np.asarray(aperture, bool))


def piston_amplitude(shape, dx: float, diameter: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * disc_mask(shape, dx, diameter).astype(float)
