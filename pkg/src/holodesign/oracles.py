"""Brute-force and closed-form references for testing the fast paths.

Nothing here calls the solver or the adjoint code. The dense system is
assembled cell by cell from the pressure form of the discrete operator
documented in :mod:`holodesign.helmholtz`; the stencil coefficients come
from :mod:`holodesign.stencil`, which both sides share on purpose.
"""
from __future__ import annotations

import warnings
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import hankel1

from . import stencil
from .grid import ComplexField, Grid, Medium, PlaneField, SourcePlane

MAX_DENSE_CELLS = 4096


class OracleError(RuntimeError):
    pass


class DenseSystem(NamedTuple):
    matrix: np.ndarray
    rhs: np.ndarray


def _rim_profile(grid: Grid, order: int, strength: float, axes=None) -> np.ndarray:
    w = grid.absorber_width
    out = np.zeros(grid.shape)
    if w == 0:
        return out
    for idx in np.ndindex(*grid.shape):
        depths = [max(w - i, 0, i - (n - 1 - w))
                  for axis, (i, n) in enumerate(zip(idx, grid.shape)) if axes is None or axes[axis]]
        out[idx] = strength * (max(depths, default=0) / w) ** order
    return out


def _plane_source(medium: Medium, source: SourcePlane) -> np.ndarray:
    grid = medium.grid
    sl = [slice(None)] * grid.ndim
    sl[source.axis] = source.index
    c_src = float(np.mean(medium.c[tuple(sl)][source.aperture_mask]))
    theta = stencil.discrete_wavenumber(source.omega / c_src, grid.dx) * grid.dx
    drive = -1j * source.complex_amplitude * abs(stencil.symbol_derivative(theta)) / grid.dx**2
    if source.weights is not None:
        drive = drive * source.weights
    s = np.zeros(grid.shape, dtype=complex)
    s[tuple(sl)] = np.where(source.aperture_mask, drive, 0)
    return s


def assemble_dense(medium: Medium, source: SourcePlane, absorber_order: int = 2,
                   absorber_strength: float = 3.0, absorber_axes=None) -> DenseSystem:
    """Pressure-form matrix ``A_P`` and right-hand side ``-s / rho``."""
    grid = medium.grid
    n = grid.size
    if n > MAX_DENSE_CELLS:
        raise OracleError(f"dense oracle limited to {MAX_DENSE_CELLS} cells, got {n}")
    omega = source.omega
    rho = medium.rho
    rim = _rim_profile(grid, absorber_order, absorber_strength, absorber_axes)
    A = np.zeros((n, n), dtype=complex)
    flat = np.arange(n).reshape(grid.shape)
    inv_dx2 = 1.0 / grid.dx**2
    for idx in np.ndindex(*grid.shape):
        row = flat[idx]
        k = omega / medium.c[idx] + 1j * medium.alpha[idx]
        diag = (k * k + 1j * rim[idx] * (omega / medium.c[idx]) ** 2) / rho[idx]
        for axis in range(grid.ndim):
            for m, c in zip(stencil.OFFSETS, stencil.COEFFS):
                if m == 0:
                    continue
                nb = list(idx)
                nb[axis] = (nb[axis] + m) % grid.shape[axis]
                nb = tuple(nb)
                coupling = c * inv_dx2 / np.sqrt(rho[idx] * rho[nb])
                A[row, flat[nb]] += coupling
                diag -= coupling
        A[row, row] += diag
    rhs = -(_plane_source(medium, source) / rho).ravel()
    return DenseSystem(A, rhs)


def dense_direct_solve(medium: Medium, source: SourcePlane, absorber_order: int = 2,
                       absorber_strength: float = 3.0, absorber_axes=None) -> ComplexField:
    system = assemble_dense(medium, source, absorber_order, absorber_strength, absorber_axes)
    if not np.any(system.rhs):
        return ComplexField(medium.grid, np.zeros(medium.grid.shape, dtype=complex))
    lu, piv = sla.lu_factor(system.matrix, check_finite=True)
    if np.any(np.diag(lu) == 0):
        raise OracleError("dense operator is singular")
    anorm = np.linalg.norm(system.matrix, 1)
    rcond, info = sla.lapack.zgecon(lu, anorm, norm="1")
    if rcond < 1e-13:
        warnings.warn(f"dense operator is ill-conditioned (rcond={rcond:.2e})")
    x = sla.lu_solve((lu, piv), system.rhs)
    return ComplexField(medium.grid, x.reshape(medium.grid.shape))


def dense_apply(medium: Medium, source: SourcePlane, pressure: np.ndarray, **absorber) -> np.ndarray:
    system = assemble_dense(medium, source, **absorber)
    return (system.matrix @ pressure.ravel()).reshape(medium.grid.shape)


# -- finite differences ----------------------------------------------------------------

def fd_gradient(loss_fn, gamma: np.ndarray, probes: Sequence[tuple], h: float) -> np.ndarray:
    """Central differences of ``loss_fn(gamma)`` at ``probes``."""
    if h <= 0:
        raise ValueError("h must be positive")
    gamma = np.asarray(gamma, dtype=float)
    out = []
    for p in probes:
        p = tuple(p)
        plus, minus = gamma.copy(), gamma.copy()
        plus[p] += h
        minus[p] -= h
        out.append((loss_fn(plus) - loss_fn(minus)) / (2 * h))
    return np.array(out)


def design_fd_gradient(design, scenario, cfg, probes, h: float) -> np.ndarray:
    """Finite-difference gradient of the scenario loss with respect to gamma.
    Only the forward model is used."""
    from .objective import loss
    from .scenario import simulate_design

    def loss_fn(gamma):
        return loss(simulate_design(scenario, design.with_gamma(gamma)).amplitude, scenario.target, cfg)

    for p in probes:
        if len(p) != design.gamma.ndim or any(not 0 <= i < n for i, n in zip(p, design.gamma.shape)):
            raise ValueError(f"probe {p} outside the lens region")
    return fd_gradient(loss_fn, design.gamma, probes, h)


FD_STEPS = (1e-2, 1e-3, 1e-4)


def plateau_index(estimates) -> int:
    """Index of the step whose estimate best agrees with the next smaller
    step, the plateau between truncation and round-off error."""
    gaps = np.abs(np.diff(np.asarray(estimates)))
    return int(np.argmin(gaps)) + 1


def swept_fd_gradient(design, scenario, cfg, probes, steps: Sequence[float] = FD_STEPS):
    """Finite-difference gradient at ``probes`` with a per-probe step picked
    from ``steps`` by :func:`plateau_index`. Returns (values, steps used)."""
    if len(steps) < 2:
        raise ValueError("the step sweep needs at least two steps")
    table = np.array([design_fd_gradient(design, scenario, cfg, probes, h) for h in steps])
    chosen = [plateau_index(table[:, j]) for j in range(len(probes))]
    return np.array([table[k, j] for j, k in enumerate(chosen)]), [steps[k] for k in chosen]


# -- closed forms ---------------------------------------------------------------------

def analytic_field(kind: str, grid: Grid, c0: float, f: float, source_location) -> ComplexField:
    """Lossless free-space fields on the grid's cell centres.

    ``plane``: exp(ik (z - z0)) along axis 0 with ``source_location`` the
    index of the z0 plane. ``point2d``: (i/4) H0(kr). ``point3d``:
    exp(ikr) / (4 pi r). Point kinds are set to zero at r = 0.
    """
    k = 2 * np.pi * f / c0
    coords = np.meshgrid(*[np.arange(n) * grid.dx for n in grid.shape], indexing="ij")
    if kind == "plane":
        z0 = np.atleast_1d(source_location)[0] * grid.dx
        return ComplexField(grid, np.exp(1j * k * (coords[0] - z0)))
    if kind not in ("point2d", "point3d"):
        raise ValueError(f"unsupported analytic field kind {kind!r}")
    loc = np.asarray(source_location, dtype=float) * grid.dx
    if kind == "point2d" and grid.ndim != 2 or kind == "point3d" and grid.ndim != 3:
        raise ValueError(f"{kind} needs a {kind[-2]}D grid")
    r = np.sqrt(sum((x - x0) ** 2 for x, x0 in zip(coords, loc)))
    out = np.zeros(grid.shape, dtype=complex)
    nz = r > 0
    if kind == "point2d":
        out[nz] = 0.25j * hankel1(0, k * r[nz])
    else:
        out[nz] = np.exp(1j * k * r[nz]) / (4 * np.pi * r[nz])
    return ComplexField(grid, out)


DEEP_DECAY = 30.0


class Layer(NamedTuple):
    c: float
    rho: float
    thickness: float
    alpha: float = 0.0


def transfer_coefficients(kt2, layers: Sequence[Layer], f: float, c0: float, rho0: float):
    """Plane-wave transmission and reflection through a layer stack embedded
    in the background, per transverse wavenumber squared ``kt2``.

    Transmission is referenced to the exit face of the stack. Components
    that decay by more than ``exp(-DEEP_DECAY)`` inside the stack are
    returned as T = 0, R = 1, which keeps the matrix products finite.
    """
    omega = 2 * np.pi * f
    kt2 = np.asarray(kt2, dtype=float)
    # exactly grazing background components make every admittance vanish;
    # a relative nudge of 1e-12 picks the continuous limit
    kt2 = np.where(kt2 == (omega / c0) ** 2, kt2 * (1 - 1e-12), kt2)

    def kz_of(c, alpha=0.0):
        k = omega / c + 1j * alpha
        return np.sqrt((k * k - kt2).astype(complex))  # principal branch: Im >= 0

    kz0 = kz_of(c0)
    Y0 = kz0 / (omega * rho0)
    M11 = np.ones_like(kz0)
    M12 = np.zeros_like(kz0)
    M21 = np.zeros_like(kz0)
    M22 = np.ones_like(kz0)
    decay = sum(np.imag(kz_of(layer.c, layer.alpha)) * layer.thickness for layer in layers)
    deep = decay > DEEP_DECAY
    for layer in layers:
        kz = np.where(deep, 0.0, kz_of(layer.c, layer.alpha))
        Y = kz / (omega * layer.rho)
        cs, sn = np.cos(kz * layer.thickness), np.sin(kz * layer.thickness)
        with np.errstate(invalid="ignore", divide="ignore"):
            L12 = np.where(Y != 0, 1j * sn / np.where(Y != 0, Y, 1), 1j * layer.thickness * omega * layer.rho)
        L11, L21, L22 = cs, 1j * Y * sn, cs
        M11, M12, M21, M22 = (L11 * M11 + L12 * M21, L11 * M12 + L12 * M22,
                              L21 * M11 + L22 * M21, L21 * M12 + L22 * M22)
    a = Y0 * M11 - M21
    b = Y0 * M22 - Y0**2 * M12
    R = (b - a) / (a + b)
    T = M11 * (1 + R) + M12 * Y0 * (1 - R)
    return np.where(deep, 0.0, T), np.where(deep, 1.0, R)


def layered_transfer(q_in: PlaneField, layers: Sequence[Layer], f: float, c0: float, rho0: float,
                     pad: int = 1) -> PlaneField:
    """Transmit a plane field through homogeneous layers (transfer matrices
    applied per spatial frequency). ``pad`` zero-pads each axis by that
    factor to suppress periodic wrap-around."""
    if pad < 1:
        raise ValueError("pad must be a positive integer")
    work_shape = tuple(pad * n for n in q_in.shape)
    work = np.zeros(work_shape, dtype=complex)
    crop = tuple(slice(0, n) for n in q_in.shape)
    work[crop] = q_in.values
    ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, q_in.dx) for n in work_shape], indexing="ij")
    kt2 = sum(kk**2 for kk in ks)
    T, _ = transfer_coefficients(kt2, layers, f, c0, rho0)
    out = np.fft.ifftn(T * np.fft.fftn(work))[crop]
    return PlaneField(q_in.shape, q_in.dx, out)
