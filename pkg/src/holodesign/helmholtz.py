"""Helmholtz solver for heterogeneous lossy media with varying density.

Continuous model (time convention exp(-i omega t), outgoing waves exp(+ikr)):

    div(rho^-1 grad P) + (k^2 / rho) P = -s / rho,    k = omega / c + i alpha

The solver works with the transformed variable u = P / sqrt(rho), which turns
the density term into a potential:

    L u + kappa2 u = -b,
    kappa2 = k^2 - W + i * absorber,   W = sqrt(rho) * L(rho^-1/2),   b = s / sqrt(rho)

where L is the periodic fourth-order stencil Laplacian of ``stencil.py``.
Multiplying back by rho^-1/2 gives the equivalent pressure form used by the
dense oracle,

    sum_{m != 0} c_m (P[i+m] - P[i]) / (dx^2 sqrt(rho_i rho_{i+m})) + (kappa2_i + W_i) / rho_i P_i = -s_i / rho_i,

which for the three-point stencil is the usual conservative scheme with
geometric-mean face densities. The absorbing rim adds
``i * strength * k_local^2 * (depth / width)**order`` to kappa2.

The discrete operator is complex symmetric (L is real symmetric), so the
adjoint solve is a conjugated forward solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import stencil
from .grid import ComplexField, GridError, Medium, MediumError, SourcePlane

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """The iterative solve stopped above tolerance."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class InvalidMedium(ValueError):
    pass


@dataclass(frozen=True)
class HelmholtzSettings:
    max_iterations: int = 20000
    tolerance: float = 1e-8
    absorber_order: int = 2
    absorber_strength: float = 3.0
    method: str = "auto"            # auto | direct | born | gmres
    absorber_axes: Optional[tuple[bool, ...]] = None
    direct_max_cells: int = 250_000
    gmres_restart: int = 40

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError(f"tolerance must lie in (0, 1), got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.method not in ("auto", "direct", "born", "gmres"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.absorber_strength < 0 or self.absorber_order < 0:
            raise ValueError("absorber strength and order must be nonnegative")


def absorber_profile(shape, width, order, strength, axes=None) -> np.ndarray:
    """Dimensionless absorbing-rim profile, zero in the interior and rising to
    ``strength`` at the outer edge of each side. Where rims of several axes
    overlap (edges and corners) the largest value is kept, so the profile
    never exceeds ``strength``."""
    prof = np.zeros(shape)
    if width == 0 or strength == 0:
        return prof
    if axes is None:
        axes = (True,) * len(shape)
    for axis, n in enumerate(shape):
        if not axes[axis]:
            continue
        i = np.arange(n)
        depth = np.maximum(width - i, 0) + np.maximum(i - (n - 1 - width), 0)
        ramp = strength * (depth / width) ** order
        view = [1] * len(shape)
        view[axis] = n
        prof = np.maximum(prof, ramp.reshape(view))
    return prof


def complex_wavenumber_sq(medium: Medium, omega: float) -> np.ndarray:
    k = omega / medium.c + 1j * medium.alpha
    return k * k


def density_potential(rho: np.ndarray, dx: float) -> np.ndarray:
    a = rho ** -0.5
    return np.sqrt(rho) * stencil.apply_laplacian(a, dx)


def source_strength(medium: Medium, source: SourcePlane) -> complex:
    """Per-cell source value giving a unit-normalised plane wave of the source
    amplitude along the source axis in the surrounding medium."""
    sl = [slice(None)] * medium.grid.ndim
    sl[source.axis] = source.index
    c_src = float(np.mean(medium.c[tuple(sl)][source.aperture_mask]))
    dx = medium.grid.dx
    theta = stencil.discrete_wavenumber(source.omega / c_src, dx) * dx
    return -1j * source.complex_amplitude * abs(stencil.symbol_derivative(theta)) / dx**2


def source_term(medium: Medium, source: SourcePlane) -> np.ndarray:
    """The right-hand side s of the pressure equation (zero off the plane)."""
    source.validate_on(medium.grid)
    s = np.zeros(medium.grid.shape, dtype=complex)
    sl = [slice(None)] * medium.grid.ndim
    sl[source.axis] = source.index
    drive = source_strength(medium, source)
    if source.weights is not None:
        drive = drive * source.weights
    s[tuple(sl)] = np.where(source.aperture_mask, drive, 0)
    return s


class HelmholtzOperator:
    """Matrix-free discrete operator in the transformed variable plus the
    machinery to invert it."""

    def __init__(self, medium: Medium, omega: float, settings: HelmholtzSettings = HelmholtzSettings()):
        if not isinstance(medium, Medium):
            raise InvalidMedium("expected a Medium")
        self.medium = medium
        self.grid = medium.grid
        self.omega = float(omega)
        self.settings = settings
        g = self.grid
        self.sqrt_rho = np.sqrt(medium.rho)
        self.k2 = complex_wavenumber_sq(medium, omega)
        self.absorber = absorber_profile(g.shape, g.absorber_width, settings.absorber_order,
                                         settings.absorber_strength, settings.absorber_axes)
        self.W = density_potential(medium.rho, g.dx)
        self.kappa2 = self.k2 - self.W + 1j * self.absorber * (omega / medium.c) ** 2
        self._lu = None
        self._matrix = None
        self.method = self._pick_method()

    def _pick_method(self) -> str:
        m = self.settings.method
        if m != "auto":
            return m
        limit = self.settings.direct_max_cells if self.grid.ndim == 2 else self.settings.direct_max_cells // 8
        return "direct" if self.grid.size <= limit else "gmres"

    # -- operator application -------------------------------------------------
    def apply(self, u: np.ndarray) -> np.ndarray:
        return stencil.apply_laplacian(u, self.grid.dx) + self.kappa2 * u

    def rhs(self, s: np.ndarray) -> np.ndarray:
        return s / self.sqrt_rho

    def residual(self, u: np.ndarray, b: np.ndarray) -> float:
        nb = np.linalg.norm(b)
        if nb == 0:
            return 0.0 if not np.any(u) else np.inf
        return float(np.linalg.norm(self.apply(u) + b) / nb)

    def matrix(self) -> sp.csc_matrix:
        if self._matrix is None:
            g = self.grid
            eye = [sp.identity(n, format="csr") for n in g.shape]
            L = None
            for axis, n in enumerate(g.shape):
                d1 = _periodic_second_difference(n, g.dx)
                term = d1
                for other in range(g.ndim):
                    if other < axis:
                        term = sp.kron(eye[other], term, format="csr")
                    elif other > axis:
                        term = sp.kron(term, eye[other], format="csr")
                L = term if L is None else L + term
            self._matrix = (L + sp.diags(self.kappa2.ravel())).tocsc()
        return self._matrix

    # -- solves ---------------------------------------------------------------
    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return u with ``L u + kappa2 u = -b``."""
        if not np.any(b):
            return np.zeros(self.grid.shape, dtype=complex)
        if self.method == "direct":
            return self._solve_direct(b)
        if self.method == "born":
            try:
                return self._solve_born(b)
            except NonConvergence as err:
                log.info("Born iteration stalled (%s); falling back to GMRES", err)
                return self._solve_gmres(b)
        return self._solve_gmres(b)

    def solve_adjoint(self, g: np.ndarray) -> np.ndarray:
        """Return v with ``A^H v = g`` where ``A = L + diag(kappa2)``."""
        # A is complex symmetric: A^H = conj(A), and A u = -b means u = solve(b) with b = -rhs.
        return np.conj(self.solve(-np.conj(g)))

    def _solve_direct(self, b):
        if self._lu is None:
            self._lu = spla.splu(self.matrix())
        u = self._lu.solve(-b.ravel().astype(complex)).reshape(self.grid.shape)
        res = self.residual(u, b)
        if res > self.settings.tolerance:
            raise NonConvergence(f"direct solve residual {res:.3e} above tolerance", [res])
        return u

    def _born_parts(self):
        re = self.kappa2.real
        k0sq = 0.5 * (re.min() + re.max())
        eps = 1.01 * float(np.max(np.abs(self.kappa2 - k0sq)))
        eps = max(eps, 1e-3 * abs(k0sq))
        V = self.kappa2 - k0sq - 1j * eps
        green = 1.0 / (-stencil.laplacian_symbol(self.grid.shape, self.grid.dx) - k0sq - 1j * eps)
        return V, green, eps

    def _solve_born(self, b):
        V, green, eps = self._born_parts()
        gamma = 1j * V / eps
        G = lambda x: sfft.ifftn(green * sfft.fftn(x), overwrite_x=True)
        u = gamma * G(b)
        history = []
        tol = self.settings.tolerance
        check_every = 10
        for it in range(1, self.settings.max_iterations + 1):
            u = u - gamma * (u - G(V * u + b))
            if it % check_every == 0:
                res = self.residual(u, b)
                history.append(res)
                if res <= tol:
                    return u
                if len(history) > 20 and res > 0.999 * history[-20]:
                    raise NonConvergence("Born iteration is not contracting", history)
        raise NonConvergence(
            f"Born iteration reached {self.settings.max_iterations} iterations at residual {history[-1]:.3e}",
            history)

    def _solve_gmres(self, b):
        """GMRES on the Born-preconditioned system (1 - M) u = gamma G b."""
        V, green, eps = self._born_parts()
        gamma = 1j * V / eps
        shape = self.grid.shape
        G = lambda x: sfft.ifftn(green * sfft.fftn(x), overwrite_x=True)

        def matvec(x):
            x = x.reshape(shape)
            return (gamma * (x - G(V * x))).ravel()

        op = spla.LinearOperator((self.grid.size, self.grid.size), matvec=matvec, dtype=complex)
        rhs = (gamma * G(b)).ravel()
        history = []
        tol = self.settings.tolerance
        u0 = None
        budget = self.settings.max_iterations
        inner_tol = tol * 0.3
        while budget > 0:
            sol, info = spla.gmres(op, rhs, x0=u0, rtol=inner_tol, atol=0.0,
                                   restart=self.settings.gmres_restart,
                                   maxiter=max(1, min(budget, 200) // self.settings.gmres_restart))
            budget -= max(1, min(budget, 200) // self.settings.gmres_restart) * self.settings.gmres_restart
            u = sol.reshape(shape)
            res = self.residual(u, b)
            history.append(res)
            if res <= tol:
                return u
            u0 = sol
            if info == 0:
                inner_tol *= 0.1
        raise NonConvergence(f"GMRES stopped at residual {history[-1]:.3e}", history)


def _periodic_second_difference(n: int, dx: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for m, c in zip(stencil.OFFSETS, stencil.COEFFS):
        i = np.arange(n)
        rows.append(i)
        cols.append((i + m) % n)
        vals.append(np.full(n, c / dx**2))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _check_inputs(medium: Medium, source: SourcePlane):
    if not isinstance(medium, Medium):
        raise InvalidMedium("expected a Medium")
    if source is not None:
        try:
            source.validate_on(medium.grid)
        except GridError as err:
            raise GridError(f"source does not fit the medium grid: {err}") from err


def solve_helmholtz(medium: Medium, source: SourcePlane,
                    settings: HelmholtzSettings = HelmholtzSettings()) -> ComplexField:
    """Steady-state pressure field radiated by ``source`` through ``medium``."""
    _check_inputs(medium, source)
    op = HelmholtzOperator(medium, source.omega, settings)
    s = source_term(medium, source)
    u = op.solve(op.rhs(s))
    return ComplexField(medium.grid, op.sqrt_rho * u)


def dense_residual(medium: Medium, source: SourcePlane, field: ComplexField,
                   settings: HelmholtzSettings = HelmholtzSettings()) -> float:
    """Relative L2 residual ``|A u + b| / |b|`` of ``field`` in the transformed
    variable."""
    _check_inputs(medium, source)
    if field.grid.shape != medium.grid.shape or field.grid.dx != medium.grid.dx:
        raise GridError("field and medium live on different grids")
    op = HelmholtzOperator(medium, source.omega, settings)
    b = op.rhs(source_term(medium, source))
    return op.residual(field.values / op.sqrt_rho, b)
