"""The one finite-difference stencil shared by the solver and the oracles.

Second derivative, fourth-order accurate, periodic wrap:

    d2u/dx2 ~ sum_m COEFFS[m] * u[i + OFFSETS[m]] / dx**2

Its Fourier symbol on an n-point periodic axis is real and nonpositive,
which the Born iteration relies on.
"""
import numpy as np

OFFSETS = (-2, -1, 0, 1, 2)
COEFFS = (-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0)


def symbol(theta):
    """Stencil eigenvalue (times dx**2) for phase advance ``theta`` per cell."""
    theta = np.asarray(theta, dtype=float)
    return sum(c * np.cos(m * theta) for m, c in zip(OFFSETS, COEFFS))


def symbol_derivative(theta):
    theta = np.asarray(theta, dtype=float)
    return sum(-m * c * np.sin(m * theta) for m, c in zip(OFFSETS, COEFFS))


def discrete_wavenumber(k, dx):
    """Wavenumber of the propagating mode of ``u'' + k^2 u = 0`` on the
    stencil, found by bisection on the monotone branch of the symbol."""
    target = -(k * dx) ** 2
    if target < symbol(np.pi):
        raise ValueError(f"k*dx = {k * dx:.3f} is beyond the stencil's Nyquist branch")
    lo, hi = 0.0, np.pi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if symbol(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / dx


def laplacian_symbol(shape, dx):
    """Fourier symbol of the periodic stencil Laplacian on ``shape``, laid out
    like ``numpy.fft.fftn`` output."""
    total = np.zeros(shape)
    for axis, n in enumerate(shape):
        theta = 2 * np.pi * np.fft.fftfreq(n)
        s = symbol(theta) / dx**2
        view = [1] * len(shape)
        view[axis] = n
        total = total + s.reshape(view)
    return total


def apply_laplacian(u, dx):
    """Periodic stencil Laplacian by explicit shifts (no FFT round-off)."""
    out = np.zeros_like(u)
    for axis in range(u.ndim):
        for m, c in zip(OFFSETS, COEFFS):
            out += c * np.roll(u, -m, axis=axis)
    return out / dx**2
