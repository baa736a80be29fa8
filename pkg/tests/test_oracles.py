import numpy as np
import pytest
from hypothesis import given, strategies as st

from holodesign.grid import Medium, PlaneField, disc_source, homogeneous_medium, make_grid
from holodesign.helmholtz import HelmholtzOperator, HelmholtzSettings, dense_residual
from holodesign.oracles import (DEEP_DECAY, MAX_DENSE_CELLS, Layer, OracleError, analytic_field, assemble_dense,
                                dense_apply, dense_direct_solve, fd_gradient, layered_transfer, plateau_index,
                                transfer_coefficients)
from holodesign.propagation import ASPlan, angular_spectrum

from conftest import C0, F0, WAVELENGTH

DX = WAVELENGTH / 6


def lumpy_medium(n=24, seed=0):
    grid = make_grid((n, n), DX, 5)
    rng = np.random.default_rng(seed)
    c = C0 + 300 * rng.random(grid.shape)
    rho = 1000 + 200 * rng.random(grid.shape)
    return Medium(grid, c, rho, 5.0 * rng.random(grid.shape))


class TestDense:
    def test_size_guard(self):
        grid = make_grid((65, 64), DX, 5)
        medium = homogeneous_medium(grid, C0, 1000.0)
        assert grid.size > MAX_DENSE_CELLS
        with pytest.raises(OracleError):
            assemble_dense(medium, disc_source(grid, 8, 20 * DX, F0))

    def test_zero_source(self):
        medium = lumpy_medium(16)
        src = disc_source(medium.grid, 7, 4 * DX, F0, amplitude=0.0)
        assert not np.any(dense_direct_solve(medium, src).values)

    def test_matches_transformed_operator(self, rng):
        """The pressure-form matrix equals the transformed operator after the
        change of variable, applied to random complex fields."""
        medium = lumpy_medium(16)
        src = disc_source(medium.grid, 7, 4 * DX, F0)
        op = HelmholtzOperator(medium, src.omega, HelmholtzSettings())
        x = rng.standard_normal(medium.grid.shape) + 1j * rng.standard_normal(medium.grid.shape)
        expected = op.apply(x / op.sqrt_rho) / op.sqrt_rho
        assert np.allclose(dense_apply(medium, src, x), expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())

    def test_dense_solution_has_tiny_residual(self):
        medium = lumpy_medium(24, seed=3)
        src = disc_source(medium.grid, 7, 8 * DX, F0)
        assert dense_residual(medium, src, dense_direct_solve(medium, src)) <= 1e-10


class TestFiniteDifferences:
    def test_central_difference_is_second_order(self):
        """Error of the central difference of a cubic falls as h squared."""
        def f(g):
            return float(np.sum(g**3))

        gamma = np.array([0.7, -1.3])
        exact = 3 * gamma**2
        errors = [abs(fd_gradient(f, gamma, [(0,), (1,)], h) - exact).max() for h in (1e-1, 5e-2, 2.5e-2)]
        ratios = np.array(errors[:-1]) / np.array(errors[1:])
        assert np.allclose(ratios, 4.0, rtol=1e-3)

    def test_exact_for_quadratics(self):
        gamma = np.array([[0.5, 2.0], [-1.0, 3.0]])
        fd = fd_gradient(lambda g: float(np.sum(g * g)), gamma, [(0, 1), (1, 0)], 0.1)
        assert np.allclose(fd, [4.0, -2.0], rtol=1e-12)

    def test_rejects_non_positive_step(self):
        with pytest.raises(ValueError):
            fd_gradient(np.sum, np.zeros(2), [(0,)], 0.0)

    def test_plateau_index(self):
        assert plateau_index([1.3, 1.01, 1.0099, 1.2]) == 2
        assert plateau_index([5.0, 1.0, 1.0]) == 2


class TestAnalyticField:
    def test_plane_wave(self):
        grid = make_grid((10, 8), DX)
        field = analytic_field("plane", grid, C0, F0, 3).values
        assert field[3, 0] == 1.0
        k = 2 * np.pi * F0 / C0
        assert np.allclose(field[:, 2], np.exp(1j * k * (np.arange(10) - 3) * DX), rtol=1e-14)

    def test_point_sources(self):
        k = 2 * np.pi * F0 / C0
        f2 = analytic_field("point2d", make_grid((9, 9), DX), C0, F0, (4, 4)).values
        assert f2[4, 4] == 0
        from scipy.special import hankel1
        assert f2[4, 7] == pytest.approx(0.25j * hankel1(0, 3 * k * DX), rel=1e-14)
        f3 = analytic_field("point3d", make_grid((8, 8, 8), DX), C0, F0, (2, 2, 2)).values
        assert f3[2, 2, 4] == pytest.approx(np.exp(2j * k * DX) / (8 * np.pi * DX), rel=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            analytic_field("point3d", make_grid((5, 5), DX), C0, F0, (2, 2))
        with pytest.raises(ValueError):
            analytic_field("spherical", make_grid((5, 5), DX), C0, F0, (2, 2))


KT2 = np.linspace(0, 0.99, 40) * (2 * np.pi * F0 / C0) ** 2


class TestLayeredTransfer:
    def test_background_layer_is_pure_propagation(self):
        T, R = transfer_coefficients(KT2, [Layer(C0, 1000.0, 3e-3)], F0, C0, 1000.0)
        kz = np.sqrt((2 * np.pi * F0 / C0) ** 2 - KT2)
        assert np.allclose(T, np.exp(1j * kz * 3e-3), atol=1e-12)
        assert np.allclose(R, 0, atol=1e-12)

    def test_no_layers_is_identity(self):
        T, R = transfer_coefficients(KT2, [], F0, C0, 1000.0)
        assert np.allclose(T, 1) and np.allclose(R, 0)

    @given(st.floats(1200, 3000), st.floats(800, 2000), st.floats(1e-4, 3e-3), st.floats(0, 1))
    def test_splitting_a_layer_changes_nothing(self, c, rho, thickness, split):
        """Tolerance allows for the conditioning of the layer matrix near the
        slab's own cutoff, where its admittance is close to zero."""
        whole = transfer_coefficients(KT2, [Layer(c, rho, thickness)], F0, C0, 1000.0)
        parts = transfer_coefficients(KT2, [Layer(c, rho, split * thickness), Layer(c, rho, (1 - split) * thickness)],
                                      F0, C0, 1000.0)
        assert np.allclose(whole, parts, rtol=1e-7, atol=1e-7)

    @given(st.floats(1200, 3000), st.floats(1e-4, 3e-3))
    def test_lossless_energy_balance(self, c, thickness):
        """Propagating components: |T|^2 + |R|^2 = 1 for a lossless slab."""
        kt2 = KT2[(KT2 < (2 * np.pi * F0 / c) ** 2 * 0.95)]
        T, R = transfer_coefficients(kt2, [Layer(c, 1500.0, thickness)], F0, C0, 1000.0)
        assert np.allclose(np.abs(T) ** 2 + np.abs(R) ** 2, 1, atol=1e-9)

    def test_normal_incidence_impedance_matched_slab(self):
        """Equal impedance at normal incidence: no reflection, only the phase
        delay of the slab."""
        c = 2000.0
        T, R = transfer_coefficients(np.zeros(1), [Layer(c, 1000.0 * C0 / c, 2e-3)], F0, C0, 1000.0)
        assert abs(R[0]) < 1e-12
        assert T[0] == pytest.approx(np.exp(1j * 2 * np.pi * F0 / c * 2e-3), abs=1e-12)

    def test_deep_evanescent_cut(self):
        k0 = 2 * np.pi * F0 / C0
        T, R = transfer_coefficients(np.array([(3 * k0) ** 2]), [Layer(C0, 1000.0, DEEP_DECAY / k0)], F0, C0, 1000.0)
        assert T[0] == 0 and R[0] == 1

    def test_homogeneous_stack_matches_angular_spectrum(self, rng):
        n = 64
        q = PlaneField((n,), DX, rng.standard_normal(n) + 1j * rng.standard_normal(n))
        out = layered_transfer(q, [Layer(C0, 1000.0, 1e-3), Layer(C0, 1000.0, 2e-3)], F0, C0, 1000.0)
        ref = angular_spectrum(ASPlan((n,), DX, C0, F0), q, 3e-3)
        assert np.allclose(out.values, ref.values, atol=1e-9 * np.abs(ref.values).max())

    def test_pad_validation(self):
        with pytest.raises(ValueError):
            layered_transfer(PlaneField((4,), DX, np.ones(4, complex)), [], F0, C0, 1000.0, pad=0)
