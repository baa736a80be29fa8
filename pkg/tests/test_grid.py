import numpy as np
import pytest
from hypothesis import given, strategies as st

from holodesign import stencil
from holodesign.grid import (AmplitudeImage, ComplexField, GridError, Medium, MediumError, PlaneField, SourcePlane,
                             disc_mask, disc_source, embed_region, homogeneous_medium, make_grid)


class TestMakeGrid:
    def test_2d_grid(self):
        g = make_grid([128, 128], 1e-4, 12)
        assert g.shape == (128, 128) and g.ndim == 2 and g.size == 128 * 128

    def test_3d_grid(self):
        g = make_grid([64, 64, 64], 2e-4, 8)
        assert g.transverse_shape == (64, 64)

    def test_absorber_too_wide(self):
        with pytest.raises(GridError, match="absorber_width"):
            make_grid([128, 128], 1e-4, 70)

    @pytest.mark.parametrize("shape,dx,w", [([7, 64], 1e-4, 0), ([64, 64], 0.0, 0), ([64, 64], -1e-4, 0),
                                            ([64, 64], 1e-4, -1), ([64], 1e-4, 0), ([8, 8, 8, 8], 1e-4, 0)])
    def test_rejects_invalid(self, shape, dx, w):
        with pytest.raises(GridError):
            make_grid(shape, dx, w)

    @given(st.lists(st.integers(1, 40), min_size=2, max_size=3), st.floats(-1e-3, 1e-3), st.integers(-3, 25))
    def test_total_over_precondition(self, shape, dx, w):
        valid = min(shape) >= 8 and dx > 0 and 0 <= w and 2 * w < min(shape)
        if valid:
            g = make_grid(shape, dx, w)
            assert g.shape == tuple(shape)
        else:
            with pytest.raises(GridError):
                make_grid(shape, dx, w)

    def test_sampling_check(self):
        g = make_grid([32, 32], 1480 / 2e6 / 3, 4)
        with pytest.raises(GridError, match="points per wavelength"):
            g.check_sampling(1480, 2e6)
        make_grid([32, 32], 1480 / 2e6 / 4, 4).check_sampling(1480, 2e6)


class TestMedium:
    def test_water(self):
        m = homogeneous_medium(make_grid([32, 32], 1e-4), 1480, 1000, 0)
        assert np.all(m.c == 1480) and np.all(m.rho == 1000) and np.all(m.alpha == 0)

    def test_rigid_polymer(self):
        m = homogeneous_medium(make_grid([32, 32], 1e-4), 2500, 1190, 50)
        assert np.all(m.alpha == 50)

    @pytest.mark.parametrize("c,rho,alpha", [(-1, 1000, 0), (1480, 0, 0), (1480, 1000, -1)])
    def test_invalid_sign(self, c, rho, alpha):
        with pytest.raises(MediumError):
            homogeneous_medium(make_grid([32, 32], 1e-4), c, rho, alpha)

    def test_field_invariants(self):
        g = make_grid([16, 16], 1e-4)
        c = np.full(g.shape, 1500.0)
        c[3, 3] = 0
        with pytest.raises(MediumError):
            Medium(g, c, 1000.0, 0.0)
        with pytest.raises(MediumError):
            Medium(g, 1500.0, 1000.0, np.nan)

    def test_immutable(self):
        m = homogeneous_medium(make_grid([16, 16], 1e-4), 1480, 1000)
        with pytest.raises(ValueError):
            m.c[0, 0] = 1.0


class TestEmbedRegion:
    def setup_method(self):
        self.grid = make_grid([40, 40], 1e-4, 4)
        self.base = homogeneous_medium(self.grid, 1480, 1000)

    def test_identity_patch(self):
        patch = homogeneous_medium(make_grid([10, 12], 1e-4), 1480, 1000)
        out = embed_region(self.base, patch, (5, 6))
        for name in ("c", "rho", "alpha"):
            assert np.array_equal(getattr(out, name), getattr(self.base, name))

    def test_slab_difference(self):
        patch = homogeneous_medium(make_grid([8, 20], 1e-4), 2473, 1181, 10)
        out = embed_region(self.base, patch, (10, 10))
        changed = out.c != self.base.c
        expected = np.zeros(self.grid.shape, bool)
        expected[10:18, 10:30] = True
        assert np.array_equal(changed, expected)

    def test_out_of_bounds(self):
        patch = homogeneous_medium(make_grid([10, 10], 1e-4), 2000, 1000)
        with pytest.raises(GridError):
            embed_region(self.base, patch, (35, 0))
        with pytest.raises(GridError):
            embed_region(self.base, patch, (-1, 0))

    def test_dx_mismatch(self):
        patch = homogeneous_medium(make_grid([10, 10], 2e-4), 2000, 1000)
        with pytest.raises(GridError):
            embed_region(self.base, patch, (0, 0))

    @given(st.integers(0, 30), st.integers(0, 30), st.floats(1000, 3000))
    def test_idempotent(self, i, j, c):
        patch = homogeneous_medium(make_grid([10, 10], 1e-4), c, 1100)
        once = embed_region(self.base, patch, (i, j))
        twice = embed_region(once, patch, (i, j))
        assert np.array_equal(once.c, twice.c) and np.array_equal(once.rho, twice.rho)


class TestFields:
    def test_complex_field_shape(self):
        g = make_grid([16, 16], 1e-4)
        with pytest.raises(GridError):
            ComplexField(g, np.zeros((16, 15)))
        with pytest.raises(GridError):
            ComplexField(g, np.full((16, 16), np.inf))

    def test_amplitude_nonnegative(self):
        with pytest.raises(GridError):
            AmplitudeImage.from_array(np.array([1.0, -0.1]), 1e-4)
        q = PlaneField.from_array(np.array([1 + 1j, -2.0]), 1e-4).amplitude()
        assert np.allclose(q.values, [np.sqrt(2), 2.0])


class TestSource:
    def test_disc_mask_diameter(self):
        m = disc_mask((101,), 1e-4, 5e-3)
        assert m.sum() == 51

    def test_source_validation(self):
        g = make_grid([32, 32], 1e-4, 6)
        with pytest.raises(GridError):
            disc_source(g, 3, 1e-3, 2e6)  # inside the absorber
        with pytest.raises(GridError):
            SourcePlane(0, 10, np.zeros(32, bool))
        with pytest.raises(GridError):
            SourcePlane(0, 10, np.ones(32, bool), frequency=0.0)
        src = disc_source(g, 10, 1e-3, 2e6)
        assert src.aperture_mask.sum() > 0 and np.isclose(src.omega, 2 * np.pi * 2e6)


class TestStencil:
    def test_coefficients_sum_to_zero(self):
        assert abs(sum(stencil.COEFFS)) < 1e-15

    def test_symbol_matches_fft(self, rng):
        u = rng.standard_normal((12, 10)) + 1j * rng.standard_normal((12, 10))
        a = stencil.apply_laplacian(u, 0.5)
        b = np.fft.ifftn(stencil.laplacian_symbol(u.shape, 0.5) * np.fft.fftn(u))
        assert np.allclose(a, b, atol=1e-12)

    def test_fourth_order(self):
        x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        errs = []
        for n in (32, 64):
            x = np.linspace(0, 2 * np.pi, n, endpoint=False)
            d2 = stencil.apply_laplacian(np.sin(x)[:, None] * np.ones((1, 8)), x[1])[:, 0]
            errs.append(np.max(np.abs(d2 + np.sin(x))))
        assert 14 < errs[0] / errs[1] < 18

    @given(st.floats(0.05, 1.4))
    def test_discrete_wavenumber_solves_symbol(self, kdx):
        theta = stencil.discrete_wavenumber(kdx, 1.0)
        assert np.isclose(stencil.symbol(theta), -kdx**2, rtol=1e-12, atol=1e-14)
