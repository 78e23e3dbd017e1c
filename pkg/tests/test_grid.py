"""Grid, spectral calculus, quadrature, and field file tests."""

import concurrent.futures

import numpy as np
import pytest

from snls2d.grid import (
    ComplexField,
    Grid2D,
    RealField,
    complex_field,
    convolve,
    integrate,
    laplacian,
    load_field,
    real_field,
    save_field,
    spectral_derivative,
    weight_field,
)


def gaussian(grid, s, amp=1.0):
    return amp * np.exp(-grid.radius_sq() / (2.0 * s * s))


class TestGrid2D:
    def test_spacing_and_coordinates(self):
        g = Grid2D(L=16.0, N=64)
        assert g.h == pytest.approx(0.5)
        assert g.x[0] == -16.0
        assert g.x[-1] == pytest.approx(16.0 - g.h)
        assert g.x[g.N // 2] == 0.0

    def test_wavenumbers_integer_multiples(self):
        g = Grid2D(L=8.0, N=32)
        base = np.pi / g.L
        j = np.round(g.k / base)
        np.testing.assert_allclose(g.k, base * j, atol=1e-13)
        assert j.min() == -g.N // 2
        assert j.max() == g.N // 2 - 1
        assert g.kmax == pytest.approx(np.pi * g.N / (2 * g.L))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            Grid2D(L=8.0, N=48)
        with pytest.raises(ValueError):
            Grid2D(L=8.0, N=8)
        with pytest.raises(ValueError):
            Grid2D(L=-1.0, N=32)

    def test_field_shape_checked(self):
        g = Grid2D(L=8.0, N=32)
        with pytest.raises(ValueError):
            real_field(g, np.zeros((16, 16)))

    def test_fields_are_immutable(self):
        g = Grid2D(L=8.0, N=32)
        f = real_field(g, np.zeros((32, 32)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestWeight:
    def test_mu_zero_is_ones(self):
        g = Grid2D(L=8.0, N=32)
        np.testing.assert_array_equal(weight_field(g, 0.0).values, 1.0)

    def test_pointwise_value(self):
        g = Grid2D(L=16.0, N=64)
        mu = -0.5
        w = weight_field(g, mu)
        i = np.searchsorted(g.x, 3.0)
        j = np.searchsorted(g.x, 4.0)
        assert g.x[i] == 3.0 and g.x[j] == 4.0
        assert w.values[i, j] == pytest.approx((1.0 + 25.0) ** (mu / 2.0), rel=1e-12)

    def test_product_of_weights(self):
        g = Grid2D(L=4.0, N=32)
        w = weight_field(g, 0.7).values * weight_field(g, -0.2).values
        np.testing.assert_allclose(w, weight_field(g, 0.5).values, rtol=1e-12)


class TestSpectralDerivative:
    def test_plane_wave_exact(self):
        g = Grid2D(L=16.0, N=64)
        kx, ky = 3 * np.pi / g.L, -5 * np.pi / g.L
        X, Y = g.meshgrid()
        f = complex_field(g, np.exp(1j * (kx * X + ky * Y)))
        df = spectral_derivative(f, axis=0)
        np.testing.assert_allclose(df.values, 1j * kx * f.values, atol=1e-10)
        df = spectral_derivative(f, axis=1)
        np.testing.assert_allclose(df.values, 1j * ky * f.values, atol=1e-10)

    def test_gaussian_derivative_closed_form(self):
        g = Grid2D(L=16.0, N=128)
        s = 2.0
        f = real_field(g, gaussian(g, s))
        X, _ = g.meshgrid()
        expected = -(X / s**2) * f.values
        df = spectral_derivative(f, axis=0)
        np.testing.assert_allclose(df.values.real, expected, atol=1e-10)
        assert np.abs(df.values.imag).max() < 1e-12

    def test_mixed_partials_commute(self):
        g = Grid2D(L=8.0, N=64)
        rng = np.random.default_rng(11)
        spec = np.zeros((g.N, g.N), dtype=complex)
        spec[:8, :8] = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        f = complex_field(g, np.fft.ifft2(spec))
        dxy = spectral_derivative(spectral_derivative(f, 0), 1).values
        dyx = spectral_derivative(spectral_derivative(f, 1), 0).values
        scale = np.abs(dxy).max()
        np.testing.assert_allclose(dxy, dyx, atol=1e-12 * max(scale, 1.0))

    def test_odd_order_zeroes_nyquist(self):
        g = Grid2D(L=8.0, N=32)
        X, _ = g.meshgrid()
        f = real_field(g, np.cos(g.kmax * X))
        df = spectral_derivative(f, axis=0, order=1)
        assert np.abs(df.values).max() < 1e-12

    def test_even_order_keeps_nyquist(self):
        g = Grid2D(L=8.0, N=32)
        X, _ = g.meshgrid()
        f = real_field(g, np.cos(g.kmax * X))
        lap = laplacian(f)
        np.testing.assert_allclose(
            lap.values.real, -g.kmax**2 * f.values, atol=1e-9
        )


class TestConvolve:
    def test_gaussian_pair_closed_form(self):
        # conv of exp(-|x|^2/2s^2) with itself is (pi s^2) exp(-|x|^2/4s^2)
        g = Grid2D(L=16.0, N=256)
        s = 1.2
        f = real_field(g, gaussian(g, s))
        got = convolve(f, f).values
        expected = np.pi * s**2 * np.exp(-g.radius_sq() / (4.0 * s * s))
        interior = g.radius_sq() < (g.L / 2) ** 2
        err = np.abs(got - expected)[interior].max() / expected.max()
        assert err < 1e-2

    def test_delta_is_identity(self):
        g = Grid2D(L=8.0, N=64)
        rng = np.random.default_rng(3)
        f = real_field(g, rng.standard_normal((g.N, g.N)))
        delta = np.zeros((g.N, g.N))
        delta[g.N // 2, g.N // 2] = 1.0 / g.h**2
        got = convolve(f, real_field(g, delta)).values
        np.testing.assert_allclose(got, f.values, atol=1e-12 * np.abs(f.values).max())

    def test_symmetric(self):
        g = Grid2D(L=8.0, N=64)
        rng = np.random.default_rng(4)
        f = real_field(g, rng.standard_normal((g.N, g.N)))
        h = real_field(g, rng.standard_normal((g.N, g.N)))
        a = convolve(f, h).values
        b = convolve(h, f).values
        np.testing.assert_allclose(a, b, atol=1e-13 * max(1.0, np.abs(a).max()))

    def test_zero_field(self):
        g = Grid2D(L=8.0, N=32)
        f = real_field(g, np.ones((g.N, g.N)))
        z = real_field(g, np.zeros((g.N, g.N)))
        assert np.all(convolve(f, z).values == 0.0)

    def test_grid_mismatch_rejected(self):
        a = Grid2D(L=8.0, N=32)
        b = Grid2D(L=8.0, N=64)
        with pytest.raises(ValueError):
            convolve(
                real_field(a, np.zeros((32, 32))), real_field(b, np.zeros((64, 64)))
            )


class TestIntegrate:
    def test_normalized_gaussian_mass(self):
        g = Grid2D(L=16.0, N=128)
        s = 1.5
        f = real_field(g, gaussian(g, s) / (2.0 * np.pi * s**2))
        assert integrate(f) == pytest.approx(1.0, abs=1e-8)

    def test_weighted_gaussian_against_quadrature(self):
        # oracle: separable high-resolution trapezoid quadrature
        g = Grid2D(L=16.0, N=128)
        s, mu = 1.5, -1.0
        f = real_field(g, gaussian(g, s))
        got = integrate(f, mu=mu)
        t = np.linspace(-16.0, 16.0, 4001)
        TX, TY = np.meshgrid(t, t, indexing="ij")
        dens = np.exp(-(TX**2 + TY**2) / (2 * s * s)) * (1 + TX**2 + TY**2) ** (mu / 2)
        oracle = np.trapezoid(np.trapezoid(dens, t, axis=1), t)
        assert got == pytest.approx(oracle, rel=1e-6)

    def test_parseval(self):
        g = Grid2D(L=8.0, N=128)
        rng = np.random.default_rng(7)
        u = rng.standard_normal((g.N, g.N)) + 1j * rng.standard_normal((g.N, g.N))
        f = complex_field(g, u)
        phys = integrate(np.abs(f.values) ** 2, grid=g)
        spec = g.h**2 * np.abs(f.spectrum) ** 2 / g.N**2
        assert abs(phys - spec.sum()) <= 1e-12 * abs(phys)


class TestFieldFiles:
    def test_real_round_trip_bit_exact(self, tmp_path):
        g = Grid2D(L=8.0, N=32)
        rng = np.random.default_rng(5)
        f = real_field(g, rng.standard_normal((g.N, g.N)), label="xi")
        save_field(f, tmp_path / "xi")
        back = load_field(tmp_path / "xi")
        assert isinstance(back, RealField)
        assert back.label == "xi"
        assert back.grid.L == g.L and back.grid.N == g.N
        assert back.values.tobytes() == f.values.tobytes()

    def test_complex_round_trip_bit_exact(self, tmp_path):
        g = Grid2D(L=8.0, N=32)
        rng = np.random.default_rng(6)
        vals = rng.standard_normal((g.N, g.N)) + 1j * rng.standard_normal((g.N, g.N))
        f = complex_field(g, vals, label="u0")
        save_field(f, tmp_path / "u0")
        back = load_field(tmp_path / "u0")
        assert isinstance(back, ComplexField)
        assert back.values.tobytes() == f.values.tobytes()

    def test_interleaved_layout(self, tmp_path):
        g = Grid2D(L=8.0, N=16)
        vals = np.arange(256, dtype=float).reshape(16, 16) + 1j
        save_field(complex_field(g, vals), tmp_path / "c")
        raw = np.frombuffer((tmp_path / "c.bin").read_bytes(), dtype="<f8")
        assert raw[0] == 0.0 and raw[1] == 1.0 and raw[2] == 1.0 and raw[3] == 1.0

    def test_header_mismatch_rejected(self, tmp_path):
        g = Grid2D(L=8.0, N=16)
        save_field(real_field(g, np.zeros((16, 16))), tmp_path / "z")
        with pytest.raises(ValueError):
            load_field(tmp_path / "z", grid=Grid2D(L=4.0, N=16))


class TestPurity:
    def test_threaded_ops_match_serial(self):
        g = Grid2D(L=8.0, N=64)
        rng = np.random.default_rng(9)
        fields = [real_field(g, rng.standard_normal((g.N, g.N))) for _ in range(8)]
        serial = [spectral_derivative(f, 0).values for f in fields]
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as ex:
            threaded = list(ex.map(lambda f: spectral_derivative(f, 0).values, fields))
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a, b)
