import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import convolve, convolve1d

from c2f import (
    InvalidParameter,
    SpectralField,
    apply_power,
    build_blur_operator,
    build_kernel,
    default_support,
    to_pixel,
    to_spectral,
)
from c2f.spectral import analytic_eigenvalues, circulant_matrix, frequency_bands, make_operator


def blur_conv(op, x):
    """Reference blur: wrapped correlation with the kernel along each axis."""
    w = op.kernel.weights
    if op.ndim == 1:
        return convolve1d(x, w[::-1], mode="wrap", axis=-1)
    return convolve(x, np.outer(w, w)[::-1, ::-1], mode="wrap")


class TestKernel:
    def test_center_weight_matches_direct_sum(self):
        k = build_kernel(0.4, 5)
        raw = np.exp(-np.arange(-2, 3) ** 2 / (2 * 0.4**2))
        assert k.weights[2] == pytest.approx(1.0 / raw.sum(), rel=1e-12)
        assert k.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_symmetric(self):
        k = build_kernel(1.3, 9)
        np.testing.assert_array_equal(k.weights, k.weights[::-1])
        np.testing.assert_array_equal(k.offsets, np.arange(-4, 5))

    def test_default_support(self):
        assert default_support(0.4, 64) == 5
        assert default_support(2.0, 64) == 17
        assert default_support(2.0, 8) == 7
        assert default_support(0.4, 4) == 3

    @pytest.mark.parametrize("sigma,support", [(0.0, 5), (-1.0, 5), (0.4, 4), (0.4, 1)])
    def test_rejects_bad_parameters(self, sigma, support):
        with pytest.raises(InvalidParameter):
            build_kernel(sigma, support)

    def test_support_larger_than_field(self):
        with pytest.raises(InvalidParameter):
            build_blur_operator(build_kernel(1.0, 9), 8)


class TestEigendecomposition:
    @pytest.mark.parametrize("n", [4, 5, 8, 16, 33, 64])
    def test_reconstructs_circulant(self, n):
        op = make_operator(n, ndim=1)
        w = circulant_matrix(op.kernel, n)
        recon = (op.eigvecs_1d * op.eigvals_1d) @ op.eigvecs_1d.T
        np.testing.assert_allclose(recon, w, atol=1e-9, rtol=0)
        np.testing.assert_allclose(op.eigvecs_1d.T @ op.eigvecs_1d, np.eye(n), atol=1e-12)

    def test_eigenvalues_match_cosine_formula(self):
        op = make_operator(16, sigma=1.0, ndim=1)
        w = op.kernel.weights
        c = op.kernel.center
        k = np.arange(16)
        cos = np.array([np.sum(w * np.cos(2 * np.pi * (np.arange(len(w)) - c) * kk / 16)) for kk in k])
        np.testing.assert_allclose(op.eigvals_1d, np.sort(cos)[::-1], atol=1e-12)
        np.testing.assert_allclose(np.sort(analytic_eigenvalues(op.kernel, 16)), np.sort(cos), atol=1e-14)

    def test_dense_eigh_agrees(self):
        op = make_operator(12, sigma=0.8, ndim=1)
        vals = np.linalg.eigvalsh(circulant_matrix(op.kernel, 12))
        np.testing.assert_allclose(op.eigvals_1d, vals[::-1], atol=1e-12)

    def test_dc_eigenvalue_is_one(self):
        op = make_operator(8)
        assert op.eigvals_1d[0] == 1.0
        assert op.eigvals.max() == 1.0
        dc = op.to_spectral(np.ones(op.field_shape))
        assert abs(dc[0, 0]) == pytest.approx(8.0, rel=1e-12)
        np.testing.assert_allclose(dc.ravel()[1:], 0.0, atol=1e-12)

    def test_non_positive_spectrum_rejected(self):
        # a wide kernel on a short axis has negative cosine eigenvalues
        with pytest.raises(InvalidParameter):
            make_operator(5, sigma=3.0, support=5, ndim=1)

    def test_example_spectrum_n4(self):
        # support 3: lambda_k = w_c + 2 w_e cos(pi k / 2)
        op = make_operator(4, ndim=1)
        w_e = np.exp(-1 / (2 * 0.4**2))
        w_c = 1 / (1 + 2 * w_e)
        w_e *= w_c
        np.testing.assert_allclose(op.eigvals_1d, [1.0, w_c, w_c, w_c - 2 * w_e], atol=1e-14)


class TestApplyPower:
    def test_power_zero_is_identity(self, rng):
        op = make_operator(8)
        x = rng.standard_normal((3, 8, 8))
        np.testing.assert_allclose(apply_power(op, x, 0.0), x, atol=1e-13)

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_power_one_matches_convolution(self, n):
        op = make_operator(n, sigma=1.0)
        x = np.random.default_rng(n).standard_normal((100, n, n))
        expected = np.stack([blur_conv(op, im) for im in x])
        np.testing.assert_allclose(apply_power(op, x, 1.0), expected, atol=1e-8, rtol=0)

    def test_power_two_is_double_convolution(self, rng):
        op = make_operator(16, sigma=0.7)
        x = rng.standard_normal((16, 16))
        np.testing.assert_allclose(apply_power(op, x, 2.0), blur_conv(op, blur_conv(op, x)), atol=1e-10)

    def test_one_dimensional(self, rng):
        op = make_operator(10, sigma=0.9, ndim=1)
        x = rng.standard_normal((4, 10))
        np.testing.assert_allclose(op.power(x, 1.0), blur_conv(op, x), atol=1e-12)

    def test_negative_power_rejected(self):
        op = make_operator(8)
        with pytest.raises(InvalidParameter):
            op.power(np.zeros((8, 8)), -0.5)

    def test_wrong_shape_rejected(self):
        op = make_operator(8)
        with pytest.raises(InvalidParameter):
            op.to_spectral(np.zeros((8, 7)))

    @settings(max_examples=40, deadline=None)
    @given(p=st.floats(0.0, 3.0), q=st.floats(0.0, 3.0), seed=st.integers(0, 2**31))
    def test_semigroup(self, p, q, seed):
        op = make_operator(8, sigma=0.6)
        x = np.random.default_rng(seed).standard_normal((8, 8))
        np.testing.assert_allclose(op.power(op.power(x, p), q), op.power(x, p + q), atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(p=st.floats(0.0, 5.0), seed=st.integers(0, 2**31))
    def test_blur_never_increases_norm(self, p, seed):
        op = make_operator(8, sigma=0.6)
        x = np.random.default_rng(seed).standard_normal((8, 8))
        assert np.linalg.norm(op.power(x, p)) <= np.linalg.norm(x) * (1 + 1e-12)


class TestBasis:
    def test_basis_vector_round_trip(self):
        op = make_operator(6, ndim=1)
        for k in range(6):
            e = np.zeros(6)
            e[k] = 1.0
            np.testing.assert_allclose(to_spectral(op, to_pixel(op, e)), e, atol=1e-13)
            np.testing.assert_allclose(to_pixel(op, e), op.eigvecs_1d[:, k], atol=1e-15)

    def test_parseval(self, rng):
        op = make_operator(8)
        x = rng.standard_normal((8, 8))
        assert np.sum(op.to_spectral(x) ** 2) == pytest.approx(np.sum(x**2), rel=1e-12)

    def test_spectral_field_round_trip(self, rng):
        op = make_operator(8)
        x = rng.standard_normal((2, 8, 8))
        f = SpectralField.from_pixel(op, x)
        g = SpectralField.from_spectral(op, f.spectral)
        np.testing.assert_allclose(g.pixel, x, atol=1e-13)
        np.testing.assert_allclose(f.power(1.0).pixel, apply_power(op, x, 1.0), atol=1e-13)


class TestFrequencyBands:
    def test_ties_stay_together(self):
        op = make_operator(4, ndim=1)
        labels = frequency_bands(op, 2)
        np.testing.assert_array_equal(labels, [0, 0, 0, 1])

    def test_low_band_has_larger_eigenvalues(self):
        op = make_operator(8)
        labels = frequency_bands(op, 3)
        d = op.eigvals
        for b in range(2):
            assert d[labels == b].min() > d[labels == b + 1].max()

    def test_too_many_bands(self):
        with pytest.raises(InvalidParameter):
            frequency_bands(make_operator(4, ndim=1), 5)
