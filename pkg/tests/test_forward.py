import numpy as np
import pytest
from scipy.linalg import fractional_matrix_power, sqrtm

from c2f import InvalidParameter, make_schedule
from c2f.forward import (
    band_retention,
    forward_trajectory,
    high_pass,
    marginal_mean,
    marginal_sample,
    markov_step_blur,
    markov_step_generalized,
)
from c2f.spectral import circulant_matrix


def dense_blur(s, i):
    """``W^f(i)`` for a 1D schedule, from the circulant matrix itself."""
    w = circulant_matrix(s.operator.kernel, s.operator.axis_len)
    return np.real(fractional_matrix_power(w, s.blur.values[i]))


class TestMarkovStep:
    def test_zero_blur_reduces_to_vp(self, rng):
        s = make_schedule(8, f_type="zero")
        x, z = rng.standard_normal((2, 3, 8, 8))
        beta = s.noise.beta(40)
        expected = np.sqrt(1 - beta) * x + np.sqrt(beta) * z
        np.testing.assert_allclose(markov_step_blur(s, x, 40, z=z), expected, atol=1e-12)

    def test_matches_dense_matrices(self, rng):
        s = make_schedule(6, ndim=1, f_end=0.6)
        x, z = rng.standard_normal((2, 6))
        i = 900
        w = dense_blur(s, i)
        a = 1 - s.noise.beta(i)
        c_half = np.real(sqrtm(np.eye(6) - a * w @ w))
        expected = np.sqrt(a) * w @ x + c_half @ z
        np.testing.assert_allclose(markov_step_blur(s, x, i, z=z), expected, atol=1e-10)

    def test_rotated_form_is_pathwise_equal(self, sched8, rng):
        op = sched8.operator
        x, z = rng.standard_normal((2, 5, 8, 8))
        for i in (1, 250, 999):
            blur = markov_step_blur(sched8, x, i, z=z)
            rot = markov_step_generalized(sched8, op.to_spectral(x), i, zbar=op.to_spectral(z))
            np.testing.assert_allclose(op.to_pixel(rot), blur, atol=1e-12)

    def test_monte_carlo_covariance(self):
        s = make_schedule(4, ndim=1, f_end=0.6, n_steps=10)
        rng = np.random.default_rng(5)
        x0 = np.array([1.0, -0.5, 0.25, 0.0])
        x = markov_step_blur(s, np.broadcast_to(x0, (200_000, 4)), 10, rng)
        w = dense_blur(s, 10)
        a = 1 - s.noise.beta(10)
        cov = np.eye(4) - a * w @ w
        np.testing.assert_allclose(x.mean(axis=0), np.sqrt(a) * w @ x0, atol=2e-3)
        assert np.linalg.norm(np.cov(x.T) - cov) / np.linalg.norm(cov) < 3e-2

    def test_index_validation(self, sched8):
        with pytest.raises(InvalidParameter):
            markov_step_blur(sched8, np.zeros((8, 8)), 0)


class TestMarginal:
    def test_zero_noise_gives_mean(self, sched8, rng):
        x0 = rng.standard_normal((8, 8))
        fs = marginal_sample(sched8, x0, 300, eps=np.zeros((8, 8)))
        np.testing.assert_allclose(fs.state, marginal_mean(sched8, x0, 300), atol=1e-15)
        np.testing.assert_allclose(fs.state, sched8.operator.apply_diagonal(x0, np.sqrt(sched8.diag_Abar(300))))

    def test_per_item_steps(self, sched8, rng):
        x0, eps = rng.standard_normal((2, 3, 8, 8))
        steps = np.array([1, 500, 1000])
        fs = marginal_sample(sched8, x0, steps, eps=eps)
        for k, i in enumerate(steps):
            single = marginal_sample(sched8, x0[k], int(i), eps=eps[k])
            np.testing.assert_allclose(fs.state[k], single.state, atol=1e-14)

    def test_chain_matches_marginal_law(self):
        # second moments of the composed chain equal the closed form
        s = make_schedule(4, ndim=1, n_steps=20, f_end=0.6, beta_end=0.2)
        rng = np.random.default_rng(11)
        op = s.operator
        x0 = np.array([1.0, 0.5, -0.5, -1.0])
        x = np.broadcast_to(x0, (100_000, 4)).copy()
        for i in range(1, 21):
            x = markov_step_blur(s, x, i, rng)
        xbar = op.to_spectral(x)
        abar = s.diag_Abar(20)
        np.testing.assert_allclose(xbar.mean(0), np.sqrt(abar) * op.to_spectral(x0), atol=1.5e-2)
        np.testing.assert_allclose(xbar.var(0), 1 - abar, rtol=3e-2)

    def test_terminal_state_is_near_standard_normal(self, sched8, rng):
        x0 = rng.standard_normal((4000, 8, 8))
        x = marginal_sample(sched8, x0, 1000, rng).state
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(1.0, abs=0.01)


class TestHighPass:
    def test_matches_dense_definition(self, rng):
        s = make_schedule(6, ndim=1, f_end=0.6)
        x = rng.standard_normal(6)
        for i in (0, 500, 999):
            expected = x - np.sqrt(1 - s.noise.beta(i + 1)) * dense_blur(s, i + 1) @ x
            np.testing.assert_allclose(high_pass(s, x, i), expected, atol=1e-11)

    def test_constant_field_passes_beta_only(self, sched8):
        x = np.ones((8, 8))
        expected = (1 - np.sqrt(1 - sched8.noise.beta(10))) * x
        np.testing.assert_allclose(high_pass(sched8, x, 9), expected, atol=1e-14)

    def test_range(self, sched8):
        with pytest.raises(InvalidParameter):
            high_pass(sched8, np.zeros((8, 8)), 1000)


class TestTrajectory:
    def test_stride_n_keeps_endpoints(self, sched8, rng):
        tr = forward_trajectory(sched8, rng.standard_normal((8, 8)), rng, stride=1000)
        np.testing.assert_array_equal(tr.steps, [0, 1000])
        assert tr.states.shape == (2, 8, 8)

    def test_stride_records(self, sched8, rng):
        tr = forward_trajectory(sched8, rng.standard_normal((8, 8)), rng, stride=300)
        np.testing.assert_array_equal(tr.steps, [0, 300, 600, 900, 1000])
        assert tr.metadata["signal_retention"].shape == (5, 2)

    def test_bad_stride(self, sched8, rng):
        with pytest.raises(InvalidParameter):
            forward_trajectory(sched8, np.zeros((8, 8)), rng, stride=0)

    def test_high_band_retention_decays_faster(self, sched8):
        r = band_retention(sched8, np.arange(1, 1001))
        assert np.all(r[:, 1] < r[:, 0])
        assert r[-1, 1] / r[-1, 0] < 1e-3

    def test_zero_blur_keeps_bands_equal(self):
        s = make_schedule(8, f_type="zero")
        r = band_retention(s, np.arange(1, 1001))
        np.testing.assert_allclose(r[:, 0], r[:, 1], rtol=1e-14)
