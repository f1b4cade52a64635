import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deblur import norm
from deblur import tensor as T
from deblur.nn import BatchNorm2d, Conv2d, make_rng

from conftest import fd_check, projection_loss


def unit(x):
    return x / np.linalg.norm(x)


def with_spectrum(svals, seed):
    """Square matrix with prescribed singular values and random singular vectors."""
    rng = np.random.default_rng(seed)
    n = len(svals)
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q1 @ np.diag(svals) @ q2.T


class TestSpectralNormalize:
    def test_diagonal(self, f64):
        w = T.Tensor(np.diag([3.0, 1.0]))
        state = norm.SpectralState(unit(np.array([1.0, 1.0])), None, 50)
        w_hat, new = norm.spectral_normalize(w, state)
        np.testing.assert_allclose(w_hat.data, np.diag([1.0, 1 / 3]), atol=1e-12)
        assert abs(np.linalg.norm(new.u) - 1) < 1e-6

    def test_fixed_point(self, f64):
        w = with_spectrum(np.linspace(1.0, 0.1, 16), 0)
        state = norm.SpectralState.init(16, make_rng(0), 50, np.float64)
        w_hat, _ = norm.spectral_normalize(T.Tensor(w), state)
        np.testing.assert_allclose(w_hat.data, w, atol=1e-3)

    def test_gapped_matrix_converges(self, f64):
        w = with_spectrum(np.r_[10.0, np.linspace(5.0, 0.5, 63)], 1)
        state = norm.SpectralState.init(64, make_rng(1), 50, np.float64)
        w_hat, _ = norm.spectral_normalize(T.Tensor(w), state)
        assert abs(norm.largest_singular_value(w_hat.data) - 1) < 1e-9

    def test_eigen_oracle_matches_svd(self):
        w = np.random.default_rng(3).standard_normal((12, 7))
        assert abs(norm.largest_singular_value(w) - np.linalg.svd(w, compute_uv=False)[0]) < 1e-10

    def test_conv_weight_reshaped(self, f64):
        w = np.random.default_rng(4).standard_normal((4, 3, 3, 3))
        state = norm.SpectralState.init(4, make_rng(4), 200, np.float64)
        w_hat, _ = norm.spectral_normalize(T.Tensor(w), state)
        assert w_hat.shape == w.shape
        assert abs(norm.largest_singular_value(w_hat.data) - 1) < 1e-9

    def test_zero_weight(self):
        with pytest.raises(norm.DegenerateWeightError):
            norm.spectral_normalize(T.Tensor(np.zeros((3, 3))), norm.SpectralState.init(3, make_rng(0)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 24), st.integers(2, 24))
    def test_monotone_accuracy(self, seed, rows, cols):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((rows, cols))
        u0 = unit(rng.standard_normal(rows))
        true = norm.largest_singular_value(w)

        def err(steps):
            u, v = norm.power_iteration(w, u0, steps)
            return abs(u @ w @ v - true)

        assert err(50) <= err(1) + 1e-12

    def test_u_persists_and_stays_unit(self):
        conv = Conv2d(3, 8, 3, make_rng(0), spectral=True)
        x = T.Tensor(np.random.default_rng(0).standard_normal((1, 3, 4, 4)))
        seen = []
        for _ in range(3):
            conv(x)
            u = conv.sn._buffers["u"].copy()
            assert abs(np.linalg.norm(u) - 1) < 1e-6
            seen.append(u)
        assert not np.array_equal(seen[0], seen[1])
        conv.eval()
        conv(x)
        np.testing.assert_array_equal(conv.sn._buffers["u"], seen[-1])

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_through_normalized_weight(self, f64, seed):
        conv = Conv2d(3, 4, 3, make_rng(seed), spectral=True)
        x = T.Tensor(np.random.default_rng(seed).standard_normal((1, 3, 5, 5)))
        conv(x)
        with norm.frozen_power_iteration():
            assert fd_check(lambda: projection_loss(conv(x), seed), [x, conv.weight, conv.bias]) < 1e-4


class TestBatchNorm:
    def test_train_statistics(self, f64):
        bn = BatchNorm2d(3)
        x = T.Tensor(5 + 3 * np.random.default_rng(0).standard_normal((4, 3, 5, 5)))
        y = bn(x).data
        assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-5
        assert np.abs(y.var(axis=(0, 2, 3)) - 1).max() < 1e-4

    def test_running_update(self, f64):
        bn = BatchNorm2d(2)
        x = np.random.default_rng(1).standard_normal((3, 2, 4, 4)) + 2
        bn(T.Tensor(x))
        m = x.mean(axis=(0, 2, 3))
        v = x.var(axis=(0, 2, 3), ddof=1)
        np.testing.assert_allclose(bn._buffers["running_mean"], 0.1 * m, rtol=1e-12)
        np.testing.assert_allclose(bn._buffers["running_var"], 0.9 + 0.1 * v, rtol=1e-12)
        assert np.all(bn._buffers["running_var"] >= 0)

    def test_eval_identity(self, f64):
        bn = BatchNorm2d(3).eval()
        x = np.random.default_rng(2).standard_normal((2, 3, 4, 4))
        np.testing.assert_allclose(bn(T.Tensor(x)).data, x / np.sqrt(1 + 1e-5), rtol=1e-12)

    def test_degenerate(self):
        with pytest.raises(norm.DegenerateStatisticsError):
            BatchNorm2d(4)(T.Tensor(np.ones((1, 4, 1, 1))))

    def test_momentum_range(self):
        with pytest.raises(ValueError):
            BatchNorm2d(4, momentum=1.0)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("training", [True, False])
    def test_gradient(self, f64, seed, training):
        rng = np.random.default_rng(seed)
        bn = BatchNorm2d(3).train(training)
        bn.scale.data[...] = 1 + 0.3 * rng.standard_normal(3)
        bn.shift.data[...] = rng.standard_normal(3)
        x = T.Tensor(rng.standard_normal((4, 3, 5, 5)))
        f = lambda: projection_loss(bn(x), seed)
        assert fd_check(f, [x, bn.scale, bn.shift], coords=40, seed=seed) < 1e-4
