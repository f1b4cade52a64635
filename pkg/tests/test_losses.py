import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deblur import tensor as T
from deblur.losses import (
    FeatureExtractor,
    LossWeights,
    adversarial_losses,
    generator_loss,
    l1_loss,
    l2_loss,
    perceptual_loss,
)

from conftest import fd_check


def rand(shape, seed=0, scale=1.0):
    return T.Tensor(scale * np.random.default_rng(seed).standard_normal(shape))


class TestL1L2:
    def test_equal_inputs(self):
        r = rand((2, 3, 4, 4))
        assert l1_loss(r, r).item() == 0.0
        assert l2_loss(r, r).item() == 0.0

    def test_constant_difference(self):
        s = rand((2, 3, 4, 4))
        assert l1_loss(T.Tensor(s.data + 0.5), s).item() == pytest.approx(0.5, abs=1e-7)
        assert l2_loss(T.Tensor(s.data - 0.25), s).item() == pytest.approx(0.0625, abs=1e-7)

    def test_l1_loop_oracle(self, f64):
        r, s = rand((2, 3, 4, 5), 1), rand((2, 3, 4, 5), 2)
        total = 0.0
        for idx in np.ndindex(r.shape):
            total += abs(r.data[idx] - s.data[idx])
        assert abs(l1_loss(r, s).item() - total / r.data.size) < 1e-7

    def test_l2_gradient(self, f64):
        r, s = rand((2, 3, 4, 4), 3), rand((2, 3, 4, 4), 4)
        r.requires_grad = True
        T.backward(l2_loss(r, s))
        np.testing.assert_allclose(r.grad, 2 * (r.data - s.data) / r.data.size, rtol=1e-12)
        assert fd_check(lambda: l2_loss(r, s), [r]) < 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_l1_gradient(self, f64, seed):
        r, s = rand((2, 3, 4, 4), seed), rand((2, 3, 4, 4), seed + 10)
        assert fd_check(lambda: l1_loss(r, s), [r, s]) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            l1_loss(rand((1, 3, 4, 4)), rand((1, 3, 4, 2)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-4, 4).filter(lambda a: abs(a) > 1e-3))
    def test_symmetry_and_scaling(self, seed, a):
        with T.precision("f64"):
            r, s = rand((1, 3, 4, 4), seed), rand((1, 3, 4, 4), seed + 1)
            assert l1_loss(r, s).item() == l1_loss(s, r).item()
            assert l2_loss(r, s).item() == l2_loss(s, r).item()
            assert l1_loss(r, s).item() >= 0 and l2_loss(r, s).item() > 0
            scaled = l2_loss(T.Tensor(a * r.data), T.Tensor(a * s.data)).item()
            assert scaled == pytest.approx(a * a * l2_loss(r, s).item(), rel=1e-12)


class TestPerceptual:
    def test_equal_inputs(self):
        phi = FeatureExtractor(0)
        r = rand((1, 3, 16, 16))
        assert perceptual_loss(r, r, phi).item() == 0.0

    def test_frozen_and_seeded(self):
        a, b = FeatureExtractor(3), FeatureExtractor(3)
        x = rand((1, 3, 16, 16))
        np.testing.assert_array_equal(a(x).data, b(x).data)
        assert a(x).shape == (1, 64, 2, 2)
        assert a.parameters() == {}

    @pytest.mark.parametrize("seed", range(5))
    def test_nonnegative_and_gradient(self, f64, seed):
        phi = FeatureExtractor(seed)
        r, s = rand((1, 3, 16, 16), seed), rand((1, 3, 16, 16), seed + 20)
        assert perceptual_loss(r, s, phi).item() >= 0
        assert fd_check(lambda: perceptual_loss(r, s, phi), [r, s], coords=30, seed=seed) < 1e-4


class TestAdversarial:
    def test_perfect_discriminator(self):
        _, d = adversarial_losses(T.Tensor(np.ones((2, 1, 3, 3))), T.Tensor(np.zeros((2, 1, 3, 3))))
        assert d.item() == 0.0

    def test_fooled_discriminator(self):
        g, _ = adversarial_losses(rand((2, 1, 3, 3)), T.Tensor(np.ones((2, 1, 3, 3))))
        assert g.item() == 0.0

    def test_formula(self, f64):
        dr, df = rand((2, 1, 5, 5), 1), rand((2, 1, 5, 5), 2)
        g, d = adversarial_losses(dr, df)
        assert abs(d.item() - (0.5 * np.mean((dr.data - 1) ** 2) + 0.5 * np.mean(df.data**2))) < 1e-7
        assert abs(g.item() - 0.5 * np.mean((df.data - 1) ** 2)) < 1e-7

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, f64, seed):
        dr, df = rand((2, 1, 3, 3), seed), rand((2, 1, 3, 3), seed + 1)
        assert fd_check(lambda: adversarial_losses(dr, df)[1], [dr, df]) < 1e-6
        assert fd_check(lambda: adversarial_losses(dr, df)[0], [df]) < 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 1.0))
    def test_generator_loss_monotone(self, seed, t):
        # moving every fake score a fraction t of the way toward 1 cannot raise g_loss
        df = np.random.default_rng(seed).standard_normal((1, 1, 4, 4))
        closer = df + t * (1 - df)
        dr = T.Tensor(np.zeros_like(df))
        assert adversarial_losses(dr, T.Tensor(closer))[0].item() <= adversarial_losses(dr, T.Tensor(df))[0].item()


class TestWeights:
    def test_defaults(self):
        assert LossWeights("l1").lambda_classical == 100
        assert LossWeights("l2").lambda_classical == 100
        assert LossWeights("perceptual").lambda_classical == 10

    def test_invalid(self):
        with pytest.raises(ValueError):
            LossWeights("ssim")
        with pytest.raises(ValueError):
            LossWeights("l1", -1.0)

    def test_total(self, f64):
        df = rand((1, 1, 3, 3))
        r, s = rand((1, 3, 8, 8), 1), rand((1, 3, 8, 8), 2)
        w = LossWeights("l2", 7.0, 0.5)
        expect = 0.5 * adversarial_losses(df, df)[0].item() + 7.0 * l2_loss(r, s).item()
        assert generator_loss(w, df, r, s).item() == pytest.approx(expect, rel=1e-12)
