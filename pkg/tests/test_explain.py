import math
from dataclasses import replace

import numpy as np
import pytest

from specxai.core import rng_fork
from specxai.explain import (
    ExplainerConfig,
    SaliencyMap,
    bilinear_matrix,
    explain,
    explain_batch,
    grad_cam,
    guided_backprop,
    image_seed,
    integrated_gradients,
    integrated_gradients_raw,
    smooth_grad,
    upsample_bilinear,
    vanilla_grad,
)
from specxai.net import Model, ModelConfig, forward, init_params, parse_layers


def linear_model(shape=(2, 5, 5), seed=0):
    cfg = ModelConfig(parse_layers("flatten, dense:2"), 2, shape)
    return Model(cfg, init_params(cfg, seed))


def conv_model(beta=3.0, seed=0, shape=(1, 8, 8)):
    cfg = ModelConfig(parse_layers("conv:3:3, sp, avgpool:2, conv:4:3, sp, flatten, dense:2", beta), 2, shape)
    p = init_params(cfg, seed)
    for k in p:
        if k.endswith(".b"):
            p[k] = 0.05 * rng_fork(seed, 1).normal(p[k].shape)
    return Model(cfg, p)


def image(seed=0, shape=(1, 8, 8)):
    return rng_fork(seed, 5).uniform(shape)


class TestVanilla:
    def test_linear_model_map_is_weight(self):
        m = linear_model()
        x = image(shape=(2, 5, 5))
        s = vanilla_grad(m, x, 1)
        np.testing.assert_array_equal(s.values, m.params["1.W"][1].reshape(2, 5, 5).mean(axis=0))
        assert s.method == "vanilla" and s.class_index == 1 and s.model == m.fingerprint

    def test_argmax_default(self):
        m = conv_model()
        x = image()
        assert vanilla_grad(m, x).class_index == int(np.argmax(m.logits(x)))

    def test_equals_smoothgrad_without_noise(self):
        m = conv_model()
        x = image()
        cfg = ExplainerConfig("smoothgrad", sg_sigma_rel=0.0, sg_samples=1, seed=123)
        np.testing.assert_array_equal(smooth_grad(m, x, 0, cfg).values, vanilla_grad(m, x, 0).values)


class TestSmoothGrad:
    def test_tiny_sigma_converges(self):
        m = conv_model()
        x = image(1)
        sg = smooth_grad(m, x, 1, ExplainerConfig("smoothgrad", sg_sigma_rel=1e-12, sg_samples=8))
        assert np.max(np.abs(sg.values - vanilla_grad(m, x, 1).values)) < 1e-8

    def test_linear_model_exact_expectation(self):
        m = linear_model()
        x = image(shape=(2, 5, 5))
        w = m.params["1.W"][0].reshape(2, 5, 5).mean(axis=0)
        sg = smooth_grad(m, x, 0, ExplainerConfig("smoothgrad", sg_sigma_rel=0.5, sg_samples=64))
        np.testing.assert_allclose(sg.values, w, rtol=0, atol=1e-14)

    def test_deterministic_given_seed(self):
        m = conv_model()
        x = image(2)
        cfg = ExplainerConfig("smoothgrad", seed=9)
        a, b = smooth_grad(m, x, 0, cfg), smooth_grad(m, x, 0, cfg)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, smooth_grad(m, x, 0, replace(cfg, seed=10)).values)

    def test_variance_halves_with_double_samples(self):
        m = conv_model(beta=math.inf, seed=4)
        x = image(3)

        def var(n):
            runs = [smooth_grad(m, x, 0, ExplainerConfig("smoothgrad", sg_samples=n, seed=s)).values for s in range(50)]
            return np.var(runs, axis=0, ddof=1).mean()

        ratio = var(16) / var(8)
        assert 0.4 <= ratio <= 0.6


class TestIntegratedGradients:
    def test_baseline_equal_input(self):
        m = conv_model()
        x = image()
        ig = integrated_gradients(m, x, 0, ExplainerConfig("intgrad", ig_baseline=x.copy()))
        assert np.all(ig.values == 0)

    @pytest.mark.parametrize("steps", [1, 3, 64])
    def test_linear_exact(self, steps):
        m = linear_model()
        x = image(shape=(2, 5, 5))
        attr = integrated_gradients_raw(m, x, 1, steps)
        np.testing.assert_allclose(attr, m.params["1.W"][1].reshape(x.shape) * x, rtol=0, atol=1e-15)

    def test_completeness_improves_with_steps(self):
        m = conv_model(beta=1.0, seed=6)
        x = image(4)
        f = m.logits(x)[1] - m.logits(np.zeros_like(x))[1]
        errs = [abs(integrated_gradients_raw(m, x, 1, s).sum() - f) / abs(f) for s in (8, 16, 32, 64, 128)]
        assert all(a > b for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.01

    def test_baseline_shape_checked(self):
        m = conv_model()
        with pytest.raises(ValueError):
            integrated_gradients_raw(m, image(), 0, 8, baseline=np.zeros((1, 4, 4)))


class TestGradCam:
    def test_nonnegative_and_full_size(self):
        m = conv_model()
        s = grad_cam(m, image(), 0)
        assert s.values.shape == (8, 8)
        assert np.all(s.values >= 0)

    def test_negative_weights_give_zero_map(self):
        cfg = ModelConfig(parse_layers("conv:2:3, sp, flatten, dense:1", math.inf), 1, (1, 6, 6))
        p = init_params(cfg, 0)
        p["3.W"] = -np.abs(p["3.W"])
        s = grad_cam(Model(cfg, p), image(shape=(1, 6, 6)), 0, ExplainerConfig("gradcam", cam_layer=1))
        assert np.all(s.values == 0)

    def test_single_channel_proportional_to_activation(self):
        cfg = ModelConfig(parse_layers("conv:1:3, sp, avgpool:2, flatten, dense:1", 2.0), 1, (1, 8, 8))
        p = init_params(cfg, 1)
        p["4.W"] = np.abs(p["4.W"]) + 0.1
        m = Model(cfg, p)
        x = image(7)
        s = grad_cam(m, x, 0, ExplainerConfig("gradcam", cam_layer=2))
        A = forward(cfg, p, x)[1].outputs[2][0, 0]
        ref = upsample_bilinear(A, 8, 8)
        k = s.values.sum() / ref.sum()
        assert k > 0
        np.testing.assert_allclose(s.values, k * ref, rtol=1e-12)

    def test_requires_conv(self):
        with pytest.raises(ValueError):
            grad_cam(linear_model(), image(shape=(2, 5, 5)), 0)

    def test_bilinear_rows_sum_to_one(self):
        for n_out, n_in in ((8, 3), (32, 8), (5, 5)):
            m = bilinear_matrix(n_out, n_in)
            np.testing.assert_allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(bilinear_matrix(4, 4), np.eye(4))


class TestGuided:
    def test_map_shape_and_method(self):
        m = conv_model()
        s = guided_backprop(m, image(), 0)
        assert s.values.shape == (8, 8) and s.method == "guidedbp"


class TestBatch:
    @pytest.mark.parametrize("method", ["vanilla", "smoothgrad", "intgrad", "guidedbp", "gradcam"])
    def test_batch_of_one_matches_single(self, method):
        m = conv_model()
        x = image(8)
        cfg = ExplainerConfig(method, sg_samples=4, ig_steps=8, seed=5)
        [b] = explain_batch(m, x[None], cfg)
        single = explain(m, x, b.class_index, replace(cfg, seed=image_seed(5, 0)))
        np.testing.assert_allclose(b.values, single.values, rtol=0, atol=1e-15)
        assert b.seed == image_seed(5, 0)

    def test_permutation_with_indices(self):
        m = conv_model()
        xs = np.stack([image(s) for s in range(5)])
        cfg = ExplainerConfig("smoothgrad", sg_samples=4, seed=1)
        a = explain_batch(m, xs, cfg)
        perm = np.array([3, 0, 4, 1, 2])
        b = explain_batch(m, xs[perm], cfg, indices=perm)
        for j, i in enumerate(perm):
            assert np.array_equal(b[j].values, a[i].values)

    def test_label_class_source(self):
        m = conv_model()
        xs = np.stack([image(s) for s in range(3)])
        maps = explain_batch(m, xs, ExplainerConfig("vanilla"), class_source="label", labels=[1, 0, 1])
        assert [s.class_index for s in maps] == [1, 0, 1]
        with pytest.raises(ValueError):
            explain_batch(m, xs, ExplainerConfig("vanilla"), class_source="label")

    def test_distinct_seeds(self):
        m = conv_model()
        xs = np.stack([image(s) for s in range(6)])
        seeds = [s.seed for s in explain_batch(m, xs, ExplainerConfig("vanilla", seed=2))]
        assert len(set(seeds)) == 6


class TestConfig:
    def test_invalid(self):
        with pytest.raises(ValueError):
            ExplainerConfig("lrp")
        with pytest.raises(ValueError):
            ExplainerConfig("smoothgrad", sg_samples=0)

    def test_map_rejects_nan(self):
        with pytest.raises(ArithmeticError):
            SaliencyMap(np.array([[np.nan, 0.0]]), "vanilla")
