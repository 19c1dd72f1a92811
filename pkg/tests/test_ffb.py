"""Unit and property tests for the fusion block and the full top-down pass."""

import warnings

import numpy as np
import pytest

from featborrow import (
    BorrowedMap,
    ConvWeights1x1,
    DeconvWeights,
    FeatureMap,
    FeaturePyramid,
    FfbParams,
    GeometryError,
    ValidationError,
    context_deconv,
    forward_pyramid,
    fuse_layer,
    init_params,
    param_tensors,
    replace_param_tensor,
    synthetic_pyramid,
)

from conftest import deconv_scatter_oracle, monolithic_forward_oracle


def make_ffb(c_next: int, c_ctx: int, c_in_total: int, c_out: int, n: int = 0) -> FfbParams:
    return FfbParams(
        n,
        c_ctx,
        DeconvWeights(np.ones((2, 2, c_next, c_ctx))),
        ConvWeights1x1(np.zeros((c_in_total, c_out))),
    )


class TestContextDeconv:
    def test_zero_deeper_map(self):
        params = make_ffb(3, 2, 1, 1)
        out = context_deconv(FeatureMap(np.zeros((2, 2, 3))), params, 4, 4)
        assert not out.data.any()

    def test_single_cell_constant(self):
        params = make_ffb(1, 1, 1, 1)
        out = context_deconv(FeatureMap(np.full((1, 1, 1), 3.0)), params, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((2, 2, 1), 3.0))

    def test_ssd_like_19_from_10(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 10, 2))
        kernel = rng.normal(size=(2, 2, 2, 3))
        params = FfbParams(0, 3, DeconvWeights(kernel), ConvWeights1x1(np.zeros((1, 1))))
        out = context_deconv(FeatureMap(x), params, 19, 19)
        np.testing.assert_allclose(out.data, deconv_scatter_oracle(x, kernel, 19, 19), atol=1e-12)

    def test_ratio_above_two_rejected(self):
        params = make_ffb(1, 1, 1, 1)
        with pytest.raises(GeometryError, match="unsupported"):
            context_deconv(FeatureMap(np.ones((2, 2, 1))), params, 5, 4)

    def test_target_smaller_than_source_rejected(self):
        params = make_ffb(1, 1, 1, 1)
        with pytest.raises(GeometryError):
            context_deconv(FeatureMap(np.ones((3, 3, 1))), params, 2, 3)


class TestFuseLayer:
    def test_zero_combine_is_identity(self):
        rng = np.random.default_rng(1)
        x = FeatureMap(rng.normal(size=(3, 3, 2)))
        z = BorrowedMap(FeatureMap(rng.normal(size=(3, 3, 2))))
        ctx = FeatureMap(rng.normal(size=(3, 3, 2)))
        params = make_ffb(2, 2, 6, 2)
        out = fuse_layer(x, z, ctx, params)
        assert np.array_equal(out.data, x.data)

    def test_block_structured_weights_select_borrowed(self):
        rng = np.random.default_rng(2)
        c = 3
        x = FeatureMap(np.zeros((2, 2, c)))
        z = BorrowedMap(FeatureMap(rng.normal(size=(2, 2, c))))
        ctx = FeatureMap(rng.normal(size=(2, 2, c)))
        w = np.zeros((3 * c, c))
        w[c : 2 * c] = np.eye(c)
        params = FfbParams(0, c, DeconvWeights(np.ones((2, 2, c, c))), ConvWeights1x1(w))
        out = fuse_layer(x, z, ctx, params)
        np.testing.assert_allclose(out.data, z.z.data, atol=1e-12)

    def test_shape_and_finiteness_contract(self):
        rng = np.random.default_rng(3)
        x = FeatureMap(rng.normal(size=(4, 5, 3)))
        z = BorrowedMap(FeatureMap(rng.normal(size=(4, 5, 2))))
        ctx = FeatureMap(rng.normal(size=(4, 5, 4)))
        params = FfbParams(
            0, 4, DeconvWeights(np.ones((2, 2, 1, 4))), ConvWeights1x1(rng.normal(size=(9, 3)))
        )
        out = fuse_layer(x, z, ctx, params)
        assert out.shape == x.shape
        assert np.isfinite(out.data).all()

    def test_wrong_combine_output_width(self):
        x = FeatureMap(np.ones((2, 2, 3)))
        z = BorrowedMap(FeatureMap(np.ones((2, 2, 3))))
        ctx = FeatureMap(np.ones((2, 2, 3)))
        params = FfbParams(
            0, 3, DeconvWeights(np.ones((2, 2, 1, 3))), ConvWeights1x1(np.ones((9, 2)))
        )
        with pytest.raises(ValidationError):
            fuse_layer(x, z, ctx, params)


SHAPES3 = [(8, 8, 4), (4, 4, 6), (2, 2, 8)]


class TestForwardPyramid:
    def test_zero_combine_weights_give_identity(self):
        p = synthetic_pyramid(SHAPES3, seed=12)
        params = init_params(SHAPES3, seed=5)
        for n in range(2):
            for leaf in ("w", "bias"):
                name = f"layer{n}.combine.{leaf}"
                params = replace_param_tensor(
                    params, name, np.zeros_like(param_tensors(params)[name])
                )
        y = forward_pyramid(p, params)
        for a, b in zip(y.layers, p.layers):
            assert np.array_equal(a.data, b.data)

    def test_depth_one_pass_through_with_warning(self):
        p = FeaturePyramid((FeatureMap(np.ones((3, 3, 2))),))
        params = init_params([(3, 3, 2)], seed=0)
        with pytest.warns(RuntimeWarning, match="no deeper layers"):
            y = forward_pyramid(p, params)
        assert np.array_equal(y.layers[0].data, p.layers[0].data)

    def test_matches_monolithic_oracle(self):
        p = synthetic_pyramid(SHAPES3, seed=12)
        params = init_params(SHAPES3, seed=5)
        y = forward_pyramid(p, params)
        oracle = monolithic_forward_oracle(
            [x.data for x in p.layers], param_tensors(params)
        )
        for got, want in zip(y.layers, oracle):
            assert np.abs(got.data - want).max() <= 1e-9

    def test_top_layer_identity_bit_exact(self):
        p = synthetic_pyramid(SHAPES3, seed=30)
        params = init_params(SHAPES3, seed=31)
        y = forward_pyramid(p, params)
        assert np.array_equal(y.layers[-1].data, p.layers[-1].data)

    def test_shape_preservation(self):
        shapes = [(7, 5, 2), (4, 5, 3), (4, 3, 1)]
        p = synthetic_pyramid(shapes, seed=2)
        y = forward_pyramid(p, init_params(shapes, seed=3))
        assert y.shapes() == p.shapes()

    def test_depth_mismatch_rejected(self):
        p = synthetic_pyramid(SHAPES3, seed=1)
        with pytest.raises(ValidationError):
            forward_pyramid(p, init_params([(8, 8, 4), (4, 4, 6)], seed=1))

    def test_combine_perturbation_is_local_to_shallower_layers(self):
        shapes = [(8, 8, 3), (4, 4, 4), (2, 2, 5)]
        p = synthetic_pyramid(shapes, seed=9)
        params = init_params(shapes, seed=10)
        base = forward_pyramid(p, params)
        tensors = param_tensors(params)
        bumped = tensors["layer1.combine.w"].copy()
        bumped[0, 0] += 0.5
        changed = forward_pyramid(p, replace_param_tensor(params, "layer1.combine.w", bumped))
        # layer 2 (deeper than the perturbed block) is untouched, layers 0 and 1 move
        assert np.array_equal(changed.layers[2].data, base.layers[2].data)
        assert not np.array_equal(changed.layers[1].data, base.layers[1].data)
        assert not np.array_equal(changed.layers[0].data, base.layers[0].data)

    def test_identity_init_runs(self):
        p = synthetic_pyramid(SHAPES3, seed=40)
        y = forward_pyramid(p, init_params(SHAPES3, mode="identity", seed=0))
        assert y.shapes() == p.shapes()
        assert all(np.isfinite(x.data).all() for x in y.layers)
