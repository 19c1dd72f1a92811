"""Gradient tests: hand formulas, central differences and the full check."""

import numpy as np
import pytest

from featborrow import (
    ConvWeights1x1,
    EnhancedPyramid,
    FeatureMap,
    ShapeError,
    backward,
    central_difference,
    compare_gradients,
    conv1x1,
    finite_difference,
    gradcheck,
    init_params,
    param_tensors,
    replace_param_tensor,
    sq_loss,
    synthetic_pyramid,
)

SHAPES = [(4, 4, 3), (2, 2, 4)]


def small_problem(data_seed=100, param_seed=200, target_seed=300, mode="seeded-uniform"):
    p = synthetic_pyramid(SHAPES, seed=data_seed)
    params = init_params(SHAPES, mode=mode, seed=param_seed)
    target = EnhancedPyramid(synthetic_pyramid(SHAPES, seed=target_seed).layers)
    return p, params, target


class TestSqLoss:
    def test_zero_at_target(self):
        p = synthetic_pyramid(SHAPES, seed=1)
        y = EnhancedPyramid(p.layers)
        assert sq_loss(y, y) == 0.0

    def test_single_cell_difference(self):
        a = EnhancedPyramid((FeatureMap(np.array([[[2.0]]])),))
        b = EnhancedPyramid((FeatureMap(np.array([[[0.0]]])),))
        assert sq_loss(a, b) == 2.0  # half of 2 squared

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = EnhancedPyramid((FeatureMap(rng.normal(size=(2, 2, 2))),))
            b = EnhancedPyramid((FeatureMap(rng.normal(size=(2, 2, 2))),))
            assert sq_loss(a, b) >= 0.0

    def test_shape_mismatch(self):
        a = EnhancedPyramid((FeatureMap(np.ones((2, 2, 1))),))
        b = EnhancedPyramid((FeatureMap(np.ones((2, 1, 1))),))
        with pytest.raises(ShapeError):
            sq_loss(a, b)


class TestCentralDifference:
    def test_exact_on_quadratic(self):
        est = central_difference(lambda t: t * t, 3.0, 1e-5)
        assert abs(est - 6.0) <= 1e-6

    def test_truncation_error_quarters_on_cubic(self):
        # derivative of t^3 at 1 is 3; central-difference error is exactly eps^2
        err1 = abs(central_difference(lambda t: t**3, 1.0, 1e-3) - 3.0)
        err2 = abs(central_difference(lambda t: t**3, 1.0, 5e-4) - 3.0)
        assert err2 == pytest.approx(err1 / 4.0, rel=1e-3)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            central_difference(lambda t: t, 0.0, 0.0)


class TestBackward:
    def test_zero_loss_gives_zero_gradients(self):
        p, params, _ = small_problem()
        from featborrow import forward_pyramid

        target = forward_pyramid(p, params)
        loss, grads = backward(p, params, target)
        assert loss == 0.0
        for g in grads.values():
            assert np.abs(g).max() <= 1e-12

    def test_conv1x1_hand_gradient(self):
        # loss 0.5 * ||x @ W - T||^2 over cells: dW = x^T (x @ W - T)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(1, 1, 2))
        w = rng.normal(size=(2, 2))
        t = rng.normal(size=(1, 1, 2))

        def loss_at(w_flat_idx, value):
            w2 = w.copy()
            w2.flat[w_flat_idx] = value
            out = conv1x1(FeatureMap(x), ConvWeights1x1(w2)).data
            return 0.5 * float(((out - t) ** 2).sum())

        x_mat = x.reshape(1, 2)
        hand = x_mat.T @ (x_mat @ w - t.reshape(1, 2))
        for idx in range(w.size):
            fd = central_difference(lambda v: loss_at(idx, v), float(w.flat[idx]), 1e-6)
            assert abs(fd - hand.flat[idx]) <= 1e-6

    def test_residual_path_gradient_hand_formula(self):
        # all weights zero: Y = X, so dL/dW_combine = [X | Z | ctx]^T (X - T)
        # with Z = 0 (zero values) and ctx = 0 (zero kernel)
        p, _, target = small_problem()
        params = init_params(SHAPES, mode="zeros", seed=0)
        _, grads = backward(p, params, target)
        x_mat = p.layers[0].data.reshape(16, 3)
        err = (p.layers[0].data - target.layers[0].data).reshape(16, 3)
        expected = np.zeros((9, 3))
        expected[:3] = x_mat.T @ err
        np.testing.assert_allclose(grads["layer0.combine.w"], expected, atol=1e-9)
        np.testing.assert_allclose(grads["layer0.combine.bias"], err.sum(axis=0), atol=1e-9)

    def test_pure_and_repeatable(self):
        p, params, target = small_problem()
        before = {k: v.copy() for k, v in param_tensors(params).items()}
        l1, g1 = backward(p, params, target)
        l2, g2 = backward(p, params, target)
        assert l1 == l2
        for k in g1:
            assert np.array_equal(g1[k], g2[k])
        after = param_tensors(params)
        for k in before:
            assert np.array_equal(before[k], after[k])


class TestFiniteDifference:
    def test_matches_backward_everywhere(self):
        p, params, target = small_problem()
        _, analytic = backward(p, params, target)
        numeric = finite_difference(p, params, target, eps=1e-5)
        report = compare_gradients(analytic, numeric, eps=1e-5, tol=1e-4)
        assert report.passed, report.failed_groups

    def test_threads_do_not_change_results(self):
        p, params, target = small_problem(data_seed=5, param_seed=6, target_seed=7)
        seq = finite_difference(p, params, target, eps=1e-5, threads=1)
        par = finite_difference(p, params, target, eps=1e-5, threads=4)
        for k in seq:
            assert np.array_equal(seq[k], par[k])

    def test_rejects_bad_eps(self):
        p, params, target = small_problem()
        with pytest.raises(ValueError):
            finite_difference(p, params, target, eps=0.0)


class TestGradCheck:
    def test_passes_on_seeded_problem(self):
        p, params, target = small_problem()
        report = gradcheck(p, params, target, eps=1e-5, tol=1e-4)
        assert report.passed
        assert set(report.max_rel) == set(param_tensors(params))
        assert all(v < 1e-4 for v in report.max_rel.values())

    def test_passes_at_identity_initialization(self):
        p, params, target = small_problem(mode="identity")
        report = gradcheck(p, params, target, eps=1e-5, tol=1e-4)
        assert report.passed, report.failed_groups

    def test_corrupted_gradient_fails_and_names_group(self):
        p, params, target = small_problem()
        _, analytic = backward(p, params, target)
        numeric = finite_difference(p, params, target, eps=1e-5)
        bad = {k: v.copy() for k, v in analytic.items()}
        bad["layer0.key1.w"][0, 0] *= 2.0
        report = compare_gradients(bad, numeric, eps=1e-5, tol=1e-4)
        assert not report.passed
        assert report.failed_groups == ("layer0.key1.w",)

    def test_report_lines_mention_outcome(self):
        p, params, target = small_problem()
        report = gradcheck(p, params, target, eps=1e-5, tol=1e-4)
        text = "\n".join(report.lines())
        assert "PASS" in text


class TestParamPlumbing:
    def test_replace_tensor_roundtrip(self):
        params = init_params(SHAPES, seed=3)
        tensors = param_tensors(params)
        name = "layer0.value1.w"
        bumped = tensors[name].copy()
        bumped[0, 0] += 1.0
        new = replace_param_tensor(params, name, bumped)
        assert param_tensors(new)[name][0, 0] == tensors[name][0, 0] + 1.0
        # all other tensors untouched
        for k, v in param_tensors(new).items():
            if k != name:
                assert np.array_equal(v, tensors[k])

    def test_replace_unknown_name(self):
        params = init_params(SHAPES, seed=3)
        from featborrow import ValidationError

        with pytest.raises(ValidationError):
            replace_param_tensor(params, "layer0.nonsense.w", np.zeros((3, 3)))

    def test_canonical_group_names(self):
        params = init_params(SHAPES, seed=3)
        assert list(param_tensors(params)) == [
            "layer0.query.w",
            "layer0.key1.w",
            "layer0.value1.w",
            "layer0.deconv.kernel",
            "layer0.combine.w",
            "layer0.combine.bias",
        ]
