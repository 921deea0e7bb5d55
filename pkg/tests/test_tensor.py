"""Tests for the autodiff tensor engine.

Finite-difference gradient checks are the oracle for every differentiable op.
"""

import numpy as np
import pytest

from degalign import tensor as T
from degalign.errors import (
    ContractError,
    GraphStateError,
    ShapeMismatchError,
    UnsupportedConfigError,
)


def rand(shape, seed):
    return np.random.default_rng(seed).normal(size=shape)


class TestMatmul:
    def test_identity(self):
        eye = T.tensor(np.eye(2))
        out = T.matmul(eye, eye)
        assert np.array_equal(out.data, np.eye(2))

    def test_analytic(self):
        a = T.tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.tensor([[1.0], [1.0]])
        assert np.array_equal(T.matmul(a, b).data, [[3.0], [7.0]])

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError) as exc:
            T.matmul(T.tensor(np.ones((2, 3))), T.tensor(np.ones((2, 3))))
        assert "(2, 3)" in str(exc.value)

    def test_grad_matches_finite_differences(self):
        b = rand((4, 2), seed=1)

        def f(a):
            return T.matmul(a, T.tensor(b)).sum()

        report = T.grad_check(f, T.tensor(rand((3, 4), seed=0)),
                              step=1e-5, tol=1e-6)
        assert report.passed, str(report)


class TestConv2d:
    def test_1x1_identity(self):
        x = T.tensor(rand((1, 4, 4), seed=2))
        w = T.tensor(np.ones((1, 1, 1, 1)))
        b = T.tensor(np.zeros(1))
        out = T.conv2d(x, w, b)
        assert np.allclose(out.data, x.data)

    def test_ones_kernel_on_one_hot(self):
        x = np.zeros((1, 5, 5))
        x[0, 2, 2] = 1.0
        out = T.conv2d(T.tensor(x), T.tensor(np.ones((1, 1, 3, 3))),
                       T.tensor(np.zeros(1)))
        expected = np.zeros((1, 5, 5))
        expected[0, 1:4, 1:4] = 1.0
        assert np.array_equal(out.data, expected)

    def test_even_kernel_rejected(self):
        with pytest.raises(UnsupportedConfigError):
            T.conv2d(T.tensor(np.ones((1, 4, 4))),
                     T.tensor(np.ones((1, 1, 2, 2))), T.tensor(np.zeros(1)))

    @pytest.mark.parametrize("target", ["input", "weights", "bias"])
    def test_param_grads_match_finite_differences(self, target):
        x0 = rand((2, 4, 4), seed=3)
        w0 = rand((3, 2, 3, 3), seed=4)
        b0 = rand(3, seed=5)

        def make(point_name):
            def f(p):
                x = p if point_name == "input" else T.tensor(x0)
                w = p if point_name == "weights" else T.tensor(w0)
                b = p if point_name == "bias" else T.tensor(b0)
                out = T.conv2d(x, w, b)
                return (out * out).sum()
            return f

        start = {"input": x0, "weights": w0, "bias": b0}[target]
        report = T.grad_check(make(target), T.tensor(start), tol=1e-5)
        assert report.passed, str(report)

    def test_batched_matches_per_sample(self):
        xb = rand((3, 2, 5, 5), seed=6)
        w = T.tensor(rand((4, 2, 3, 3), seed=7))
        b = T.tensor(rand(4, seed=8))
        batched = T.conv2d(T.tensor(xb), w, b)
        for i in range(3):
            single = T.conv2d(T.tensor(xb[i]), w, b)
            assert np.allclose(batched.data[i], single.data)


class TestLeakyRelu:
    def test_positive_unchanged(self):
        x = np.abs(rand((3, 3), seed=9)) + 0.1
        assert np.array_equal(T.leaky_relu(T.tensor(x), 0.2).data, x)

    def test_negative_scaled(self):
        assert T.leaky_relu(T.tensor(-1.0), 0.2).item() == pytest.approx(-0.2)

    def test_grad_away_from_kink(self):
        x = rand((4, 4), seed=10)
        x[np.abs(x) < 1e-3] = 0.5

        def f(p):
            return T.leaky_relu(p, 0.2).sum()

        report = T.grad_check(f, T.tensor(x), tol=1e-6)
        assert report.passed, str(report)


class TestUpsampleNearest:
    def test_factor_1_identity(self):
        x = rand((2, 3, 3), seed=11)
        assert np.array_equal(T.upsample_nearest(T.tensor(x), 1).data, x)

    def test_replication(self):
        out = T.upsample_nearest(T.tensor(np.full((1, 1, 1), 5.0)), 2)
        assert np.array_equal(out.data, np.full((1, 2, 2), 5.0))

    def test_sum_gradient_is_factor_squared(self):
        x = T.tensor(rand((1, 2, 2), seed=12), requires_grad=True)
        T.upsample_nearest(x, 3).sum().backward()
        assert np.array_equal(x.grad, np.full((1, 2, 2), 9.0))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = T.tensor(rand((3, 2), seed=13), requires_grad=True)
        x.sum().backward()
        assert np.array_equal(x.grad, np.ones((3, 2)))

    def test_frobenius_gradient_is_2x(self):
        xd = rand((3, 2), seed=14)
        x = T.tensor(xd, requires_grad=True)
        (x * x).sum().backward()
        assert np.allclose(x.grad, 2 * xd)

    def test_non_scalar_loss_rejected(self):
        x = T.tensor(rand((2, 2), seed=15), requires_grad=True)
        with pytest.raises(ContractError):
            (x * x).backward()

    def test_second_backward_rejected(self):
        x = T.tensor(rand(3, seed=16), requires_grad=True)
        loss = x.sum()
        loss.backward()
        with pytest.raises(GraphStateError):
            loss.backward()

    def test_composite_graph_matches_finite_differences(self):
        w0 = rand((2, 1, 3, 3), seed=17)
        x0 = rand((1, 5, 5), seed=18)

        def f(w):
            feats = T.leaky_relu(T.conv2d(T.tensor(x0), w, T.tensor(np.zeros(2))))
            flat = feats.reshape(2, 25).transpose()
            mu = T.matmul(T.tensor(np.full((1, 25), 1 / 25.0)), flat)
            return (mu * mu).sum()

        report = T.grad_check(f, T.tensor(w0), tol=1e-4)
        assert report.passed, str(report)

    def test_tape_independence(self):
        a = T.tensor(rand(3, seed=19), requires_grad=True)
        b = T.tensor(rand(3, seed=20), requires_grad=True)
        a.sum().backward()
        assert b.grad is None
        (b * b).sum().backward()
        assert np.array_equal(a.grad, np.ones(3))


class TestGradCheck:
    def test_linear_function_is_exact(self):
        # at zeros the probe arithmetic is exact, so the error is exactly 0
        report = T.grad_check(lambda p: p.sum(), T.tensor(np.zeros(4)))
        assert report.passed
        assert report.max_rel_err == 0.0
        report = T.grad_check(lambda p: p.sum(), T.tensor(rand(4, seed=21)))
        assert report.max_rel_err < 1e-10

    def test_wrong_backward_rule_is_caught(self):
        def bad_square(p):
            out = T.Tensor(p.data ** 2, _parents=(p,))
            out._backward_fn = lambda g: (g * 3.0 * p.data,)  # deliberately wrong
            return out.sum()

        report = T.grad_check(bad_square, T.tensor(rand(3, seed=22) + 2.0))
        assert not report.passed
        assert any("coordinate" in msg for msg in report.failures)


class TestChannelDropout:
    def test_keep_prob_1_identity(self):
        x = rand((4, 3, 3), seed=23)
        out = T.channel_dropout(T.tensor(x), 1.0, np.random.default_rng(0))
        assert np.array_equal(out.data, x)

    def test_zero_keep_prob_rejected(self):
        with pytest.raises(UnsupportedConfigError):
            T.channel_dropout(T.tensor(rand((2, 2, 2), seed=24)), 0.0,
                              np.random.default_rng(0))

    def test_dropped_channels_are_zero_planes(self):
        x = np.abs(rand((64, 2, 2), seed=25)) + 1.0
        out = T.channel_dropout(T.tensor(x), 0.5, np.random.default_rng(7)).data
        per_channel = out.reshape(64, -1)
        dropped = np.all(per_channel == 0.0, axis=1)
        kept = ~dropped
        assert dropped.any() and kept.any()
        assert np.allclose(per_channel[kept], x.reshape(64, -1)[kept] / 0.5)

    def test_expectation_preserved(self):
        x = np.abs(rand((8, 4, 4), seed=26)) + 0.5
        total = np.zeros_like(x)
        n = 10_000
        for i in range(n):
            total += T.channel_dropout(T.tensor(x), 0.7,
                                       np.random.default_rng(i)).data
        assert abs(total.mean() / n - x.mean()) < 0.02 * x.mean()


def test_forward_determinism():
    x = rand((2, 6, 6), seed=27)
    w = rand((3, 2, 3, 3), seed=28)
    a = T.conv2d(T.tensor(x), T.tensor(w), T.tensor(np.zeros(3))).data
    b = T.conv2d(T.tensor(x), T.tensor(w), T.tensor(np.zeros(3))).data
    assert np.array_equal(a, b)
