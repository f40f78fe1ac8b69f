"""Tensor engine: forward values, backward rules, and the gradient checker."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infogan_lab import autodiff as ad
from infogan_lab.autodiff import (
    BatchNormState,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    UsageError,
    forward_op,
    grad_check,
)


class TestForwardValues:
    def test_lrelu_example(self):
        out = ad.lrelu(Tensor([[-1.0, 0.0, 2.0]]), rate=0.1)
        np.testing.assert_array_equal(out.data, [[-0.1, 0.0, 2.0]])

    def test_softmax_uniform_row(self):
        out = ad.softmax(Tensor(np.zeros((1, 10))))
        np.testing.assert_allclose(out.data, np.full((1, 10), 0.1), atol=0)

    def test_matmul_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, Tensor(np.eye(2)))
        np.testing.assert_array_equal(out.data, a.data)

    def test_gaussian_reparam_affine(self):
        out = ad.gaussian_reparam(Tensor([[0.3]]), Tensor([[0.0]]), np.array([[0.5]]))
        assert out.data[0, 0] == 0.3 + np.exp(0.0) * 0.5 == 0.8

    def test_reparam_exact_elementwise(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(0, 1, (4, 3))
        ls = rng.normal(0, 0.5, (4, 3))
        eps = rng.normal(0, 1, (4, 3))
        out = ad.gaussian_reparam(Tensor(mu), Tensor(ls), eps)
        np.testing.assert_array_equal(out.data, mu + np.exp(ls) * eps)

    def test_add_broadcast_bias(self):
        out = ad.add(Tensor(np.zeros((3, 2))), Tensor([1.0, 2.0]))
        np.testing.assert_array_equal(out.data, [[1, 2], [1, 2], [1, 2]])

    def test_concat_and_reshape(self):
        a, b = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 1)))
        out = ad.concat([a, b], axis=1)
        assert out.shape == (2, 3)
        back = ad.reshape(out, (3, 2))
        assert back.shape == (3, 2)

    def test_shape_errors_name_op_and_shapes(self):
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError, match=r"add.*\(2, 3\)"):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
        with pytest.raises(ShapeError, match="reshape"):
            ad.reshape(Tensor(np.ones((2, 3))), (4, 2))

    def test_domain_errors(self):
        with pytest.raises(DomainError, match="log"):
            ad.log(Tensor([[0.0, 1.0]]))
        with pytest.raises(DomainError, match="exp"):
            ad.exp(Tensor([[1000.0]]))

    def test_unknown_op(self):
        with pytest.raises(UsageError, match="unknown op"):
            forward_op("convolve", [Tensor([1.0])])


class TestSoftmaxInvariants:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one_and_positive(self, seed):
        x = np.random.default_rng(seed).uniform(-30, 30, (4, 7))
        out = ad.softmax(Tensor(x)).data
        assert np.all(out > 0.0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_log_softmax_matches_log_of_softmax(self, seed):
        x = np.random.default_rng(seed).uniform(-30, 30, (4, 7))
        ls = ad.log_softmax(Tensor(x)).data
        np.testing.assert_allclose(ls, np.log(ad.softmax(Tensor(x)).data), atol=1e-9)
        assert np.all(np.isfinite(ls))


class TestBatchnorm:
    def test_train_mode_moments(self):
        # eps=1e-5 shifts output variance by eps/var; keep input var >> 10*eps/1e-6
        rng = np.random.default_rng(3)
        x = rng.normal(5.0, 10.0, (64, 4))
        state = BatchNormState(4)
        out = ad.batchnorm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4)), state, True)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.data.var(axis=0), 1.0, atol=1e-6)

    def test_running_stats_momentum(self):
        state = BatchNormState(2, momentum=0.9)
        x = np.array([[1.0, 2.0], [3.0, 6.0]])
        ad.batchnorm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, True)
        np.testing.assert_allclose(state.running_mean, 0.9 * 0.0 + 0.1 * x.mean(axis=0))
        np.testing.assert_allclose(state.running_var, 0.9 * 1.0 + 0.1 * x.var(axis=0))

    def test_eval_uses_running_stats(self):
        state = BatchNormState(1)
        state.running_mean = np.array([2.0])
        state.running_var = np.array([4.0])
        out = ad.batchnorm(Tensor([[4.0]]), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, False)
        np.testing.assert_allclose(out.data, (4.0 - 2.0) / np.sqrt(4.0 + state.eps))


class TestBackward:
    def test_square_sum(self):
        w = Tensor([1.0, 2.0, 3.0])
        with Tape() as tape:
            tape.watch(w)
            tape.backward(ad.reduce_sum(ad.mul(w, w)))
            np.testing.assert_array_equal(tape.grad(w).data, [2.0, 4.0, 6.0])

    def test_mean_spreads_evenly(self):
        x = Tensor(np.arange(4.0))
        with Tape() as tape:
            tape.watch(x)
            tape.backward(ad.reduce_mean(x))
            np.testing.assert_array_equal(tape.grad(x).data, np.full(4, 0.25))

    def test_fanout_accumulates(self):
        x = Tensor([2.0])
        with Tape() as tape:
            tape.watch(x)
            y = ad.add(ad.mul(x, x), ad.mul(x, x))
            tape.backward(ad.reduce_sum(y))
            np.testing.assert_array_equal(tape.grad(x).data, [8.0])

    def test_unreached_leaf_gets_zeros(self):
        x, other = Tensor([1.0, 2.0]), Tensor(np.ones((3, 3)))
        with Tape() as tape:
            tape.watch(x)
            tape.watch(other)
            tape.backward(ad.reduce_sum(x))
            np.testing.assert_array_equal(tape.grad(other).data, np.zeros((3, 3)))

    def test_non_scalar_root_rejected(self):
        x = Tensor(np.ones((2, 2)))
        with Tape() as tape:
            tape.watch(x)
            y = ad.mul(x, x)
            with pytest.raises(UsageError, match="scalar"):
                tape.backward(y)

    def test_root_must_be_on_tape(self):
        x = Tensor([1.0])
        with Tape() as tape:
            with pytest.raises(UsageError, match="not recorded"):
                tape.backward(x)

    def test_multiple_backward_roots_on_one_tape(self):
        x = Tensor([3.0])
        with Tape() as tape:
            tape.watch(x)
            a = ad.reduce_sum(ad.mul(x, x))
            b = ad.reduce_sum(x)
            tape.backward(a)
            np.testing.assert_array_equal(tape.grad(x).data, [6.0])
            tape.backward(b)
            np.testing.assert_array_equal(tape.grad(x).data, [1.0])

    def test_no_recording_without_tape(self):
        out = ad.mul(Tensor([1.0]), Tensor([2.0]))
        assert out.node is None


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        params = [Tensor(np.array([1.0, -2.0, 0.5]))]
        err = grad_check(lambda p: ad.reduce_sum(ad.mul(p[0], p[0])), params, step=1e-6)
        assert err <= 1e-9

    def test_sigmoid_cross_entropy_disc_loss(self):
        rng = np.random.default_rng(7)
        logits = Tensor(rng.normal(0, 2, (8, 8)))
        w = rng.normal(0, 1, (8, 8))

        def loss(p):
            s = ad.sigmoid(p[0])
            return ad.reduce_mean(ad.mul(ad.log(s), ad.const(w)))

        assert grad_check(loss, [logits], step=1e-6) <= 1e-5

    def test_step_bounds(self):
        with pytest.raises(UsageError):
            grad_check(lambda p: ad.reduce_sum(p[0]), [Tensor([1.0])], step=0.5)

    def test_nondeterministic_builder_rejected(self):
        state = {"n": 0}

        def noisy(p):
            state["n"] += 1
            return ad.reduce_sum(ad.mul(p[0], ad.const([float(state["n"])])))

        with pytest.raises(UsageError, match="deterministic"):
            grad_check(noisy, [Tensor([1.0])])

    def test_params_restored_after_check(self):
        p = Tensor(np.array([1.0, 2.0]))
        before = p.data.copy()
        grad_check(lambda ps: ad.reduce_sum(ad.mul(ps[0], ps[0])), [p])
        np.testing.assert_array_equal(p.data, before)


def test_forward_determinism_same_seed():
    def run():
        rng = np.random.default_rng(123)
        x = Tensor(rng.normal(0, 1, (5, 5)))
        y = ad.softmax(ad.matmul(ad.tanh(x), Tensor(rng.normal(0, 1, (5, 5)))))
        return y.data

    np.testing.assert_array_equal(run(), run())
