import numpy as np
import pytest

from cpcssl.autodiff import ops
from cpcssl.autodiff.counter import count_macs, mac_category
from cpcssl.autodiff.gradcheck import grad_check, relative_error
from cpcssl.autodiff.rng import RngState
from cpcssl.autodiff.tensor import Tape, Tensor, backward, parameter
from cpcssl.core.exceptions import ShapeError


class TestBackward:
    def test_broadcast_add_sums_back(self):
        a = parameter(np.ones((2, 3)), "a")
        b = parameter(np.arange(3.0), "b")
        with Tape() as tape:
            loss = ops.sum(ops.mul(ops.add(a, b), 2.0))
        grads = backward(tape, loss, {"a": a, "b": b})
        np.testing.assert_allclose(grads["a"], np.full((2, 3), 2.0))
        np.testing.assert_allclose(grads["b"], [4.0, 4.0, 4.0])

    def test_unreached_parameter_gets_zeros(self):
        a = parameter(np.ones(3), "a")
        unused = parameter(np.ones((2, 2)), "unused")
        with Tape() as tape:
            loss = ops.sum(ops.exp(a))
        grads = backward(tape, loss, {"a": a, "unused": unused})
        np.testing.assert_allclose(grads["a"], np.exp(np.ones(3)))
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_named_leaves_collected_without_params(self):
        w = parameter(np.array([1.0, 2.0]), "w")
        with Tape() as tape:
            loss = ops.sum(ops.mul(w, w))
        grads = backward(tape, loss)
        assert set(grads) == {"w"}
        np.testing.assert_allclose(grads["w"], [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        a = parameter(np.ones(3), "a")
        with Tape() as tape:
            out = ops.exp(a)
        with pytest.raises(ShapeError):
            backward(tape, out, {"a": a})

    def test_nothing_recorded_outside_tape(self):
        a = parameter(np.ones(3), "a")
        with Tape() as tape:
            pass
        ops.exp(a)
        assert len(tape) == 0


class TestOpGradients:
    """Autodiff against central differences for the kernels the model uses."""

    def test_matmul_tanh_log_softmax(self, gen):
        x = parameter(gen.normal(size=(4, 3)), "x")
        w = parameter(gen.normal(size=(3, 5)), "w")
        labels = np.array([0, 2, 4, 1])

        def fn():
            return ops.neg(ops.mean(ops.pick(ops.log_softmax(ops.tanh(ops.matmul(x, w))), labels)))

        assert grad_check(fn, {"x": x, "w": w}) < 1e-6

    def test_logsumexp_sigmoid_div(self, gen):
        a = parameter(gen.normal(size=(3, 4)), "a")
        b = parameter(gen.uniform(1.0, 2.0, size=(4,)), "b")

        def fn():
            return ops.sum(ops.logsumexp(ops.div(ops.sigmoid(a), b), axis=1))

        assert grad_check(fn, {"a": a, "b": b}) < 1e-6

    def test_conv2d_strided(self, gen):
        x = parameter(gen.normal(size=(2, 2, 7, 7)), "x")
        k = parameter(gen.normal(size=(3, 2, 3, 3)), "k")

        def fn():
            return ops.sum(ops.mul(ops.conv2d(x, k, stride=2), ops.conv2d(x, k, stride=2)))

        assert grad_check(fn, {"x": x, "k": k}) < 1e-6

    def test_conv1d(self, gen):
        x = parameter(gen.normal(size=(2, 6, 4)), "x")
        k = parameter(gen.normal(size=(3, 3, 4)), "k")

        def fn():
            return ops.sum(ops.tanh(ops.conv1d(x, k)))

        assert grad_check(fn, {"x": x, "k": k}) < 1e-6

    def test_gru_cell(self, gen):
        d, e = 3, 2
        names = ["w_update", "b_update", "w_reset", "b_reset", "w_candidate", "b_candidate"]
        shapes = [(e + d, d), (d,)] * 3
        params = {name: parameter(gen.normal(scale=0.5, size=shape), name) for name, shape in zip(names, shapes)}
        h0 = parameter(gen.normal(size=(2, d)), "h0")
        x = Tensor(gen.normal(size=(2, e)))

        def fn():
            weights = ops.GruWeights(*(params[name] for name in names))
            return ops.sum(ops.gru_cell(ops.gru_cell(h0, x, weights), x, weights))

        assert grad_check(fn, {**params, "h0": h0}) < 1e-6

    def test_take_accumulates_repeated_rows(self):
        a = parameter(np.arange(6.0).reshape(3, 2), "a")
        with Tape() as tape:
            loss = ops.sum(ops.take(a, np.array([0, 0, 2])))
        grads = backward(tape, loss, {"a": a})
        np.testing.assert_allclose(grads["a"], [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


class TestOpValues:
    def test_log_softmax_normalises(self, gen):
        logits = gen.normal(size=(4, 6)) * 50.0
        out = ops.log_softmax(logits).data
        np.testing.assert_allclose(np.exp(out).sum(axis=1), np.ones(4))

    def test_log_softmax_large_gap(self):
        np.testing.assert_allclose(ops.log_softmax(np.array([1000.0, 0.0])).data, [0.0, -1000.0])

    def test_conv2d_window_sums(self):
        image = np.arange(16.0).reshape(1, 4, 4)
        out = ops.conv2d(image, np.ones((1, 1, 2, 2))).data
        expected = [[image[0, i:i + 2, j:j + 2].sum() for j in range(3)] for i in range(3)]
        np.testing.assert_allclose(out[0], expected)
        strided = ops.conv2d(image, np.ones((1, 1, 2, 2)), stride=2).data
        np.testing.assert_allclose(strided[0], [[10.0, 18.0], [42.0, 50.0]])

    def test_conv2d_identity_kernel(self, gen):
        image = gen.normal(size=(2, 3, 5))
        kernels = np.eye(2).reshape(2, 2, 1, 1)
        np.testing.assert_allclose(ops.conv2d(image, kernels).data, image)

    def test_gru_with_zero_parameters_halves_state(self):
        d, e = 3, 2
        zero = ops.GruWeights(*(Tensor(np.zeros(s)) for s in [(e + d, d), (d,)] * 3))
        h_prev = np.array([1.0, -2.0, 0.5])
        out = ops.gru_cell(h_prev, np.array([4.0, -1.0]), zero)
        np.testing.assert_allclose(out.data, 0.5 * h_prev)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_conv2d_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            ops.conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))

    def test_gru_weight_shape_checked(self):
        bad = ops.GruWeights(*(Tensor(np.zeros(s)) for s in [(4, 2), (2,), (5, 3), (3,), (5, 3), (3,)]))
        with pytest.raises(ShapeError):
            ops.gru_cell(np.zeros(3), np.zeros(2), bad)

    def test_pick_out_of_range(self):
        with pytest.raises(IndexError):
            ops.pick(np.zeros((2, 3)), np.array([0, 3]))


class TestMacCounter:
    def test_matmul_and_conv_counts(self):
        with count_macs() as macs:
            with mac_category("enc"):
                ops.matmul(np.ones((3, 4)), np.ones((4, 5)))
            with mac_category("ag"):
                ops.conv2d(np.ones((2, 5, 5)), np.ones((3, 2, 3, 3)))
        assert macs["enc"] == 60
        assert macs["ag"] == 3 * 3 * 3 * 2 * 3 * 3

    def test_no_counting_outside_block(self):
        with count_macs() as macs:
            pass
        ops.matmul(np.ones((3, 4)), np.ones((4, 5)))
        assert sum(macs.values()) == 0

    def test_uncategorised_kernels_land_in_other(self):
        with count_macs() as macs:
            ops.matmul(np.ones(4), np.ones((4, 2)))
        assert macs["other"] == 8


class TestRngState:
    def test_same_state_same_stream(self):
        np.testing.assert_array_equal(RngState(7, 3).normal(5), RngState(7, 3).normal(5))

    def test_counter_and_label_separate_streams(self):
        base = RngState(7)
        assert not np.allclose(base.normal(5), base.advance().normal(5))
        assert not np.allclose(base.child("gumbel").normal(5), base.child("context").normal(5))
        assert base.child("gumbel") == RngState(7).child("gumbel")

    def test_at_sets_counter(self):
        assert RngState(7, 9).at(2) == RngState(7, 2)

    def test_out_of_range_seed(self):
        with pytest.raises(ValueError):
            RngState(-1)


class TestGradCheck:
    def test_relative_error_floor(self):
        err = relative_error(np.array([0.0, 1.0]), np.array([0.0, 1.1]), floor=1e-12)
        np.testing.assert_allclose(err, [0.0, 0.1 / 2.1])

    def test_detects_a_wrong_gradient(self, gen):
        a = parameter(gen.uniform(0.5, 1.5, size=3), "a")

        def fn():
            # Square with a VJP missing the factor two.
            squared = ops._emit("bad_square", a.data ** 2, (a,), lambda g: (g * a.data,))
            return ops.sum(squared)

        assert grad_check(fn, {"a": a}) > 0.3
