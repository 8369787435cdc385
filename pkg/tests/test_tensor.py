import numpy as np
import numpy.testing as npt
import pytest

from exprnet import tensor as T
from exprnet.gradcheck import finite_diff_check
from exprnet.tensor import Parameter, Tensor, TensorError

import oracles


def t(data, rg=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=rg)


class TestConv2d:
    def test_identity_shape_scaling(self):
        x = t(np.ones((1, 1, 3, 3)))
        w = t([[[[2.0]]]])
        out = T.conv2d(x, w)
        npt.assert_array_equal(out.data, np.full((1, 1, 3, 3), 2.0))

    def test_full_window_sum(self):
        x = t([[[[1.0, 2.0], [3.0, 4.0]]]])
        w = t(np.ones((1, 1, 2, 2)))
        out = T.conv2d(x, w)
        npt.assert_array_equal(out.data, [[[[10.0]]]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))
        out = T.conv2d(t(x), t(w), stride=2, padding=1)
        assert out.shape == (2, 4, 4, 4)
        npt.assert_allclose(out.data, oracles.conv2d_loops(x, w, stride=2, padding=1), atol=1e-6)

    def test_channel_mismatch_errors(self):
        with pytest.raises(TensorError, match="channel"):
            T.conv2d(t(np.ones((1, 2, 4, 4))), t(np.ones((1, 3, 3, 3))))

    def test_kernel_too_large_errors(self):
        with pytest.raises(TensorError, match="larger"):
            T.conv2d(t(np.ones((1, 1, 2, 2))), t(np.ones((1, 1, 5, 5))))

    @pytest.mark.parametrize("case", range(10))
    def test_randomized_oracle_equivalence(self, case):
        rng = np.random.default_rng(100 + case)
        n, c, o = rng.integers(1, 5), rng.integers(1, 9), rng.integers(1, 6)
        h = int(rng.integers(4, 17))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x = rng.standard_normal((n, c, h, h))
        w = rng.standard_normal((o, c, k, k))
        b = rng.standard_normal(o)
        out = T.conv2d(t(x), t(w), t(b), stride=stride, padding=pad)
        npt.assert_allclose(out.data, oracles.conv2d_loops(x, w, b, stride, pad), atol=1e-6)


class TestMaxPool:
    def test_single_window(self):
        out = T.max_pool2d(t([[[[1.0, 2.0], [3.0, 4.0]]]]), kernel=2, stride=2)
        npt.assert_array_equal(out.data, [[[[4.0]]]])

    def test_constant_input(self):
        out = T.max_pool2d(t(np.full((1, 2, 4, 4), 7.0)), kernel=2, stride=2)
        npt.assert_array_equal(out.data, np.full((1, 2, 2, 2), 7.0))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 1, 7, 7))
        out = T.max_pool2d(t(x), kernel=3, stride=2, padding=1)
        assert out.shape == (1, 1, 4, 4)
        npt.assert_allclose(out.data, oracles.max_pool2d_loops(x, 3, 2, 1), atol=1e-12)

    def test_window_too_large_errors(self):
        with pytest.raises(TensorError):
            T.max_pool2d(t(np.ones((1, 1, 2, 2))), kernel=5, stride=1)

    def test_tie_routes_grad_to_first_argmax(self):
        x = t(np.full((1, 1, 2, 2), 3.0), rg=True)
        out = T.max_pool2d(x, kernel=2, stride=2)
        T.tsum(out).backward()
        npt.assert_array_equal(x.grad, [[[[1.0, 0.0], [0.0, 0.0]]]])


class TestRelu:
    def test_definition(self):
        npt.assert_array_equal(T.relu(t([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_positive_identity(self):
        x = np.array([0.5, 1.0, 3.0])
        npt.assert_array_equal(T.relu(t(x)).data, x)

    def test_gradient_zero_at_nonpositive(self):
        x = t([-1.0, 2.0], rg=True)
        T.tsum(T.relu(x)).backward()
        npt.assert_array_equal(x.grad, [0.0, 1.0])

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(50)
        once = T.relu(t(x)).data
        npt.assert_array_equal(T.relu(Tensor(once)).data, once)


class TestGlobalAvgPool:
    def test_constant(self):
        out = T.global_avg_pool2d(t(np.full((2, 3, 4, 4), 3.0)))
        npt.assert_allclose(out.data, np.full((2, 3), 3.0))

    def test_arithmetic_mean(self):
        out = T.global_avg_pool2d(t([[[[1.0, 2.0], [3.0, 4.0]]]]))
        npt.assert_allclose(out.data, [[2.5]])

    def test_backward_uniform(self):
        x = t(np.ones((1, 1, 2, 2)), rg=True)
        T.tsum(T.global_avg_pool2d(x)).backward()
        npt.assert_allclose(x.grad, np.full((1, 1, 2, 2), 0.25))


class TestLinear:
    def test_identity_weight(self):
        x = np.arange(6.0).reshape(2, 3)
        out = T.linear(t(x), t(np.eye(3)), t(np.zeros(3)))
        npt.assert_allclose(out.data, x)

    def test_dot_product(self):
        out = T.linear(t([[1.0, 2.0]]), t([[3.0, 4.0]]), t([5.0]))
        npt.assert_allclose(out.data, [[16.0]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 512))
        w = rng.standard_normal((7, 512))
        b = rng.standard_normal(7)
        out = T.linear(t(x), t(w), t(b))
        npt.assert_allclose(out.data, oracles.linear_loops(x, w, b), atol=1e-6)

    def test_shape_mismatch_errors(self):
        with pytest.raises(TensorError):
            T.linear(t(np.ones((2, 3))), t(np.ones((4, 5))))


class TestBatchNorm:
    def test_train_normalizes(self):
        rng = np.random.default_rng(4)
        x = 5.0 + 2.0 * rng.standard_normal((16, 3, 8, 8))
        gamma = t(np.ones(3), rg=True)
        beta = t(np.zeros(3), rg=True)
        rm, rv = np.zeros(3), np.ones(3)
        out = T.batch_norm2d(t(x), gamma, beta, rm, rv, training=True)
        npt.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-5)
        npt.assert_allclose(out.data.var(axis=(0, 2, 3)), 1.0, atol=1e-3)

    def test_eval_identity_stats(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 4, 4))
        out = T.batch_norm2d(t(x), t(np.ones(3)), t(np.zeros(3)),
                             np.zeros(3), np.ones(3), training=False, epsilon=1e-5)
        npt.assert_allclose(out.data, x, atol=1e-4)

    def test_train_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 2, 3, 3))
        gamma = rng.standard_normal(2)
        beta = rng.standard_normal(2)
        out = T.batch_norm2d(t(x), t(gamma), t(beta), np.zeros(2), np.ones(2),
                             training=True, epsilon=1e-5)
        npt.assert_allclose(out.data, oracles.batch_norm2d_train_loops(x, gamma, beta, 1e-5),
                            atol=1e-6)

    def test_eval_uninitialized_stats_error(self):
        with pytest.raises(TensorError, match="uninitialized"):
            T.batch_norm2d(t(np.ones((1, 2, 2, 2))), t(np.ones(2)), t(np.zeros(2)),
                           np.full(2, np.nan), np.full(2, np.nan), training=False)

    def test_running_stat_update_rule(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((4, 2, 3, 3))
        rm, rv = np.full(2, 0.3), np.full(2, 0.7)
        momentum = 0.1
        expected_rm = (1 - momentum) * rm + momentum * x.mean(axis=(0, 2, 3))
        expected_rv = (1 - momentum) * rv + momentum * x.var(axis=(0, 2, 3))
        T.batch_norm2d(t(x), t(np.ones(2)), t(np.zeros(2)), rm, rv,
                       training=True, momentum=momentum)
        npt.assert_allclose(rm, expected_rm, atol=1e-12)
        npt.assert_allclose(rv, expected_rv, atol=1e-12)


LN2 = float(np.log(2.0))


class TestWeightedCrossEntropy:
    def test_uniform_softmax(self):
        loss = T.weighted_cross_entropy(t([[0.0, 0.0]]), [0], t([1.0, 1.0]))
        assert loss.item() == pytest.approx(LN2, abs=1e-9)

    def test_weight_neutrality(self):
        rng = np.random.default_rng(8)
        logits = rng.standard_normal((6, 7))
        labels = rng.integers(0, 7, size=6).tolist()
        weighted = T.weighted_cross_entropy(t(logits), labels, t(np.ones(7))).item()
        plain = np.mean([oracles.cross_entropy_direct(logits[i:i + 1], [labels[i]], np.ones(7))
                         for i in range(6)])
        assert weighted == pytest.approx(plain, abs=1e-9)

    def test_direct_summation_oracle(self):
        logits = np.array([[2.0, 0.0], [0.0, 2.0]])
        labels = [0, 1]
        weights = np.array([3.0, 1.0])
        expected_per_sample = np.log(1.0 + np.exp(-2.0))
        loss = T.weighted_cross_entropy(t(logits), labels, t(weights)).item()
        assert loss == pytest.approx(expected_per_sample, abs=1e-9)
        assert loss == pytest.approx(oracles.cross_entropy_direct(logits, labels, weights), abs=1e-12)

    def test_label_out_of_range_errors(self):
        with pytest.raises(TensorError, match="label"):
            T.weighted_cross_entropy(t([[0.0, 0.0]]), [2], t([1.0, 1.0]))

    def test_nonpositive_weight_errors(self):
        with pytest.raises(TensorError, match="positive"):
            T.weighted_cross_entropy(t([[0.0, 0.0]]), [0], t([1.0, 0.0]))


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        logits = rng.standard_normal((20, 7)) * 10
        probs = T.softmax_rows(logits)
        npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(10)
        logits = rng.standard_normal((10, 7))
        shifted = logits + rng.standard_normal((10, 1)) * 50
        npt.assert_allclose(T.softmax_rows(logits), T.softmax_rows(shifted), atol=1e-6)


class TestBackward:
    def test_linear_sum(self):
        w = Parameter("w", np.array([1.0, 2.0, 3.0]))
        T.tsum(w).backward()
        npt.assert_array_equal(w.grad, np.ones(3))

    def test_quadratic(self):
        w = Parameter("w", np.array([1.0, 2.0, 3.0]))
        loss = T.mul(T.tsum(T.mul(w, w)), Tensor(np.array(0.5)))
        loss.backward()
        npt.assert_allclose(w.grad, [1.0, 2.0, 3.0])

    def test_accumulation_doubles(self):
        w = Parameter("w", np.array([1.5, -2.0]))
        loss = T.tsum(T.mul(w, w))
        loss.backward()
        once = w.grad.copy()
        loss.backward()
        npt.assert_array_equal(w.grad, 2.0 * once)

    def test_nonscalar_errors(self):
        with pytest.raises(TensorError, match="scalar"):
            t([1.0, 2.0], rg=True).backward()

    def test_param_name_charset(self):
        with pytest.raises(TensorError, match="charset"):
            Parameter("Bad.Name", np.zeros(1))


class TestFiniteDiffCheck:
    def test_sum_of_squares_exact(self):
        rng = np.random.default_rng(11)
        point = Tensor(rng.standard_normal(8))
        err = finite_diff_check(lambda x: T.tsum(T.mul(x, x)), point, epsilon=1e-5)
        assert err < 1e-8

    def test_conv_relu_composite(self):
        rng = np.random.default_rng(12)
        w = Tensor(rng.standard_normal((2, 2, 3, 3)))
        point = Tensor(rng.standard_normal((1, 2, 5, 5)) + 0.05)

        def f(x):
            return T.tsum(T.relu(T.conv2d(x, w, stride=1, padding=1)))

        assert finite_diff_check(f, point, epsilon=1e-4) < 1e-5

    def test_cross_entropy_wrt_logits(self):
        rng = np.random.default_rng(13)
        point = Tensor(rng.standard_normal((3, 7)))
        weights = Tensor(np.linspace(0.5, 1.5, 7))
        labels = [0, 3, 6]

        def f(x):
            return T.weighted_cross_entropy(x, labels, weights)

        assert finite_diff_check(f, point, epsilon=1e-5) < 1e-6


@pytest.mark.parametrize("trial", range(3))
@pytest.mark.parametrize("op", ["conv2d", "max_pool2d", "linear", "batch_norm2d",
                                "global_avg_pool2d", "relu", "wce"])
def test_every_op_passes_gradcheck(op, trial):
    rng = np.random.default_rng(sum(map(ord, op)) * 101 + trial)
    if op == "conv2d":
        w = Tensor(rng.standard_normal((3, 2, 3, 3)))
        point = Tensor(rng.standard_normal((2, 2, 5, 5)))
        f = lambda x: T.tsum(T.conv2d(x, w, stride=2, padding=1))
    elif op == "max_pool2d":
        point = Tensor(rng.standard_normal((1, 2, 6, 6)))
        f = lambda x: T.tsum(T.max_pool2d(x, kernel=2, stride=2))
    elif op == "linear":
        w = Tensor(rng.standard_normal((4, 6)))
        b = Tensor(rng.standard_normal(4))
        point = Tensor(rng.standard_normal((3, 6)))
        f = lambda x: T.tsum(T.linear(x, w, b))
    elif op == "batch_norm2d":
        gamma = Tensor(rng.standard_normal(2) + 1.0)
        beta = Tensor(rng.standard_normal(2))
        point = Tensor(rng.standard_normal((3, 2, 4, 4)))
        f = lambda x: T.tsum(T.mul(y := T.batch_norm2d(x, gamma, beta, np.zeros(2), np.ones(2),
                                                       training=True), y))
    elif op == "global_avg_pool2d":
        point = Tensor(rng.standard_normal((2, 3, 4, 4)))
        f = lambda x: T.tsum(T.global_avg_pool2d(x))
    elif op == "relu":
        point = Tensor(rng.standard_normal(20) + np.sign(rng.standard_normal(20)) * 0.1)
        f = lambda x: T.tsum(T.relu(x))
    else:
        labels = rng.integers(0, 5, size=4).tolist()
        weights = Tensor(rng.uniform(0.5, 2.0, 5))
        point = Tensor(rng.standard_normal((4, 5)))
        f = lambda x: T.weighted_cross_entropy(x, labels, weights)
    assert finite_diff_check(f, point, epsilon=1e-5) < 1e-5
