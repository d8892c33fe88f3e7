import numpy as np
import pytest

from wheelgraph import nn
from wheelgraph.errors import DegenerateVectorError, ShapeError, UnsupportedOpError


def numeric_grad(f, param, eps=1e-5):
    """Central finite differences of scalar-valued f over one parameter array."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = f()
        flat[i] = keep - eps
        down = f()
        flat[i] = keep
        out[i] = (up - down) / (2 * eps)
    return grad


def check_gradients(build, params, rtol=1e-4, atol=1e-7):
    """Compare tape gradients of scalar build() against finite differences."""
    loss = build()
    nn.backward(loss)
    analytic = [p.grad.copy() for p in params]
    for p, a in zip(params, analytic):
        n = numeric_grad(lambda: float(build().data), p)
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        out = nn.matmul(nn.constant(np.eye(4)), nn.constant(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_product(self):
        out = nn.matmul(nn.constant([[1.0, 2.0], [3.0, 4.0]]), nn.constant([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[2.0], [4.0]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n, k, m = rng.integers(1, 8, size=3)
            a = rng.standard_normal((n, k))
            b = rng.standard_normal((k, m))
            expected = np.zeros((n, m))
            for i in range(n):
                for j in range(m):
                    for t in range(k):
                        expected[i, j] += a[i, t] * b[t, j]
            got = nn.matmul(nn.constant(a), nn.constant(b)).data
            np.testing.assert_allclose(got, expected, atol=1e-12, rtol=0)

    def test_transpose_flags(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 5))
        b = rng.standard_normal((4, 5))
        np.testing.assert_allclose(
            nn.matmul(nn.constant(a), nn.constant(b), tb=True).data, a @ b.T
        )
        c = rng.standard_normal((3, 4))
        np.testing.assert_allclose(
            nn.matmul(nn.constant(a), nn.constant(c), ta=True).data, a.T @ c
        )

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.matmul(nn.constant(np.ones((2, 3))), nn.constant(np.ones((2, 3))))


class TestElementwise:
    def test_relu_all_negative(self):
        out = nn.relu(nn.constant(-np.ones((2, 3))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 3)))

    def test_relu_passthrough_and_idempotent(self):
        rng = np.random.default_rng(2)
        x = np.abs(rng.standard_normal((3, 3)))
        assert np.array_equal(nn.relu(nn.constant(x)).data, x)
        y = rng.standard_normal((3, 3))
        once = nn.relu(nn.constant(y)).data
        twice = nn.relu(nn.relu(nn.constant(y))).data
        np.testing.assert_array_equal(once, twice)

    def test_softmax_single(self):
        np.testing.assert_array_equal(nn.softmax(nn.constant([3.7])).data, [1.0])

    def test_softmax_uniform(self):
        for n in (2, 5, 9):
            out = nn.softmax(nn.constant(np.full(n, 0.3))).data
            np.testing.assert_allclose(out, np.full(n, 1 / n), atol=1e-15)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(6)
        a = nn.softmax(nn.constant(v)).data
        b = nn.softmax(nn.constant(v + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            v = rng.uniform(-50, 50, size=rng.integers(1, 12))
            assert abs(nn.softmax(nn.constant(v)).data.sum() - 1.0) < 1e-9

    def test_softmax_empty(self):
        with pytest.raises(ShapeError):
            nn.softmax(nn.constant(np.zeros(0)))

    def test_l2_normalize(self):
        np.testing.assert_allclose(nn.l2_normalize(nn.constant([3.0, 4.0])).data, [0.6, 0.8])

    def test_l2_normalize_unit_and_scale(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(7)
        unit = nn.l2_normalize(nn.constant(v)).data
        np.testing.assert_allclose(np.linalg.norm(unit), 1.0, atol=1e-12)
        np.testing.assert_allclose(
            nn.l2_normalize(nn.constant(17.5 * v)).data, unit, atol=1e-12
        )

    def test_l2_normalize_zero_vector(self):
        with pytest.raises(DegenerateVectorError):
            nn.l2_normalize(nn.constant(np.zeros(3)))

    def test_l2_normalize_rows_zero_row(self):
        x = np.array([[3.0, 4.0], [0.0, 0.0]])
        out = nn.l2_normalize_rows(nn.constant(x)).data
        np.testing.assert_allclose(out[0], [0.6, 0.8])
        np.testing.assert_array_equal(out[1], [0.0, 0.0])


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = nn.parameter(np.random.default_rng(0).standard_normal((3, 4)))
        nn.backward(nn.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_linear_layer_weight_gradient_pattern(self):
        # y = x W^T, loss = sum(y): dW = ones(out) outer sum-of-rows(x)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 3))
        layer = nn.DenseLayer(rng.standard_normal((2, 3)), np.zeros(2))
        loss = nn.sum_all(layer.apply(nn.constant(x)))
        nn.backward(loss)
        expected = np.outer(np.ones(2), x.sum(axis=0))
        np.testing.assert_allclose(layer.weight.grad, expected, atol=1e-12)
        np.testing.assert_allclose(layer.bias.grad, np.full(2, 5.0), atol=1e-12)

    def test_two_layer_net_finite_differences(self):
        rng = np.random.default_rng(6)
        x = nn.constant(rng.uniform(-1, 1, (4, 5)))
        l1 = nn.DenseLayer(rng.uniform(-1, 1, (6, 5)), rng.uniform(-1, 1, 6))
        l2 = nn.DenseLayer(rng.uniform(-1, 1, (2, 6)), rng.uniform(-1, 1, 2))

        def build():
            return nn.mean_all(l2.apply(nn.relu(l1.apply(x))))

        check_gradients(build, [l1.weight, l1.bias, l2.weight, l2.bias])

    def test_gradient_accumulates_across_backwards(self):
        w = nn.parameter([[2.0]])
        for _ in range(3):
            nn.backward(nn.sum_all(nn.mul(w, w)))
        np.testing.assert_allclose(w.grad, [[12.0]])

    def test_seed_gradient(self):
        x = nn.parameter(np.ones((2, 2)))
        y = nn.scale(x, 3.0)
        nn.backward(y, seed=np.array([[1.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_allclose(x.grad, [[3.0, 0.0], [0.0, 6.0]])

    def test_unsupported_op_rejected(self):
        x = nn.parameter(np.ones(2))
        bogus = nn.Tensor(np.ones(2), op="conv3d", parents=(x,))
        with pytest.raises(UnsupportedOpError):
            nn.backward(bogus)


class TestPerOpGradients:
    """Finite-difference checks per op, inputs in [-1, 1] away from kinks."""

    def setup_method(self):
        self.rng = np.random.default_rng(99)

    def param(self, *shape):
        return nn.parameter(self.rng.uniform(-1, 1, shape))

    def test_matmul(self):
        a, b = self.param(3, 4), self.param(4, 2)
        check_gradients(lambda: nn.sum_all(nn.mul(nn.matmul(a, b), nn.matmul(a, b))), [a, b])

    def test_matmul_tb(self):
        a, b = self.param(3, 4), self.param(2, 4)
        check_gradients(lambda: nn.sum_all(nn.matmul(a, b, tb=True)), [a, b])

    def test_matmul_ta(self):
        a, b = self.param(4, 3), self.param(4, 2)
        check_gradients(lambda: nn.sum_all(nn.matmul(a, b, ta=True)), [a, b])

    def test_add_bias(self):
        x, b = self.param(3, 4), self.param(4)
        check_gradients(lambda: nn.mean_all(nn.mul(nn.add_bias(x, b), nn.add_bias(x, b))), [x, b])

    def test_relu(self):
        x = nn.parameter(self.rng.uniform(-1, 1, (4, 4)) + 0.1)
        check_gradients(lambda: nn.sum_all(nn.mul(nn.relu(x), nn.relu(x))), [x])

    def test_softmax(self):
        v = self.param(6)
        w = nn.constant(self.rng.uniform(-1, 1, 6))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.softmax(v), w)), [v])

    def test_edge_softmax(self):
        scores = self.param(7)
        src = np.array([0, 0, 0, 1, 1, 2, 2])
        w = nn.constant(self.rng.uniform(-1, 1, 7))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.edge_softmax(scores, src, 3), w)), [scores])

    def test_l2_normalize(self):
        v = nn.parameter(self.rng.uniform(0.2, 1.0, 5))
        w = nn.constant(self.rng.uniform(-1, 1, 5))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.l2_normalize(v), w)), [v])

    def test_l2_normalize_rows(self):
        x = nn.parameter(self.rng.uniform(0.2, 1.0, (3, 4)))
        w = nn.constant(self.rng.uniform(-1, 1, (3, 4)))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.l2_normalize_rows(x), w)), [x])

    def test_concat_cols(self):
        a, b = self.param(3, 2), self.param(3, 4)
        w = nn.constant(self.rng.uniform(-1, 1, (3, 6)))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.concat_cols(a, b), w)), [a, b])

    def test_rows_gather(self):
        x = self.param(4, 3)
        idx = np.array([0, 2, 2, 3, 1])
        w = nn.constant(self.rng.uniform(-1, 1, (5, 3)))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.rows(x, idx), w)), [x])

    def test_scatter_matrix(self):
        v = self.param(4)
        rows_idx = np.array([0, 0, 1, 2])
        cols_idx = np.array([1, 2, 0, 1])
        w = nn.constant(self.rng.uniform(-1, 1, (3, 3)))
        check_gradients(
            lambda: nn.sum_all(nn.mul(nn.scatter_matrix(v, rows_idx, cols_idx, 3), w)), [v]
        )

    def test_normalize_rows(self):
        x = nn.parameter(self.rng.uniform(0.5, 1.5, (3, 4)))
        w = nn.constant(self.rng.uniform(-1, 1, (3, 4)))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.normalize_rows(x), w)), [x])

    def test_reshape(self):
        x = self.param(2, 6)
        w = nn.constant(self.rng.uniform(-1, 1, 12))
        check_gradients(lambda: nn.sum_all(nn.mul(nn.reshape(x, (12,)), w)), [x])

    def test_sub_mul_scale_mean(self):
        a, b = self.param(3, 3), self.param(3, 3)
        check_gradients(
            lambda: nn.mean_all(nn.scale(nn.mul(nn.sub(a, b), nn.sub(a, b)), 2.5)), [a, b]
        )


class TestSgd:
    def test_zero_gradient_no_op(self):
        p = np.array([[1.0, 2.0]])
        v = np.zeros_like(p)
        nn.sgd_step([p], [np.zeros_like(p)], [v], lr=0.1, momentum=0.9)
        np.testing.assert_array_equal(p, [[1.0, 2.0]])

    def test_plain_gradient_descent(self):
        p = np.array([1.0, 1.0])
        g = np.array([0.5, -0.5])
        nn.sgd_step([p], [g], [np.zeros(2)], lr=0.2, momentum=0.0)
        np.testing.assert_allclose(p, [0.9, 1.1])

    def test_momentum_two_steps(self):
        # constant gradient g: after two steps total update is lr*(g + 1.9*g)
        p = np.zeros(3)
        g = np.array([1.0, 2.0, -1.0])
        v = np.zeros(3)
        nn.sgd_step([p], [g], [v], lr=0.1, momentum=0.9)
        nn.sgd_step([p], [g], [v], lr=0.1, momentum=0.9)
        np.testing.assert_allclose(p, -0.1 * (g + 1.9 * g), atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.sgd_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], lr=0.1, momentum=0.0)

    def test_optimizer_wrapper(self):
        p = nn.parameter([1.0, -2.0])
        opt = nn.SGD([p], lr=0.5, momentum=0.0)
        nn.backward(nn.sum_all(nn.mul(p, p)))
        opt.step()
        np.testing.assert_allclose(p.data, [0.0, 0.0])
        opt.zero_grad()
        assert p.grad is None
