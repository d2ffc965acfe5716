"""
Tests for the from-scratch MLP, its vector-Jacobian products and Adam.
"""
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from src.numerics.nn import AdamState, MlpParams, adam_step, count_params, mlp_forward, mlp_init, mlp_vjp


def fd_check(p, x, cot, h=1e-5):
    """Central-difference parameter and input gradients of cot . f(x)."""
    theta = p.flatten()
    g_theta = np.empty_like(theta)
    for j in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[j] += h
        minus[j] -= h
        f_plus = mlp_forward(MlpParams.unflatten(p.layer_dims, plus), x)
        f_minus = mlp_forward(MlpParams.unflatten(p.layer_dims, minus), x)
        g_theta[j] = np.sum(cot * (f_plus - f_minus)) / (2 * h)
    g_x = np.empty_like(x)
    for j in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus.flat[j] += h
        minus.flat[j] -= h
        g_x.flat[j] = np.sum(cot * (mlp_forward(p, plus) - mlp_forward(p, minus))) / (2 * h)
    return g_theta, g_x


def rel_error(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3 * scale))


class TestMlpParams(unittest.TestCase):
    def test_parameter_count(self):
        """Count is the sum of (fan_in + 1) * fan_out."""
        self.assertEqual(count_params([6, 128, 5]), 1541)
        p = mlp_init([6, 128, 5], 0)
        self.assertEqual(p.param_count, 1541)
        self.assertEqual(p.flatten().shape, (1541,))

    def test_smallest_network(self):
        """[1, 1] has one weight and a zero bias."""
        p = mlp_init([1, 1], 42)
        self.assertEqual(p.param_count, 2)
        self.assertEqual(p.biases[0][0], 0.0)

    def test_init_deterministic(self):
        """Same dims and seed give identical parameters."""
        assert_array_equal(mlp_init([3, 8, 2], 7).flatten(), mlp_init([3, 8, 2], 7).flatten())
        self.assertFalse(np.array_equal(mlp_init([3, 8, 2], 7).flatten(), mlp_init([3, 8, 2], 8).flatten()))

    def test_invalid_dims(self):
        """Fewer than two dims or non-positive dims are rejected."""
        for dims in ([], [4], [3, 0, 2], [2, -1]):
            with self.assertRaises(ValueError):
                mlp_init(dims, 0)

    def test_flatten_round_trip(self):
        """unflatten(flatten(p)) reproduces every array exactly."""
        p = mlp_init([4, 6, 3], 1)
        vector = np.random.default_rng(2).normal(size=p.param_count)
        q = MlpParams.unflatten(p.layer_dims, vector)
        assert_array_equal(q.flatten(), vector)
        r = MlpParams.from_dict(q.to_dict())
        assert_array_equal(r.flatten(), vector)

    def test_flat_layout(self):
        """Weights are stored row-major, each followed by its bias."""
        vector = np.arange(count_params([2, 3, 1]), dtype=float)
        p = MlpParams.unflatten([2, 3, 1], vector)
        assert_array_equal(p.weights[0], [[0, 1], [2, 3], [4, 5]])
        assert_array_equal(p.biases[0], [6, 7, 8])
        assert_array_equal(p.weights[1], [[9, 10, 11]])
        assert_array_equal(p.biases[1], [12])

    def test_unflatten_wrong_length(self):
        """A vector of the wrong size is rejected."""
        with self.assertRaises(ValueError):
            MlpParams.unflatten([2, 3], np.zeros(5))


class TestForward(unittest.TestCase):
    def test_zero_network(self):
        """All-zero parameters give a zero output."""
        p = MlpParams.unflatten([3, 5, 2], np.zeros(count_params([3, 5, 2])))
        assert_array_equal(mlp_forward(p, np.array([0.3, -1.0, 2.0])), np.zeros(2))

    def test_single_affine_layer(self):
        """The output layer is the identity on W x + b."""
        p = MlpParams([2, 1], [np.array([[1.0, 1.0]])], [np.zeros(1)])
        self.assertAlmostEqual(float(mlp_forward(p, np.array([0.3, 0.7]))[0]), 1.0, places=15)

    def test_odd_activation_at_origin(self):
        """tanh(0) = 0 propagates through unit weights."""
        p = MlpParams([1, 1, 1], [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
        self.assertEqual(float(mlp_forward(p, np.array([0.0]))[0]), 0.0)

    def test_batched_rows_match_single(self):
        """A batch is evaluated row by row."""
        p = mlp_init([4, 7, 3], 5)
        x = np.random.default_rng(1).normal(size=(6, 4))
        batch = mlp_forward(p, x)
        for i in range(6):
            assert_allclose(batch[i], mlp_forward(p, x[i]), rtol=1e-14, atol=1e-15)

    def test_dimension_mismatch(self):
        """Inputs of the wrong width are rejected."""
        with self.assertRaises(ValueError):
            mlp_forward(mlp_init([3, 2], 0), np.zeros(4))


class TestVjp(unittest.TestCase):
    def test_zero_cotangent(self):
        """A zero cotangent yields zero gradients."""
        p = mlp_init([3, 4, 2], 0)
        g_theta, g_x = mlp_vjp(p, np.array([0.1, 0.2, 0.3]), np.zeros(2))
        assert_array_equal(g_theta, np.zeros(p.param_count))
        assert_array_equal(g_x, np.zeros(3))

    def test_linear_input_gradient(self):
        """For one affine layer the input gradient is W^T c."""
        p = mlp_init([3, 2], 9)
        cot = np.array([0.5, -1.5])
        _, g_x = mlp_vjp(p, np.array([1.0, 2.0, 3.0]), cot)
        assert_allclose(g_x, p.weights[0].T @ cot, rtol=1e-14)

    def test_matches_finite_differences(self):
        """Random small networks agree with central differences."""
        rng = np.random.default_rng(123)
        for trial in range(20):
            dims = [int(rng.integers(1, 9)), int(rng.integers(1, 17)), int(rng.integers(1, 9))]
            p = mlp_init(dims, trial)
            p = MlpParams.unflatten(dims, p.flatten() + 0.1 * rng.normal(size=p.param_count))
            x = rng.normal(size=dims[0])
            cot = rng.normal(size=dims[-1])
            g_theta, g_x = mlp_vjp(p, x, cot)
            fd_theta, fd_x = fd_check(p, x, cot)
            self.assertLess(rel_error(g_theta, fd_theta), 1e-5)
            self.assertLess(rel_error(g_x, fd_x), 1e-5)

    def test_batch_gradient_is_sum(self):
        """Parameter gradients of a batch are the sum over rows."""
        p = mlp_init([3, 5, 2], 4)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(4, 3))
        cot = rng.normal(size=(4, 2))
        g_theta, g_x = mlp_vjp(p, x, cot)
        rows = [mlp_vjp(p, x[i], cot[i]) for i in range(4)]
        assert_allclose(g_theta, np.sum([r[0] for r in rows], axis=0), rtol=1e-12, atol=1e-14)
        assert_allclose(g_x, np.stack([r[1] for r in rows]), rtol=1e-12, atol=1e-14)

    def test_cotangent_shape_mismatch(self):
        """Cotangent must match the output shape."""
        with self.assertRaises(ValueError):
            mlp_vjp(mlp_init([3, 2], 0), np.zeros(3), np.zeros(3))


class TestAdam(unittest.TestCase):
    def test_defaults(self):
        """Standard hyperparameters and zero moments."""
        st = AdamState.zeros(4)
        self.assertEqual((st.lr, st.beta1, st.beta2, st.eps, st.step), (1e-3, 0.9, 0.999, 1e-8, 0))
        assert_array_equal(st.m, np.zeros(4))
        assert_array_equal(st.v, np.zeros(4))

    def test_zero_gradient(self):
        """A zero gradient leaves parameters unchanged and counts the step."""
        params = np.array([1.0, -2.0, 3.0])
        new_params, st = adam_step(AdamState.zeros(3), params, np.zeros(3))
        assert_array_equal(new_params, params)
        self.assertEqual(st.step, 1)

    def test_first_step(self):
        """The first bias-corrected update is -lr * g / (|g| + eps)."""
        g = np.array([0.5, -2.0, 1e-3])
        new_params, _ = adam_step(AdamState.zeros(3), np.zeros(3), g)
        assert_allclose(new_params, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-10)

    def test_constant_gradient_descends(self):
        """Repeated steps move against a constant gradient."""
        g = np.array([0.3, -0.7])
        params = np.zeros(2)
        st = AdamState.zeros(2)
        for _ in range(2):
            new_params, st = adam_step(st, params, g)
            assert_array_equal(np.sign(new_params - params), -np.sign(g))
            params = new_params

    def test_rejects_bad_gradients(self):
        """Shape mismatches and non-finite gradients are rejected."""
        with self.assertRaises(ValueError):
            adam_step(AdamState.zeros(2), np.zeros(2), np.zeros(3))
        with self.assertRaises(ValueError):
            adam_step(AdamState.zeros(2), np.zeros(2), np.array([np.nan, 0.0]))

    def test_state_round_trip(self):
        """Optimizer state survives serialization."""
        _, st = adam_step(AdamState.zeros(3), np.zeros(3), np.array([0.1, 0.2, 0.3]))
        restored = AdamState.from_dict(st.to_dict())
        self.assertEqual(restored.step, 1)
        assert_array_equal(restored.m, st.m)
        assert_array_equal(restored.v, st.v)


if __name__ == '__main__':
    unittest.main()
