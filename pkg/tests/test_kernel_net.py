import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsl.data_model import NetworkParameters
from drsl.errors import BadArchitecture, ShapeMismatch
from drsl.kernel_net import (
    backprop,
    default_layer_sizes,
    forward,
    init_params,
    kernel_loss,
)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def finite_difference_grads(params, x, t, activation, h=1e-5):
    grads = []
    for li in range(len(params.layers)):
        layer_grads = []
        for arr_idx in range(2):
            shape = params.layers[li][arr_idx].shape
            g = np.zeros(shape)
            for pos in np.ndindex(shape):
                layers = [(w.copy(), b.copy()) for w, b in params.layers]
                layers[li][arr_idx][pos] += h
                plus = kernel_loss(
                    NetworkParameters(tuple(layers), params.layer_sizes), x, t, activation
                )
                layers[li][arr_idx][pos] -= 2 * h
                minus = kernel_loss(
                    NetworkParameters(tuple(layers), params.layer_sizes), x, t, activation
                )
                g[pos] = (plus - minus) / (2 * h)
            layer_grads.append(g)
        grads.append(tuple(layer_grads))
    return grads


class TestInitParams:
    def test_same_seed_bit_identical(self):
        a = init_params((8, 5, 4, 3), "scaled_normal", seed=42)
        b = init_params((8, 5, 4, 3), "scaled_normal", seed=42)
        for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)

    def test_shapes(self):
        params = init_params((8, 5, 4, 3), "paper_normal", seed=0)
        shapes = [(w.shape, b.shape) for w, b in params.layers]
        assert shapes == [((5, 8), (5,)), ((4, 5), (4,)), ((3, 4), (3,))]

    def test_scaled_normal_std(self):
        params = init_params((10_000, 50, 8, 4), "scaled_normal", seed=7)
        w = params.layers[0][0]
        assert abs(w.std() - 0.01) < 0.001  # 1/sqrt(10000), within 10%

    def test_paper_normal_std(self):
        params = init_params((2000, 50, 8, 4), "paper_normal", seed=7)
        assert abs(params.layers[0][0].std() - 1.0) < 0.1

    def test_too_few_layers_rejected(self):
        with pytest.raises(BadArchitecture):
            init_params((8, 3), "scaled_normal", seed=0)

    def test_output_wider_than_input_rejected(self):
        with pytest.raises(BadArchitecture):
            init_params((4, 8, 8, 6), "scaled_normal", seed=0)


class TestDefaultSizes:
    def test_reference_architectures(self):
        assert default_layer_sizes(1452) == (1452, 1000, 700, 500)
        assert default_layer_sizes(722) == (722, 700, 500, 200)

    def test_small_inputs_keep_output_within_voxels(self):
        for v in (8, 20, 50, 199):
            sizes = default_layer_sizes(v)
            assert sizes[0] == v
            assert sizes[-1] <= v
            assert len(sizes) == 4


class TestForward:
    def test_all_zero_params_sigmoid_outputs_zero(self):
        sizes = (4, 3, 3, 2)
        layers = tuple(
            (np.zeros((sizes[m + 1], sizes[m])), np.zeros(sizes[m + 1]))
            for m in range(3)
        )
        params = NetworkParameters(layers, sizes)
        out, trace = forward(params, np.ones((5, 4)), "sigmoid")
        np.testing.assert_array_equal(out, 0.0)
        # hidden activations sit at sigmoid(0) = 0.5
        np.testing.assert_array_equal(trace.activations[1], 0.5)

    def test_final_bias_sets_every_row(self):
        sizes = (4, 3, 2)
        layers = (
            (np.zeros((3, 4)), np.zeros(3)),
            (np.zeros((2, 3)), np.array([1.5, -2.0])),
        )
        params = NetworkParameters(layers, sizes)
        out, _ = forward(params, np.random.default_rng(0).standard_normal((6, 4)))
        np.testing.assert_allclose(out, np.tile([1.5, -2.0], (6, 1)))

    def test_matches_per_neuron_oracle(self):
        rng = np.random.default_rng(12)
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=5)
        x = rng.standard_normal((6, 3))
        out, _ = forward(params, x, "sigmoid")
        for i in range(6):
            h = x[i]
            for m, (w, b) in enumerate(params.layers):
                z = np.array(
                    [sum(w[r, c] * h[c] for c in range(w.shape[1])) + b[r] for r in range(w.shape[0])]
                )
                h = z if m == len(params.layers) - 1 else sigmoid(z)
            np.testing.assert_allclose(out[i], h, atol=1e-12)

    def test_trace_endpoints(self):
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=5)
        x = np.random.default_rng(0).standard_normal((4, 3))
        out, trace = forward(params, x, "tanh")
        np.testing.assert_array_equal(trace.activations[0], x)
        np.testing.assert_array_equal(trace.activations[-1], out)

    def test_wrong_width_rejected(self):
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=5)
        with pytest.raises(ShapeMismatch):
            forward(params, np.zeros((4, 7)))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_row_decomposable(self, seed):
        rng = np.random.default_rng(seed)
        params = init_params((5, 6, 4, 3), "scaled_normal", seed=seed)
        x = rng.standard_normal((7, 5))
        full, _ = forward(params, x, "tanh")
        rows = np.vstack([forward(params, x[i : i + 1], "tanh")[0] for i in range(7)])
        np.testing.assert_allclose(full, rows, atol=1e-12)


class TestKernelLoss:
    def test_zero_when_targets_equal_output(self):
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=1)
        x = np.random.default_rng(2).standard_normal((5, 3))
        out, _ = forward(params, x)
        assert kernel_loss(params, x, out) == 0.0

    def test_zero_net_all_one_targets(self):
        sizes = (3, 2, 3)
        layers = ((np.zeros((2, 3)), np.zeros(2)), (np.zeros((3, 2)), np.zeros(3)))
        params = NetworkParameters(layers, sizes)
        assert kernel_loss(params, np.zeros((2, 3)), np.ones((2, 3))) == 6.0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(9)
        params = init_params((4, 5, 4, 3), "scaled_normal", seed=9)
        x = rng.standard_normal((6, 4))
        t = rng.standard_normal((6, 3))
        out, _ = forward(params, x)
        oracle = sum(
            (out[i, j] - t[i, j]) ** 2 for i in range(6) for j in range(3)
        )
        assert kernel_loss(params, x, t) == pytest.approx(oracle, abs=1e-10)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        params = init_params((4, 5, 4, 3), "scaled_normal", seed=3)
        x = rng.standard_normal((6, 4))
        t = rng.standard_normal((6, 3))
        assert kernel_loss(params, x, t) >= 0.0


class TestBackprop:
    def test_zero_gradient_at_minimum(self):
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=1)
        x = np.random.default_rng(2).standard_normal((5, 3))
        out, _ = forward(params, x)
        grads = backprop(params, x, out)
        for gw, gb in grads.layers:
            np.testing.assert_allclose(gw, 0.0, atol=1e-12)
            np.testing.assert_allclose(gb, 0.0, atol=1e-12)

    def test_one_one_one_net_hand_derivation(self):
        # single sample through a 1-1-1 sigmoid net, chain rule by hand
        w2, a2, w3, a3 = 0.7, -0.2, 1.3, 0.4
        x_val, t_val = 0.9, 2.0
        params = NetworkParameters(
            ((np.array([[w2]]), np.array([a2])), (np.array([[w3]]), np.array([a3]))),
            (1, 1, 1),
        )
        x = np.array([[x_val]])
        t = np.array([[t_val]])
        z2 = w2 * x_val + a2
        h2 = sigmoid(np.array(z2))
        out = w3 * h2 + a3
        resid = 2.0 * (out - t_val)
        expected = {
            "w3": resid * h2,
            "a3": resid,
            "w2": resid * w3 * h2 * (1 - h2) * x_val,
            "a2": resid * w3 * h2 * (1 - h2),
        }
        grads = backprop(params, x, t, "sigmoid")
        assert grads.layers[1][0][0, 0] == pytest.approx(float(expected["w3"]), rel=1e-12)
        assert grads.layers[1][1][0] == pytest.approx(float(expected["a3"]), rel=1e-12)
        assert grads.layers[0][0][0, 0] == pytest.approx(float(expected["w2"]), rel=1e-12)
        assert grads.layers[0][1][0] == pytest.approx(float(expected["a2"]), rel=1e-12)

    @pytest.mark.parametrize("activation", ["sigmoid", "tanh", "relu"])
    def test_matches_finite_differences(self, activation):
        rng = np.random.default_rng(17)
        params = init_params((4, 5, 4, 3), "scaled_normal", seed=11)
        x = rng.standard_normal((6, 4))
        t = rng.standard_normal((6, 3))
        analytic = backprop(params, x, t, activation)
        numeric = finite_difference_grads(params, x, t, activation)
        for (aw, ab), (nw, nb) in zip(analytic.layers, numeric):
            rel_w = np.abs(aw - nw) / np.maximum(1.0, np.abs(nw))
            rel_b = np.abs(ab - nb) / np.maximum(1.0, np.abs(nb))
            assert rel_w.max() < 1e-5
            assert rel_b.max() < 1e-5

    def test_batch_gradient_is_sum_of_per_sample(self):
        rng = np.random.default_rng(8)
        params = init_params((3, 4, 4, 2), "scaled_normal", seed=8)
        x = rng.standard_normal((5, 3))
        t = rng.standard_normal((5, 2))
        full = backprop(params, x, t)
        per_sample = [backprop(params, x[i : i + 1], t[i : i + 1]) for i in range(5)]
        for li in range(len(full.layers)):
            np.testing.assert_allclose(
                full.layers[li][0],
                sum(g.layers[li][0] for g in per_sample),
                atol=1e-10,
            )


class TestActivationContract:
    def test_sigmoid_at_zero(self):
        from drsl.kernel_net import _apply_activation
        from drsl.data_model import Activation

        assert _apply_activation(np.array([0.0]), Activation.SIGMOID)[0] == 0.5

    def test_tanh_at_zero(self):
        from drsl.kernel_net import _apply_activation
        from drsl.data_model import Activation

        assert _apply_activation(np.array([0.0]), Activation.TANH)[0] == 0.0

    def test_relu_clamps_negatives(self):
        from drsl.kernel_net import _apply_activation
        from drsl.data_model import Activation

        z = np.array([-3.0, -0.5, 0.0, 2.0])
        np.testing.assert_array_equal(
            _apply_activation(z, Activation.RELU), [0.0, 0.0, 0.0, 2.0]
        )
