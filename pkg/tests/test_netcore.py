import numpy as np
import pytest

from src.errors import DimensionError, NonFiniteError
from src.netcore import (LinearLayer, Mlp, RngState, as_tensor, finite_diff_check, init_gaussian,
                         mlp_backward, mlp_forward, relative_error, sgd_step,
                         softmax_cross_entropy)
from src.netcore.layers import layer_param_names, named_layer_parameters


@pytest.fixture
def small_mlp():
    rng = RngState(7)
    dims = [4, 6, 5, 3]
    return Mlp([LinearLayer.initialize(dims[j], dims[j + 1], 0.5, rng.child(f"layer{j}"))
                for j in range(3)])


@pytest.fixture
def batch():
    generator = RngState(11).generator
    return generator.normal(size=(8, 4)), generator.integers(0, 3, size=8)


class TestRngState:
    def test_same_seed_same_stream(self):
        a = RngState(42).generator.normal(size=5)
        b = RngState(42).generator.normal(size=5)
        assert np.array_equal(a, b)

    def test_child_ignores_parent_consumption(self):
        parent = RngState(3)
        before = parent.child("init").generator.normal(size=4)
        parent.generator.normal(size=100)
        after = parent.child("init").generator.normal(size=4)
        assert np.array_equal(before, after)

    def test_children_are_distinct(self):
        parent = RngState(3)
        assert parent.child("a").seed != parent.child("b").seed
        assert parent.child("a").seed != RngState(4).child("a").seed

    def test_seed_range(self):
        with pytest.raises(ValueError):
            RngState(-1)
        with pytest.raises(ValueError):
            RngState(2 ** 64)

    def test_init_gaussian_rejects_non_positive_std(self):
        with pytest.raises(ValueError):
            init_gaussian((2, 2), 0.0, RngState(0))


def test_as_tensor_rejects_nan():
    with pytest.raises(NonFiniteError):
        as_tensor([1.0, np.nan], "sample")


def test_linear_layer_shape_validation():
    with pytest.raises(DimensionError):
        LinearLayer(np.zeros((3, 2)), np.zeros(2))


def test_mlp_chain_mismatch_reports_layer():
    rng = RngState(0)
    with pytest.raises(DimensionError) as excinfo:
        Mlp([LinearLayer.initialize(4, 5, 0.1, rng), LinearLayer.initialize(6, 2, 0.1, rng)])
    assert excinfo.value.layer_index == 1


class TestForwardBackward:
    def test_taps_and_rectifier(self, small_mlp, batch):
        x, _ = batch
        taps = mlp_forward(small_mlp, x)
        assert len(taps) == 3
        assert taps.input is not None and taps.input.shape == (8, 4)
        assert [t.shape[1] for t in taps.layers] == [6, 5, 3]
        assert np.all(taps[0] >= 0) and np.all(taps[1] >= 0)
        assert taps.output is taps[2]

    def test_wrong_input_width(self, small_mlp):
        with pytest.raises(DimensionError):
            mlp_forward(small_mlp, np.zeros((2, 5)))

    def test_gradients_match_finite_differences(self, small_mlp, batch):
        x, y = batch
        names = ["l0", "l1", "l2"]
        params = named_layer_parameters(list(zip(names, small_mlp.layers)))

        def loss_fn():
            taps = mlp_forward(small_mlp, x)
            loss, grad = softmax_cross_entropy(taps.output, y)
            layer_grads, _ = mlp_backward(small_mlp, taps, grad)
            grads = {}
            for name, g in zip(names, layer_grads):
                w, b = layer_param_names(name)
                grads[w], grads[b] = g.weight, g.bias
            return loss, grads

        result = finite_diff_check(loss_fn, params, atol=1e-8)
        assert result.n_checked == sum(p.size for p in params.values())
        assert result.passed(1e-5)

    def test_injected_gradient_is_added_at_tap(self, small_mlp, batch):
        """A linear readout of the first tap behaves like an extra loss term"""
        x, y = batch
        tap_weights = RngState(5).generator.normal(size=(8, 6))
        names = ["l0", "l1", "l2"]
        params = named_layer_parameters(list(zip(names, small_mlp.layers)))

        def loss_fn():
            taps = mlp_forward(small_mlp, x)
            loss, grad = softmax_cross_entropy(taps.output, y)
            loss += float(np.sum(tap_weights * taps[0]))
            layer_grads, _ = mlp_backward(small_mlp, taps, grad, {0: tap_weights})
            grads = {}
            for name, g in zip(names, layer_grads):
                w, b = layer_param_names(name)
                grads[w], grads[b] = g.weight, g.bias
            return loss, grads

        assert finite_diff_check(loss_fn, params, atol=1e-8).passed(1e-5)

    def test_injection_is_exactly_additive(self, small_mlp, batch):
        """Backward with injections = backward without them + backward of the injections alone"""
        x, y = batch
        taps = mlp_forward(small_mlp, x)
        _, output_grad = softmax_cross_entropy(taps.output, y)
        generator = RngState(6).generator
        injected = {0: generator.normal(size=(8, 6)), 1: generator.normal(size=(8, 5))}

        combined, combined_input = mlp_backward(small_mlp, taps, output_grad, injected)
        plain, plain_input = mlp_backward(small_mlp, taps, output_grad)
        alone, alone_input = mlp_backward(small_mlp, taps, np.zeros_like(taps.output), injected)
        for index, (c, p, a) in enumerate(zip(combined, plain, alone)):
            assert np.allclose(c.weight - p.weight, a.weight, rtol=0.0, atol=1e-12), index
            assert np.allclose(c.bias - p.bias, a.bias, rtol=0.0, atol=1e-12), index
        assert np.allclose(combined_input - plain_input, alone_input, rtol=0.0, atol=1e-12)

    def test_injection_validation(self, small_mlp, batch):
        x, _ = batch
        taps = mlp_forward(small_mlp, x)
        output_grad = np.zeros_like(taps.output)
        with pytest.raises(DimensionError):
            mlp_backward(small_mlp, taps, output_grad, {1: np.zeros((8, 6))})
        with pytest.raises(DimensionError):
            mlp_backward(small_mlp, taps, output_grad, {3: np.zeros((8, 3))})
        with pytest.raises(DimensionError):
            mlp_backward(small_mlp, taps, np.zeros((8, 2)))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((4, 5)), [0, 1, 2, 3])
        assert loss == pytest.approx(np.log(5))
        assert np.allclose(grad.sum(axis=1), 0.0)
        assert grad[0, 0] == pytest.approx((0.2 - 1.0) / 4)

    def test_shifting_logits_changes_nothing(self):
        generator = RngState(3).generator
        logits = generator.normal(size=(6, 4))
        labels = generator.integers(0, 4, size=6)
        loss, grad = softmax_cross_entropy(logits, labels)
        for shift in (-64.0, 3.5, 100.0):
            shifted_loss, shifted_grad = softmax_cross_entropy(logits + shift, labels)
            assert abs(shifted_loss - loss) < 1e-12
            assert np.allclose(shifted_grad, grad, rtol=0.0, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[1000.0, 0.0, -1000.0], [0.0, 2000.0, 0.0]])
        loss, grad = softmax_cross_entropy(logits, [0, 0])
        assert np.isfinite(loss) and np.all(np.isfinite(grad))
        assert loss == pytest.approx(1000.0, rel=1e-9)

    def test_label_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


class TestSgdStep:
    def test_update_and_decay(self):
        params = {"a.weight": np.array([1.0, 2.0]), "a.bias": np.array([1.0])}
        weight = params["a.weight"]
        grads = {"a.weight": np.array([0.5, 0.5]), "a.bias": np.array([0.5])}
        sgd_step(params, grads, lr=0.1, weight_decay=0.1)
        assert params["a.weight"] is weight
        assert np.allclose(weight, [1.0 - 0.1 * (0.5 + 0.1), 2.0 - 0.1 * (0.5 + 0.2)])
        assert np.allclose(params["a.bias"], [0.95])

    def test_only_named_parameters_move(self):
        params = {"a.weight": np.ones(2), "b.weight": np.ones(2)}
        sgd_step(params, {"a.weight": np.ones(2)}, lr=0.5, weight_decay=0.1)
        assert np.array_equal(params["b.weight"], np.ones(2))

    def test_non_finite_gradient_leaves_parameters_untouched(self):
        params = {"a.weight": np.ones(2), "b.weight": np.ones(2)}
        grads = {"a.weight": np.ones(2), "b.weight": np.array([np.inf, 0.0])}
        with pytest.raises(NonFiniteError):
            sgd_step(params, grads, lr=0.1)
        assert np.array_equal(params["a.weight"], np.ones(2))

    def test_argument_validation(self):
        params = {"a.weight": np.ones(2)}
        with pytest.raises(ValueError):
            sgd_step(params, {}, lr=0.0)
        with pytest.raises(KeyError):
            sgd_step(params, {"missing.weight": np.ones(2)}, lr=0.1)
        with pytest.raises(DimensionError):
            sgd_step(params, {"a.weight": np.ones(3)}, lr=0.1)


class TestFiniteDiffCheck:
    def test_detects_wrong_gradient(self):
        params = {"w": np.array([0.3, -1.2, 2.0])}

        def good():
            return float(np.sum(params["w"] ** 3)), {"w": 3 * params["w"] ** 2}

        def bad():
            return float(np.sum(params["w"] ** 3)), {"w": 3 * params["w"] ** 2 + 1e-3}

        assert finite_diff_check(good, params).passed(1e-5)
        result = finite_diff_check(bad, params)
        assert not result.passed(1e-5)
        assert result.worst_param == "w"
        assert np.array_equal(params["w"], [0.3, -1.2, 2.0])

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda: (0.0, {}), {}, epsilon=1e-2)

    def test_coordinate_sampling(self):
        params = {"w": np.linspace(-1, 1, 50)}
        result = finite_diff_check(lambda: (float(np.sum(params["w"] ** 2)), {"w": 2 * params["w"]}),
                                   params, max_coords=7)
        assert result.n_checked == 7

    def test_relative_error(self):
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)
        assert relative_error(1e-9, 0.0, atol=1e-8) == 0.0
