import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import saliencylab.autodiff as ad
import saliencylab.functional as F
from tests.helpers import random_conv_spec, randomize_params
from tests.oracles import central_difference

from saliencylab import nets


def relative_error(got, want):
    scale = max(1.0, np.abs(want).max())
    return np.abs(got - want).max() / scale


class TestScalarCases:
    def test_relu_of_scaled_input_positive(self):
        x = ad.Node(np.array([[3.0]]))
        w = ad.Node(np.array([[2.0]]))
        f = ad.relu(ad.dense(x, w))
        ad.backward(f)
        assert x.grad[0, 0] == 2.0

    def test_relu_of_scaled_input_negative(self):
        x = ad.Node(np.array([[-3.0]]))
        w = ad.Node(np.array([[2.0]]))
        f = ad.relu(ad.dense(x, w))
        ad.backward(f)
        assert x.grad[0, 0] == 0.0

    def test_relu_all_negative_zero_gradient(self, rng):
        x = ad.Node(-np.abs(rng.normal(size=(1, 8))) - 0.1)
        out = ad.relu(x)
        np.testing.assert_array_equal(out.data, 0.0)
        ad.backward(out)
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_dense_gradient_is_weight_row(self, rng):
        x = ad.Node(rng.normal(size=(1, 4)))
        w = ad.Node(rng.normal(size=(3, 4)))
        out = ad.dense(x, w)
        ad.backward_class(out, 2)
        np.testing.assert_allclose(x.grad[0], w.data[2])

    def test_backward_class_range_check(self, rng):
        out = ad.dense(ad.Node(rng.normal(size=(1, 4))), ad.Node(rng.normal(size=(3, 4))))
        with pytest.raises(ValueError, match="out of range"):
            ad.backward_class(out, 3)

    def test_seed_shape_check(self, rng):
        node = ad.Node(rng.normal(size=(2, 2)))
        out = ad.relu(node)
        with pytest.raises(ValueError, match="seed shape"):
            ad.backward(out, np.ones(3))


class TestFiniteDifferences:
    """Backward rules against central differences on random instances."""

    def test_relu_gradient_at_nonzero_points(self, rng):
        x = rng.normal(size=(1, 12))
        x[np.abs(x) < 0.05] += 0.2  # keep away from the kink
        seed = rng.normal(size=(1, 12))

        def f(arr):
            return float((F.relu(arr) * seed).sum())

        node = ad.Node(x)
        out = ad.relu(node)
        ad.backward(out, seed)
        fd = central_difference(f, x.copy())
        assert relative_error(node.grad, fd) < 1e-6

    def test_conv_all_arguments(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        seed = rng.normal(size=(1, 3, 3, 3))
        xn, kn, bn = ad.Node(x), ad.Node(k), ad.Node(b)
        out = ad.conv2d(xn, kn, bn, stride=2, padding=1)
        ad.backward(out, seed)
        for node, arr in ((xn, x), (kn, k), (bn, b)):
            def f(v, node=node, arr=arr):
                vals = {id(x): x, id(k): k, id(b): b}
                vals[id(arr)] = v
                return float((F.conv2d(vals[id(x)], vals[id(k)], vals[id(b)],
                                       2, 1) * seed).sum())
            fd = central_difference(f, arr.copy())
            assert relative_error(node.grad, fd) < 1e-6

    def test_batchnorm_all_statistics(self, rng):
        x = rng.normal(size=(1, 3, 4, 4))
        gamma = rng.uniform(0.5, 1.5, 3)
        beta = rng.normal(size=3)
        mean = rng.normal(size=3)
        var = rng.uniform(0.5, 2.0, 3)
        seed = rng.normal(size=x.shape)
        nodes = [ad.Node(v) for v in (x, gamma, beta, mean, var)]
        out = ad.batchnorm_frozen(*nodes, eps=1e-5)
        ad.backward(out, seed)
        arrays = (x, gamma, beta, mean, var)
        for pos, node in enumerate(nodes):
            def f(v, pos=pos):
                args = [a.copy() for a in arrays]
                args[pos] = v
                return float((F.batchnorm(*args, eps=1e-5) * seed).sum())
            fd = central_difference(f, arrays[pos].copy())
            assert relative_error(node.grad, fd) < 1e-6, f"argument {pos}"

    def test_maxpool_gradient(self, rng):
        x = rng.normal(size=(1, 2, 6, 6))
        seed = rng.normal(size=(1, 2, 3, 3))
        node = ad.Node(x)
        out = ad.maxpool2d(node, 2, 2)
        ad.backward(out, seed)

        def f(v):
            return float((F.maxpool2d(v, 2, 2) * seed).sum())

        fd = central_difference(f, x.copy())
        assert relative_error(node.grad, fd) < 1e-6

    def test_three_layer_conv_net_every_gradient(self, rng):
        """Random conv net: every tracked gradient matches central
        differences within 1e-5 relative."""
        spec = nets.NetworkSpec(
            (6, 6, 2), 3,
            (nets.Conv(3, 3, 1, 1), nets.Relu(), nets.MaxPool(2, 2),
             nets.Conv(4, 3, 1, 1), nets.Relu(), nets.Flatten(), nets.Dense(3)))
        ck = randomize_params(nets.build_network(spec, 0), rng)
        x = rng.uniform(0.1, 1.0, (6, 6, 2))
        c = 1
        run = nets.forward_run(ck, x)
        ad.backward_class(run.logits, c)

        def logit_for(params, image):
            ck2 = nets.Checkpoint(spec, params)
            return float(nets.forward_logits(ck2, image)[c])

        fd_input = central_difference(
            lambda v: logit_for(ck.params, v), x.copy())
        got_input = np.moveaxis(run.input.grad[0], 0, -1)
        assert relative_error(got_input, fd_input) < 1e-5

        for name in ck.params:
            def f(v, name=name):
                params = dict(ck.params)
                params[name] = v
                return logit_for(params, x)
            fd = central_difference(f, ck.params[name].copy())
            got = run.param_nodes[name].grad
            if got is None:
                got = np.zeros_like(ck.params[name])
            assert relative_error(got, fd) < 1e-5, name


class TestGraphStructure:
    def test_shared_input_accumulates(self, rng):
        x = ad.Node(rng.normal(size=(1, 4)))
        w = ad.Node(np.eye(4))
        out = ad.add(ad.dense(x, w), ad.dense(x, w))
        ad.backward(out, np.ones((1, 4)))
        np.testing.assert_allclose(x.grad, 2.0)

    def test_add_shape_check(self, rng):
        with pytest.raises(ValueError, match="shapes"):
            ad.add(ad.Node(np.zeros((1, 2))), ad.Node(np.zeros((1, 3))))

    def test_topo_order_visits_parents_first(self, rng):
        x = ad.Node(rng.normal(size=(1, 3)))
        w = ad.Node(rng.normal(size=(3, 3)))
        h = ad.relu(ad.dense(x, w))
        out = ad.dense(h, w)
        order = ad.topo_order(out)
        pos = {id(n): i for i, n in enumerate(order)}
        for node in order:
            for parent in node.parents:
                assert pos[id(parent)] < pos[id(node)]


@settings(max_examples=20, deadline=None)
@given(power=st.integers(min_value=-3, max_value=3), seed=st.integers(0, 2**16))
def test_positive_homogeneity_bias_free(power, seed):
    """Scaling the input by 2^k scales every bias-free output exactly."""
    rng = np.random.default_rng(seed)
    spec = random_conv_spec(rng, biases=False)
    ck = randomize_params(nets.build_network(spec, seed), rng, bias_scale=0.0)
    x = rng.normal(size=spec.input_shape)
    alpha = 2.0 ** power
    base = nets.forward_logits(ck, x)
    scaled = nets.forward_logits(ck, alpha * x)
    np.testing.assert_array_equal(scaled, alpha * base)
