import numpy as np
import pytest

from fdcheck import numeric_grad, rel_error
from heatup.errors import DegenerateInputError, ShapeError, StateError
from heatup.layers import BatchNormNoScale, L2NormLayer, LinearLayer, ReLU

SEEDS = range(100)


def _probe(layer, x, rng):
    r = rng.normal(size=layer.forward(x).shape)
    return r, lambda: float((layer.forward(x) * r).sum())


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_gradients(seed):
    rng = np.random.default_rng(seed)
    n, a, b = rng.integers(1, 6, size=3)
    layer = LinearLayer(a, b)
    layer.weight.value[...] = rng.normal(size=(a, b))
    layer.bias.value[...] = rng.normal(size=b)
    x = rng.normal(size=(n, a))
    r, loss = _probe(layer, x, rng)
    layer.zero_grad()
    layer.forward(x)
    dx = layer.backward(r)
    assert rel_error(dx, numeric_grad(loss, x)) < 1e-6
    assert rel_error(layer.weight.grad, numeric_grad(loss, layer.weight.value)) < 1e-6
    assert rel_error(layer.bias.grad, numeric_grad(loss, layer.bias.value)) < 1e-6


def test_linear_accumulates_and_checks_state():
    layer = LinearLayer(2, 3)
    with pytest.raises(StateError):
        layer.backward(np.zeros((1, 3)))
    x = np.ones((4, 2))
    layer.forward(x)
    layer.backward(np.ones((4, 3)))
    layer.backward(np.ones((4, 3)))
    np.testing.assert_array_equal(layer.weight.grad, np.full((2, 3), 8.0))
    with pytest.raises(ShapeError):
        layer.forward(np.ones((4, 5)))


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    layer = ReLU()
    r, loss = _probe(layer, x, rng)
    layer.forward(x)
    assert rel_error(layer.backward(r), numeric_grad(loss, x)) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_l2norm_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rng.integers(1, 5), rng.integers(2, 6)))
    layer = L2NormLayer()
    r, loss = _probe(layer, x, rng)
    layer.forward(x)
    g = layer.backward(r)
    assert rel_error(g, numeric_grad(loss, x)) < 1e-6
    # the Jacobian only has tangential components
    np.testing.assert_allclose((g * x).sum(axis=1), 0.0, atol=1e-12)


def test_l2norm_unit_rows_and_scaling():
    layer = L2NormLayer()
    x = np.array([[3.0, 4.0], [0.0, -2.0]])
    np.testing.assert_allclose(layer.forward(x), [[0.6, 0.8], [0.0, -1.0]])
    g = np.array([[1.0, 0.0], [1.0, 0.0]])
    small = layer.backward(g)
    layer.forward(10 * x)
    np.testing.assert_allclose(layer.backward(g), small / 10)


def test_l2norm_zero_row_names_row():
    with pytest.raises(DegenerateInputError, match="row 1") as info:
        L2NormLayer().forward(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert info.value.row == 1


@pytest.mark.parametrize("seed", SEEDS)
def test_batchnorm_gradient(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(3, 9), rng.integers(1, 6)  # two rows give a near-constant output
    x = rng.normal(size=(n, k)) * rng.uniform(0.5, 3) + rng.normal()
    layer = BatchNormNoScale(k)
    r, loss = _probe(layer, x, rng)
    layer.forward(x)
    assert rel_error(layer.backward(r), numeric_grad(loss, x)) < 1e-6


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(0)
    k = 5
    x = rng.normal(3.0, 2.0, size=(64, k))
    out = BatchNormNoScale(k, epsilon=1e-14).forward(x)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=0), 1.0 / k, atol=1e-9)
    assert abs((out ** 2).sum(axis=1).mean() - 1.0) < 1e-6


def test_batchnorm_running_stats_and_infer():
    bn = BatchNormNoScale(2, momentum=0.9)
    x = np.array([[0.0, 1.0], [2.0, 5.0]])
    bn.forward(x)
    np.testing.assert_allclose(bn.running_mean, [0.1, 0.3])
    np.testing.assert_allclose(bn.running_var, [0.9 + 0.1 * 1.0, 0.9 + 0.1 * 4.0])
    bn.eval()
    row = np.array([[1.0, 3.0]])
    expected = (row - bn.running_mean) / np.sqrt(bn.running_var + bn.epsilon) / np.sqrt(2)
    np.testing.assert_allclose(bn.forward(row), expected)
    before = bn.running_mean.copy()
    bn.forward(row)
    np.testing.assert_array_equal(bn.running_mean, before)
    with pytest.raises(StateError):
        bn.backward(np.zeros((1, 2)))


def test_batchnorm_rejects_single_row_in_train():
    with pytest.raises(ValueError):
        BatchNormNoScale(3).forward(np.ones((1, 3)))
