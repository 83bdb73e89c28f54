"""MLP construction, forward semantics, and checkpoint round trips."""

import numpy as np
import pytest

from farconvae.autodiff import Tensor
from farconvae.nn import ACTIVATIONS, Linear, Mlp, load_mlp, mlp_forward, save_mlp


def _mlp(dims, acts, seed=0, name="net"):
    return Mlp.initialize(dims, acts, np.random.default_rng(seed), name=name)


def test_initialize_shapes_and_bounds():
    mlp = _mlp([3, 5, 2], ["relu", "identity"])
    assert mlp.layers[0].weight.shape == (5, 3)
    assert mlp.layers[1].weight.shape == (2, 5)
    for layer in mlp.layers:
        a = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        assert np.all(np.abs(layer.weight.data) <= a)
        assert np.array_equal(layer.bias.data, np.zeros(layer.out_dim))


def test_forward_matches_plain_numpy():
    mlp = _mlp([4, 6, 3], ["tanh", "identity"], seed=2)
    x = np.random.default_rng(3).standard_normal((7, 4))
    w0, b0 = mlp.layers[0].weight.data, mlp.layers[0].bias.data
    w1, b1 = mlp.layers[1].weight.data, mlp.layers[1].bias.data
    expected = np.tanh(x @ w0.T + b0) @ w1.T + b1
    out = mlp(Tensor(x))
    assert out.shape == (7, 3)
    assert np.array_equal(out.data, expected)


def test_forward_deterministic_and_batch_equivariant():
    mlp = _mlp([5, 8, 2], ["leaky_relu", "identity"], seed=4)
    x = np.random.default_rng(5).standard_normal((9, 5))
    a = mlp(Tensor(x)).data
    b = mlp(Tensor(x)).data
    assert np.array_equal(a, b)
    perm = np.random.default_rng(6).permutation(9)
    assert np.array_equal(mlp(Tensor(x[perm])).data, a[perm])


def test_dim_chain_validation_names_layer_index():
    good = _mlp([3, 4, 2], ["relu", "identity"])
    bad_layers = [good.layers[1], good.layers[0]]
    with pytest.raises(ValueError, match="layer 1"):
        Mlp(bad_layers, ["relu", "identity"])


def test_initialize_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        Mlp.initialize([3], ["relu"], rng, name="x")
    with pytest.raises(ValueError):
        Mlp.initialize([3, 2], ["relu", "relu"], rng, name="x")
    with pytest.raises(ValueError):
        Mlp.initialize([3, 2], ["gelu"], rng, name="x")
    assert "gelu" not in ACTIVATIONS


def test_forward_input_validation():
    mlp = _mlp([3, 2], ["identity"])
    with pytest.raises(ValueError):
        mlp(Tensor(np.zeros(3)))
    with pytest.raises(ValueError, match="expects 3"):
        mlp(Tensor(np.zeros((1, 4))))


def test_linear_validation():
    with pytest.raises(ValueError):
        Linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))
    with pytest.raises(ValueError):
        Linear(Tensor(np.zeros(2)), Tensor(np.zeros(2)))


def test_parameters_order_and_names():
    mlp = _mlp([3, 4, 2], ["relu", "identity"], name="enc")
    names = [p.name for p in mlp.parameters()]
    assert names == ["enc.layer0.weight", "enc.layer0.bias", "enc.layer1.weight", "enc.layer1.bias"]
    assert all(p.requires_grad for p in mlp.parameters())


def test_mlp_forward_alias():
    mlp = _mlp([2, 2], ["identity"])
    x = Tensor(np.ones((1, 2)))
    assert np.array_equal(mlp_forward(mlp, x).data, mlp(x).data)


def test_save_load_round_trip(tmp_path):
    mlp = _mlp([4, 8, 1], ["relu", "identity"], seed=11, name="aux")
    path = tmp_path / "mlp.json"
    save_mlp(mlp, str(path))
    loaded = load_mlp(str(path))
    assert loaded.activations == mlp.activations
    for orig, new in zip(mlp.parameters(), loaded.parameters()):
        assert orig.name == new.name
        assert np.array_equal(orig.data, new.data)
    x = Tensor(np.random.default_rng(12).standard_normal((5, 4)))
    assert np.array_equal(mlp(x).data, loaded(x).data)


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 99, "layers": [], "activations": []}')
    with pytest.raises(ValueError, match="version"):
        load_mlp(str(path))
