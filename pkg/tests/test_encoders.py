import numpy as np
import pytest

from xmodal.core import DegenerateInputError
from xmodal.encoders import (
    EncoderParams,
    EncoderSpec,
    classification_head_forward,
    encode,
    encode_backward,
    init_params,
)

from conftest import central_diff, rel_err


def naive_forward(params, branch, x):
    """Loop-based forward pass, written independently of encode_batch."""
    h = list(map(float, x))
    layers = params.layers(branch)
    for li, (W, b) in enumerate(layers):
        out = []
        for j in range(W.shape[1]):
            s = b[j]
            for i in range(W.shape[0]):
                s += h[i] * W[i, j]
            if li < len(layers) - 1:
                s = max(s, 0.0) if params.activation == "relu" else np.tanh(s)
            out.append(s)
        h = out
    norm = sum(v * v for v in h) ** 0.5
    return np.array([v / norm for v in h])


def test_structure_without_hidden_layers():
    p = init_params(EncoderSpec(5, 3, latent_dim=4), seed=0)
    assert p.n_layers == 1
    assert sorted(p.names()) == ["a.0.W", "a.0.b", "b.0.W", "b.0.b"]
    assert p["a.0.W"].shape == (5, 4) and p["b.0.W"].shape == (3, 4)


def test_init_deterministic_and_bounded():
    spec = EncoderSpec(16, 16, latent_dim=8)
    p1, p2 = init_params(spec, seed=1), init_params(spec, seed=1)
    assert p1 == p2
    bound = np.sqrt(6 / 24)
    assert np.all(np.abs(p1["a.0.W"]) <= bound)
    assert np.all(p1["a.0.b"] == 0)
    assert init_params(spec, seed=2) != p1


def test_init_with_head():
    p = init_params(EncoderSpec(4, 4, latent_dim=3), n_classes=5, seed=0)
    assert p.has_head and p.n_classes == 5 and p["head.W"].shape == (3, 5)


def test_spec_validation():
    with pytest.raises(ValueError):
        EncoderSpec(4, 4, latent_dim=1)
    with pytest.raises(ValueError):
        EncoderSpec(4, 4, activation="sigmoid")


def test_identity_encoder_345():
    p = init_params(EncoderSpec(2, 2, latent_dim=2), seed=0)
    p.tensors["a.0.W"] = np.eye(2)
    np.testing.assert_allclose(encode(p, "A", [3.0, 4.0]), [0.6, 0.8], atol=1e-15)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_forward_matches_naive_oracle(activation):
    rng = np.random.default_rng(7)
    spec = EncoderSpec(6, 5, latent_dim=4, hidden_dims=[7, 3], activation=activation)
    p = init_params(spec, seed=7)
    for k in p.tensors:
        if k.endswith(".b"):
            p.tensors[k] = rng.normal(size=p.tensors[k].shape) * 0.1
    for branch, dim in (("a", 6), ("b", 5)):
        x = rng.normal(size=dim)
        z = encode(p, branch, x)
        np.testing.assert_allclose(z, naive_forward(p, branch, x), atol=1e-12)
        assert abs(np.linalg.norm(z) - 1) < 1e-12


def test_encode_deterministic_and_errors():
    p = init_params(EncoderSpec(3, 3, latent_dim=2), seed=0)
    x = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(encode(p, "a", x), encode(p, "a", x))
    with pytest.raises(ValueError):
        encode(p, "a", [1.0, 2.0])
    with pytest.raises(ValueError):
        encode(p, "c", x)
    with pytest.raises(DegenerateInputError):
        encode(p, "a", [0.0, 0.0, 0.0])


def test_backward_zero_upstream():
    p = init_params(EncoderSpec(4, 4, latent_dim=3, hidden_dims=[5]), seed=0)
    g = encode_backward(p, "a", np.ones(4), np.zeros(3))
    assert all(np.all(v == 0) for v in g.values())
    with pytest.raises(ValueError):
        encode_backward(p, "a", np.ones(4), np.zeros(2))


@pytest.mark.parametrize(
    "dims, hidden, activation",
    [((5, 3), [], "relu"), ((8, 8), [16, 8], "relu"), ((6, 4), [5], "tanh")],
)
def test_backward_matches_finite_differences(dims, hidden, activation):
    rng = np.random.default_rng(11)
    latent = 4
    p = init_params(EncoderSpec(dims[0], dims[1], latent_dim=latent, hidden_dims=hidden, activation=activation), seed=3)
    for branch, d in zip("ab", dims):
        x = rng.normal(size=d)
        up = rng.normal(size=latent)
        grads = encode_backward(p, branch, x, up)
        for name, g in grads.items():
            fd = central_diff(lambda: encode(p, branch, x) @ up, p.tensors[name])
            assert rel_err(g, fd) < 1e-5, name


def test_relu_dead_units_give_zero_early_gradients():
    spec = EncoderSpec(3, 3, latent_dim=2, hidden_dims=[4])
    p = init_params(spec, seed=0)
    p.tensors["a.0.b"] = -100.0 * np.ones(4)
    p.tensors["a.1.b"] = np.array([1.0, 0.5])
    g = encode_backward(p, "a", np.array([0.1, 0.2, 0.3]), np.array([0.3, -1.0]))
    assert np.all(g["a.0.W"] == 0) and np.all(g["a.0.b"] == 0)


def test_classification_head():
    p = init_params(EncoderSpec(3, 3, latent_dim=3), n_classes=3, seed=0)
    p.tensors["head.W"][:] = 0
    np.testing.assert_array_equal(classification_head_forward(p, [1.0, 0, 0]), np.zeros(3))
    p.tensors["head.W"] = np.eye(3)
    np.testing.assert_array_equal(classification_head_forward(p, [0, 1.0, 0]), [0, 1, 0])
    rng = np.random.default_rng(5)
    p.tensors["head.W"] = rng.normal(size=(3, 3))
    p.tensors["head.b"] = rng.normal(size=3)
    z = rng.normal(size=3)
    z /= np.linalg.norm(z)
    expect = [sum(z[i] * p["head.W"][i, j] for i in range(3)) + p["head.b"][j] for j in range(3)]
    np.testing.assert_allclose(classification_head_forward(p, z), expect, atol=1e-12)
    with pytest.raises(ValueError):
        classification_head_forward(init_params(EncoderSpec(3, 3, latent_dim=3), seed=0), z)
