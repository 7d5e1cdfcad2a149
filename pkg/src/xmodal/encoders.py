"""Two MLP branches mapping per-modality features onto the unit sphere.

Parameters live in a flat, ordered name -> array mapping so the optimizer,
checkpointing and gradient checks can treat them uniformly. Names look like
``a.0.W``, ``a.0.b``, ``b.1.W`` and ``head.W``. Weights are stored as
(fan_in, fan_out) so a layer computes ``x @ W + b``.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .core import DegenerateInputError, make_rng, normalize_rows, normalize_rows_backward

BRANCHES = ("a", "b")
ACTIVATIONS = ("relu", "tanh")


@dataclass
class EncoderSpec:
    input_dim_a: int
    input_dim_b: int
    latent_dim: int = 64
    hidden_dims: list[int] = field(default_factory=list)
    activation: str = "relu"

    def __post_init__(self):
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        for name in ("input_dim_a", "input_dim_b"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be at least 2")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    def input_dim(self, branch: str) -> int:
        return self.input_dim_a if _branch(branch) == "a" else self.input_dim_b

    def layer_dims(self, branch: str) -> list[int]:
        return [self.input_dim(branch), *self.hidden_dims, self.latent_dim]

    def to_dict(self) -> dict:
        return asdict(self)


class EncoderParams:
    """Ordered collection of named parameter arrays for both branches."""

    def __init__(self, tensors: dict[str, np.ndarray], n_layers: int, activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.tensors = dict(tensors)
        self.n_layers = n_layers
        self.activation = activation

    @property
    def has_head(self) -> bool:
        return "head.W" in self.tensors

    @property
    def n_classes(self) -> int | None:
        return self.tensors["head.W"].shape[1] if self.has_head else None

    def layers(self, branch: str) -> list[tuple[np.ndarray, np.ndarray]]:
        br = _branch(branch)
        return [(self.tensors[f"{br}.{i}.W"], self.tensors[f"{br}.{i}.b"]) for i in range(self.n_layers)]

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: v.copy() for k, v in self.tensors.items()}, self.n_layers, self.activation)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def __getitem__(self, name):
        return self.tensors[name]

    def __eq__(self, other):
        if not isinstance(other, EncoderParams) or self.names() != other.names():
            return False
        if self.activation != other.activation:
            return False
        return all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)


def _branch(branch) -> str:
    b = str(branch).lower()
    if b not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}; expected A or B")
    return b


def init_params(spec: EncoderSpec, n_classes: int | None = None, seed=0) -> EncoderParams:
    """Uniform fan-in/fan-out initialization, zero biases.

    Layers are drawn branch by branch, then the optional head, all from one
    generator so a seed fixes every value.
    """
    rng = make_rng(seed)
    tensors = {}

    def draw(fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=(fan_in, fan_out))

    for br in BRANCHES:
        dims = spec.layer_dims(br)
        for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
            tensors[f"{br}.{i}.W"] = draw(fi, fo)
            tensors[f"{br}.{i}.b"] = np.zeros(fo)
    if n_classes:
        tensors["head.W"] = draw(spec.latent_dim, n_classes)
        tensors["head.b"] = np.zeros(n_classes)
    return EncoderParams(tensors, len(spec.hidden_dims) + 1, spec.activation)


def _act(kind, x):
    return np.maximum(x, 0.0) if kind == "relu" else np.tanh(x)


def _act_grad(kind, pre, post):
    return (pre > 0.0).astype(np.float64) if kind == "relu" else 1.0 - post**2


class ForwardCache:
    __slots__ = ("inputs", "pres", "posts", "unit", "norms")

    def __init__(self):
        self.inputs, self.pres, self.posts = [], [], []
        self.unit = self.norms = None


def encode_batch(params: EncoderParams, branch, features):
    """Encode rows of ``features``; returns (unit latents, cache for backward)."""
    br = _branch(branch)
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    layers = params.layers(br)
    if x.shape[1] != layers[0][0].shape[0]:
        raise ValueError(f"branch {br.upper()} expects {layers[0][0].shape[0]} features, got {x.shape[1]}")
    cache = ForwardCache()
    h = x
    for i, (W, b) in enumerate(layers):
        cache.inputs.append(h)
        pre = h @ W + b
        cache.pres.append(pre)
        if i < len(layers) - 1:
            h = _act(params.activation, pre)
        else:
            h = pre
        cache.posts.append(h)
    try:
        cache.unit, cache.norms = normalize_rows(h)
    except DegenerateInputError:
        raise DegenerateInputError(f"branch {br.upper()} produced a zero latent before normalization") from None
    return cache.unit, cache


def encode(params: EncoderParams, branch, features) -> np.ndarray:
    """Map a single feature vector to its unit-norm latent point."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("encode takes a single feature vector; use encode_batch for matrices")
    z, _ = encode_batch(params, branch, x)
    return z[0]


def backward_batch(params: EncoderParams, branch, cache: ForwardCache, upstream) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * latents)`` with respect to one branch's parameters."""
    br = _branch(branch)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.unit.shape:
        raise ValueError(f"upstream shape {g.shape} does not match latents {cache.unit.shape}")
    layers = params.layers(br)
    grads = {}
    delta = normalize_rows_backward(cache.unit, cache.norms, g)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        if i < len(layers) - 1:
            delta = delta * _act_grad(params.activation, cache.pres[i], cache.posts[i])
        grads[f"{br}.{i}.W"] = cache.inputs[i].T @ delta
        grads[f"{br}.{i}.b"] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ W.T
    return grads


def encode_backward(params: EncoderParams, branch, features, upstream) -> dict[str, np.ndarray]:
    """Parameter gradients of ``upstream . encode(features)`` for one branch."""
    upstream = np.asarray(upstream, dtype=np.float64)
    latent_dim = params.layers(branch)[-1][0].shape[1]
    if upstream.shape != (latent_dim,):
        raise ValueError(f"upstream must have {latent_dim} entries")
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("encode_backward takes a single feature vector")
    _, cache = encode_batch(params, branch, x)
    return backward_batch(params, branch, cache, upstream[None, :])


def classification_head_forward(params: EncoderParams, latent) -> np.ndarray:
    if not params.has_head:
        raise ValueError("these parameters carry no classification head")
    z = np.asarray(latent, dtype=np.float64)
    return z @ params["head.W"] + params["head.b"]


def classification_head_backward(params: EncoderParams, latent, upstream) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Returns (head parameter grads, grad w.r.t. latent) for upstream on the scores."""
    z = np.atleast_2d(np.asarray(latent, dtype=np.float64))
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    grads = {"head.W": z.T @ g, "head.b": g.sum(axis=0)}
    dz = g @ params["head.W"].T
    return grads, dz if np.ndim(latent) == 2 else dz[0]
