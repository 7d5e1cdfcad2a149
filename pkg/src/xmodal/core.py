"""Vector primitives shared by the rest of the package.

Everything here works in float64. Latent points are unit vectors, so most
callers only need ``1 - x @ y``; the general forms below are kept for
validation and for inputs that are not normalized yet.
"""

import numpy as np


class DegenerateInputError(ValueError):
    """Raised for zero-norm vectors where a direction is required."""


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _pair(x, y):
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("cosine distance undefined for a zero vector")
    return x, y, nx, ny


def cosine_distance(x, y) -> float:
    """Return ``1 - cos(x, y)``, a value in [0, 2]."""
    x, y, nx, ny = _pair(x, y)
    c = float(x @ y) / (nx * ny)
    return 1.0 - min(1.0, max(-1.0, c))


def cosine_distance_grad(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`cosine_distance` with respect to ``x`` and ``y``."""
    x, y, nx, ny = _pair(x, y)
    c = float(x @ y) / (nx * ny)
    grad_x = -(y / (nx * ny) - c * x / nx**2)
    grad_y = -(x / (nx * ny) - c * y / ny**2)
    return grad_x, grad_y


def l2_normalize(x) -> np.ndarray:
    x = as_vector(x)
    n = np.linalg.norm(x)
    if n == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return x / n


def l2_normalize_backward(x, upstream) -> np.ndarray:
    """Vector-Jacobian product of :func:`l2_normalize` at ``x``."""
    x = as_vector(x)
    g = as_vector(upstream)
    n = np.linalg.norm(x)
    if n == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    u = x / n
    return (g - u * (u @ g)) / n


def normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise L2 normalization; returns (normalized, norms)."""
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot normalize a zero row")
    return m / norms[:, None], norms


def normalize_rows_backward(unit: np.ndarray, norms: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    dots = np.einsum("ij,ij->i", unit, upstream)
    return (upstream - unit * dots[:, None]) / norms[:, None]


def make_rng(seed) -> np.random.Generator:
    """Seeded generator; the same seed always yields the same stream."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))
