"""Hinge losses on cosine distance, the pairwise baseline and softmax cross-entropy.

Each loss returns its value together with gradients with respect to the
latent points it was evaluated on. At the hinge boundary the subgradient
is taken to be zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .core import cosine_distance, cosine_distance_grad


@dataclass
class LossConfig:
    alpha: float = 0.3
    lam: float = 0.3
    alpha_pos: float = 0.3
    alpha_neg: float = 0.9

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0 <= self.alpha_pos < self.alpha_neg <= 2:
            raise ValueError("need 0 <= alpha_pos < alpha_neg <= 2")


def triplet_hinge(q, p, n, alpha):
    """``max(0, d(q,p) + alpha - d(q,n))`` and its gradients w.r.t. q, p, n."""
    q, p, n = (np.asarray(v, dtype=np.float64) for v in (q, p, n))
    loss = cosine_distance(q, p) + alpha - cosine_distance(q, n)
    if loss <= 0.0:
        z = np.zeros_like(q)
        return 0.0, (z, z.copy(), z.copy())
    gq_p, gp = cosine_distance_grad(q, p)
    gq_n, gn = cosine_distance_grad(q, n)
    return float(loss), (gq_p - gq_n, gp, -gn)


def instance_triplet_loss(q, p, n, alpha=0.3):
    """Query against its matching counterpart ``p`` and a non-matching item ``n``."""
    return triplet_hinge(q, p, n, alpha)


def semantic_triplet_loss(q, p, n, alpha=0.3):
    """Query against a same-class item ``p`` and a different-class item ``n``."""
    return triplet_hinge(q, p, n, alpha)


def pairwise_pwpp_loss(q, x, y, alpha_pos=0.3, alpha_neg=0.9):
    """Contrastive pair loss with a positive margin.

    ``y=1`` pulls a matching pair inside ``alpha_pos``; ``y=0`` pushes a
    non-matching pair beyond ``alpha_neg``.
    """
    if y not in (0, 1):
        raise ValueError(f"pair label must be 0 or 1, got {y!r}")
    d = cosine_distance(q, x)
    gq, gx = cosine_distance_grad(q, x)
    if y == 1:
        loss = d - alpha_pos
        sign = 1.0
    else:
        loss = alpha_neg - d
        sign = -1.0
    if loss <= 0.0:
        return 0.0, (np.zeros_like(gq), np.zeros_like(gx))
    return float(loss), (sign * gq, sign * gx)


def classification_ce_loss(scores, label):
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= label < scores.size:
        raise ValueError(f"label {label} out of range for {scores.size} classes")
    loss = logsumexp(scores) - scores[label]
    grad = softmax(scores)
    grad[label] -= 1.0
    return float(loss), grad


def total_loss(ins: float, sem: float, lam: float = 0.3) -> float:
    return ins + lam * sem


# Batched forms on unit-norm latent rows, where d(x, y) = 1 - x.y.

def batch_ce(scores: np.ndarray, labels: np.ndarray):
    """Per-row cross-entropy; returns (losses, grads w.r.t. scores)."""
    if scores.shape[0] and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        raise ValueError("label out of range")
    rows = np.arange(len(labels))
    losses = logsumexp(scores, axis=1) - scores[rows, labels]
    grads = softmax(scores, axis=1)
    grads[rows, labels] -= 1.0
    return losses, grads
