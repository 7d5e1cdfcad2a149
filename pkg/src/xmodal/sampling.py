"""Epoch-level mini-batch construction.

Each batch mixes a fixed quota of labeled pairs, drawn so the batch follows
the class distribution of the labeled pool, with unlabeled pairs drawn
uniformly. Pools are reshuffled every epoch and no pair is used twice in an
epoch; a trailing partial batch is dropped.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .core import make_rng

log = logging.getLogger(__name__)


@dataclass
class MiniBatch:
    pair_indices: np.ndarray
    labeled_count: int
    unlabeled_count: int

    def __len__(self):
        return len(self.pair_indices)


def largest_remainder_quotas(counts: np.ndarray, k: int, rng) -> np.ndarray:
    """Split ``k`` draws across classes proportionally to ``counts``.

    Floors first, then the remaining units go to the largest fractional
    parts; ties are broken at random.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    exact = k * counts / total
    quotas = np.floor(exact).astype(np.int64)
    left = k - quotas.sum()
    if left:
        frac = exact - quotas
        # random secondary key breaks ties between equal remainders
        order = np.lexsort((rng.random(len(counts)), -frac))
        order = [c for c in order if quotas[c] < counts[c]]
        quotas[order[:left]] += 1
    return quotas


def class_proportional_draw(pool_indices, pool_labels, k: int, rng) -> np.ndarray:
    """Draw ``k`` distinct indices from a labeled pool, stratified by class."""
    pool_indices = np.asarray(pool_indices)
    pool_labels = np.asarray(pool_labels)
    if pool_indices.size == 0:
        raise ValueError("cannot draw from an empty pool")
    k = min(k, pool_indices.size)
    rng = make_rng(rng)
    classes, counts = np.unique(pool_labels, return_counts=True)
    quotas = largest_remainder_quotas(counts, k, rng)
    picked = []
    for c, q in zip(classes, quotas):
        if q:
            members = pool_indices[pool_labels == c]
            picked.append(rng.choice(members, size=q, replace=False))
    out = np.concatenate(picked) if picked else np.empty(0, dtype=pool_indices.dtype)
    return rng.permutation(out)


def build_epoch_batches(labels, batch_size: int, labeled_fraction: float, seed) -> list[MiniBatch]:
    """Batches for one epoch over a dataset with per-pair ``labels`` (-1 = unlabeled)."""
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    if not 0.0 <= labeled_fraction <= 1.0:
        raise ValueError("labeled_fraction must lie in [0, 1]")
    labels = np.asarray(labels)
    rng = make_rng(seed)
    n_batches = len(labels) // batch_size
    quota = int(round(batch_size * labeled_fraction))

    lab_pool = rng.permutation(np.flatnonzero(labels >= 0))
    unl_pool = list(rng.permutation(np.flatnonzero(labels < 0)))
    batches = []
    for _ in range(n_batches):
        want_l = min(quota, lab_pool.size)
        if want_l < quota:
            log.info("labeled pool short by %d pairs; filling with unlabeled", quota - want_l)
        want_u = batch_size - want_l
        if want_u > len(unl_pool):
            # not enough unlabeled pairs left: top up with labeled ones
            extra = want_u - len(unl_pool)
            log.info("unlabeled pool short by %d pairs; filling with labeled", extra)
            want_l = min(want_l + extra, lab_pool.size)
            want_u = batch_size - want_l
        if want_l:
            drawn = class_proportional_draw(lab_pool, labels[lab_pool], want_l, rng)
            lab_pool = lab_pool[~np.isin(lab_pool, drawn)]
        else:
            drawn = np.empty(0, dtype=np.intp)
        unl, unl_pool = unl_pool[:want_u], unl_pool[want_u:]
        idx = np.concatenate([drawn, np.asarray(unl, dtype=drawn.dtype)]).astype(np.intp)
        batches.append(MiniBatch(rng.permutation(idx), int(want_l), int(want_u)))
    return batches
