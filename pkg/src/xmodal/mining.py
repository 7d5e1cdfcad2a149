"""Triplet construction inside a mini-batch and gradient aggregation.

A batch holds ``n`` matching pairs ``(a_i, b_i)``. Every item is used as a
query against the other modality, so each triplet has a direction:
``AtoB`` (query ``a_i``, candidates ``b_*``) or ``BtoA``.

Instance triplets are implicit: query ``i``, positive ``i``, every ``j != i``
as a negative. Semantic triplets are sampled per batch and stored explicitly.

Two aggregation strategies turn per-triplet gradients into one update:

* adaptive: each loss's gradient sum is divided by its number of *active*
  triplets (strictly positive hinge), so late-training updates driven by a
  few hard negatives do not vanish;
* average: each sum is divided by the number of enumerated triplets.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import make_rng
from .encoders import EncoderParams, backward_batch, encode_batch
from .losses import LossConfig, batch_ce

ATOB, BTOA = "AtoB", "BtoA"
DIRECTIONS = (ATOB, BTOA)
INSTANCE, SEMANTIC = "instance", "semantic"
UNLABELED = -1


@dataclass(frozen=True)
class Triplet:
    query: int
    positive: int
    negative: int
    kind: str
    direction: str


def enumerate_instance_triplets(n_pairs: int, query_index: int, direction: str) -> list[Triplet]:
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    return [Triplet(query_index, query_index, j, INSTANCE, direction) for j in range(n_pairs) if j != query_index]


def _semantic_candidates(labels: np.ndarray, query_index: int):
    c = labels[query_index]
    idx = np.arange(len(labels))
    positives = idx[(labels == c) & (idx != query_index)]
    negatives = idx[(labels != c) & (labels != UNLABELED)]
    return positives, negatives


def enumerate_semantic_triplets(labels, query_index: int, direction: str, rng) -> list[Triplet]:
    """Uncapped semantic triplets for one query.

    One same-class, non-matching positive is drawn at random from the other
    modality. Negatives are the labeled other-modality items of any other
    class; unlabeled items are never used since their class is unknown.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    labels = np.asarray(labels)
    if labels[query_index] == UNLABELED:
        return []
    positives, negatives = _semantic_candidates(labels, query_index)
    if positives.size == 0 or negatives.size == 0:
        return []
    rng = make_rng(rng)
    p = int(positives[rng.integers(positives.size)])
    return [Triplet(query_index, p, int(k), SEMANTIC, direction) for k in negatives]


def compute_negative_cap(labels) -> int | None:
    """Smallest semantic negative-set size over queries that have a positive.

    Returns ``None`` when no query in the batch has a valid semantic triplet.
    Labels are shared by both modalities of a pair, so the cap is the same
    in either direction.
    """
    labels = np.asarray(labels)
    sizes = []
    for i in np.flatnonzero(labels != UNLABELED):
        positives, negatives = _semantic_candidates(labels, i)
        if positives.size:
            sizes.append(negatives.size)
    if not sizes or min(sizes) == 0:
        return None
    return min(sizes)


def sample_semantic_triplets(labels, rng) -> dict[str, np.ndarray]:
    """All capped semantic triplets of a batch as index arrays.

    Order is direction, then query index, then negative index. For each
    query the positive is drawn first, then the negatives are subsampled
    down to the batch cap, both from ``rng``.
    """
    labels = np.asarray(labels)
    rng = make_rng(rng)
    idx = np.arange(len(labels))
    labeled = labels != UNLABELED
    same = (labels[:, None] == labels[None, :]) & labeled[:, None]
    np.fill_diagonal(same, False)
    diff = labeled[:, None] & labeled[None, :] & ~same
    np.fill_diagonal(diff, False)
    queries = np.flatnonzero(same.any(axis=1))
    empty = {"q": np.empty(0, np.intp), "p": np.empty(0, np.intp), "n": np.empty(0, np.intp), "atob": np.empty(0, bool)}
    if queries.size == 0:
        return empty
    cap = int(diff[queries].sum(axis=1).min())
    if cap == 0:
        return empty
    qs, ps, ns, ab = [], [], [], []
    for direction in DIRECTIONS:
        for i in queries:
            positives = idx[same[i]]
            negatives = idx[diff[i]]
            p = positives[rng.integers(positives.size)]
            if negatives.size > cap:
                negatives = np.sort(negatives[rng.choice(negatives.size, size=cap, replace=False)])
            qs.append(i)
            ps.append(p)
            ns.append(negatives)
            ab.append(direction == ATOB)
    return {
        "q": np.repeat(np.array(qs, dtype=np.intp), cap),
        "p": np.repeat(np.array(ps, dtype=np.intp), cap),
        "n": np.concatenate(ns).astype(np.intp),
        "atob": np.repeat(np.array(ab, dtype=bool), cap),
    }


def build_semantic_triplets(labels, rng) -> list[Triplet]:
    """Same triplets as :func:`sample_semantic_triplets`, as ``Triplet`` records."""
    t = sample_semantic_triplets(labels, rng)
    return [
        Triplet(int(q), int(p), int(n), SEMANTIC, ATOB if d else BTOA)
        for q, p, n, d in zip(t["q"], t["p"], t["n"], t["atob"])
    ]


def triplet_arrays(triplets) -> dict[str, np.ndarray]:
    if isinstance(triplets, dict):
        return triplets
    return {
        "q": np.array([t.query for t in triplets], dtype=np.intp),
        "p": np.array([t.positive for t in triplets], dtype=np.intp),
        "n": np.array([t.negative for t in triplets], dtype=np.intp),
        "atob": np.array([t.direction == ATOB for t in triplets], dtype=bool),
    }


# ---------------------------------------------------------------------------
# latent-space terms; each returns (loss_sum, n_active, n_total, grad_a, grad_b)


def instance_terms(za: np.ndarray, zb: np.ndarray, alpha: float):
    n = len(za)
    S = za @ zb.T
    diag = np.diag(S)
    off = ~np.eye(n, dtype=bool)
    # h[i, j] for query i, negative j; BtoA reads the transposed similarities
    h_ab = alpha - diag[:, None] + S
    h_ba = alpha - diag[:, None] + S.T
    m_ab = ((h_ab > 0) & off).astype(np.float64)
    m_ba = ((h_ba > 0) & off).astype(np.float64)
    r_ab, r_ba = m_ab.sum(axis=1), m_ba.sum(axis=1)

    ga = m_ab @ zb - r_ab[:, None] * zb - r_ba[:, None] * zb + m_ba.T @ zb
    gb = m_ba @ za - r_ba[:, None] * za - r_ab[:, None] * za + m_ab.T @ za
    loss = float((h_ab * m_ab).sum() + (h_ba * m_ba).sum())
    active = int(m_ab.sum() + m_ba.sum())
    return loss, active, 2 * n * (n - 1), ga, gb


def semantic_terms(za: np.ndarray, zb: np.ndarray, trip: dict[str, np.ndarray], alpha: float):
    n = len(za)
    total = len(trip["q"])
    if total == 0:
        return 0.0, 0, 0, np.zeros_like(za), np.zeros_like(zb)
    # rows 0..n-1 are modality A, n..2n-1 modality B
    Z = np.vstack([za, zb])
    off_q = np.where(trip["atob"], 0, n)
    q = trip["q"] + off_q
    p = trip["p"] + (n - off_q)
    neg = trip["n"] + (n - off_q)
    S = Z @ Z.T
    h = alpha - S[q, p] + S[q, neg]
    m = (h > 0).astype(np.float64)
    # dh/dq = z_n - z_p, dh/dp = -z_q, dh/dn = z_q; collect as G = C @ Z
    rows = np.concatenate([q, q, p, neg])
    cols = np.concatenate([neg, p, q, q])
    w = np.concatenate([m, -m, -m, m])
    C = np.bincount(rows * (2 * n) + cols, weights=w, minlength=4 * n * n).reshape(2 * n, 2 * n)
    G = C @ Z
    return float((h * m).sum()), int(m.sum()), total, G[:n], G[n:]


def pairwise_terms(za: np.ndarray, zb: np.ndarray, alpha_pos: float, alpha_neg: float):
    """Every (query, candidate) pair in both directions; the diagonal is positive."""
    n = len(za)
    D = 1.0 - za @ zb.T
    eye = np.eye(n, dtype=bool)
    pos = np.where(eye, D - alpha_pos, 0.0)
    neg = np.where(~eye, alpha_neg - D, 0.0)
    pos_on, neg_on = pos > 0, neg > 0
    # dloss/dD per pair, and dD/dS = -1
    coef = pos_on.astype(np.float64) - neg_on.astype(np.float64)
    # the pair loss is symmetric, so the BtoA direction doubles every term
    ga = -2.0 * coef @ zb
    gb = -2.0 * coef.T @ za
    loss = 2.0 * float(pos[pos_on].sum() + neg[neg_on].sum())
    active = 2 * int(pos_on.sum() + neg_on.sum())
    return loss, active, 2 * n * n, ga, gb


# ---------------------------------------------------------------------------


@dataclass
class Component:
    """Un-normalized gradient sum of one loss, already mapped to parameters."""

    loss: float
    active: int
    total: int
    grads: dict[str, np.ndarray]


@dataclass
class GradientAccumulator:
    grads: dict[str, np.ndarray]
    beta_r: int = 0
    beta_s: int = 0
    n_r: int = 0
    n_s: int = 0
    loss: float = 0.0
    components: dict[str, Component] = field(default_factory=dict, repr=False)

    def norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum()) for g in self.grads.values())))


def _to_params(params, cache_a, cache_b, ga, gb, extra=None):
    grads = params.zeros_like()
    for name, g in backward_batch(params, "a", cache_a, ga).items():
        grads[name] += g
    for name, g in backward_batch(params, "b", cache_b, gb).items():
        grads[name] += g
    for name, g in (extra or {}).items():
        grads[name] += g
    return grads


def batch_components(
    params: EncoderParams,
    features_a,
    features_b,
    labels,
    semantic,
    config: LossConfig,
    terms=("instance", "semantic"),
) -> dict[str, Component]:
    """Forward the batch once and compute each requested loss's gradient sum.

    ``semantic`` is a list of ``Triplet`` or the arrays from
    :func:`sample_semantic_triplets`.
    """
    za, cache_a = encode_batch(params, "a", features_a)
    zb, cache_b = encode_batch(params, "b", features_b)
    out = {}
    if "instance" in terms:
        loss, act, tot, ga, gb = instance_terms(za, zb, config.alpha)
        out["instance"] = Component(loss, act, tot, _to_params(params, cache_a, cache_b, ga, gb))
    if "semantic" in terms:
        trip = triplet_arrays(semantic if semantic is not None else [])
        loss, act, tot, ga, gb = semantic_terms(za, zb, trip, config.alpha)
        out["semantic"] = Component(loss, act, tot, _to_params(params, cache_a, cache_b, ga, gb))
    if "pairwise" in terms:
        loss, act, tot, ga, gb = pairwise_terms(za, zb, config.alpha_pos, config.alpha_neg)
        out["pairwise"] = Component(loss, act, tot, _to_params(params, cache_a, cache_b, ga, gb))
    if "classification" in terms:
        out["classification"] = _classification_component(params, za, zb, cache_a, cache_b, np.asarray(labels))
    return out


def _classification_component(params, za, zb, cache_a, cache_b, labels):
    if not params.has_head:
        raise ValueError("classification term requires a classification head")
    lab = np.flatnonzero(labels != UNLABELED)
    ga, gb = np.zeros_like(za), np.zeros_like(zb)
    head = {"head.W": np.zeros_like(params["head.W"]), "head.b": np.zeros_like(params["head.b"])}
    loss = 0.0
    for z, g in ((za, ga), (zb, gb)):
        if lab.size == 0:
            break
        zl = z[lab]
        scores = zl @ params["head.W"] + params["head.b"]
        losses, dscores = batch_ce(scores, labels[lab])
        loss += float(losses.sum())
        head["head.W"] += zl.T @ dscores
        head["head.b"] += dscores.sum(axis=0)
        g[lab] = dscores @ params["head.W"].T
    n = 2 * lab.size
    return Component(loss, n, n, _to_params(params, cache_a, cache_b, ga, gb, head))


def combine(components: dict[str, Component], strategy: str, lam: float) -> GradientAccumulator:
    """Normalize and weight loss components into one update.

    The triplet losses (and the pairwise loss) are divided by their active
    count under ``adaptive`` and by their total count under ``average``; a
    zero divisor drops the term. The semantic and classification terms are
    weighted by ``lam``. Cross-entropy is always averaged over its rows.
    The reported loss is the objective itself (each term averaged over all
    of its terms), so it is comparable across strategies.
    """
    if strategy not in ("adaptive", "average"):
        raise ValueError(f"unknown aggregation strategy {strategy!r}")
    grads = None
    acc = GradientAccumulator(grads={}, components=components)
    for name, comp in components.items():
        if name == "classification" or strategy == "average":
            div = comp.total
        else:
            div = comp.active
        weight = (lam if name in ("semantic", "classification") else 1.0)
        scale = weight / div if div else 0.0
        if grads is None:
            grads = {k: scale * g for k, g in comp.grads.items()}
        else:
            for k, g in comp.grads.items():
                grads[k] += scale * g
        acc.loss += weight * comp.loss / comp.total if comp.total else 0.0
        if name in ("instance", "pairwise"):
            acc.beta_r, acc.n_r = comp.active, comp.total
        elif name == "semantic":
            acc.beta_s, acc.n_s = comp.active, comp.total
    acc.grads = grads if grads is not None else {}
    return acc


def aggregate_adaptive(params, features_a, features_b, labels, semantic, config: LossConfig) -> GradientAccumulator:
    comps = batch_components(params, features_a, features_b, labels, semantic, config)
    return combine(comps, "adaptive", config.lam)


def aggregate_average(params, features_a, features_b, labels, semantic, config: LossConfig) -> GradientAccumulator:
    comps = batch_components(params, features_a, features_b, labels, semantic, config)
    return combine(comps, "average", config.lam)
