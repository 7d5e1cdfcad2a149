"""Cross-modal retrieval metrics and the repeated-subset protocol.

Every item of one modality queries all items of the other; the rank of its
true counterpart (1-based, ties broken by candidate index) feeds the median
rank (MedR) and recall-at-K (R@K, in percent).
"""

from dataclasses import dataclass, field

import numpy as np

from .core import cosine_distance, make_rng
from .encoders import EncoderParams, encode_batch

KS = (1, 5, 10)


def rank_of_match(query, candidates, match_index: int) -> int:
    """1-based rank of ``candidates[match_index]`` for ``query`` under cosine distance."""
    cands = np.asarray(candidates, dtype=np.float64)
    if len(cands) == 0:
        raise ValueError("no candidates to rank")
    d = np.array([cosine_distance(query, c) for c in cands])
    others = np.arange(len(d)) != match_index
    dm = d[match_index]
    return int(1 + np.sum(others & (d < dm)) + np.sum(others & (d == dm) & (np.arange(len(d)) < match_index)))


def _unit_rows(m):
    m = np.asarray(m, dtype=np.float64)
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def cross_modal_ranks(queries, candidates) -> np.ndarray:
    """Rank of candidate ``i`` for query ``i``, for every row at once."""
    D = 1.0 - _unit_rows(queries) @ _unit_rows(candidates).T
    n = len(D)
    dm = np.diag(D)[:, None]
    j = np.arange(n)
    lower_index = j[None, :] < j[:, None]
    closer = (D < dm) | ((D == dm) & lower_index)
    np.fill_diagonal(closer, False)
    return 1 + closer.sum(axis=1)


def medr(ranks) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks given")
    return float(np.median(ranks))


def recall_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    ranks = np.asarray(ranks)
    return 100.0 * float(np.count_nonzero(ranks <= k)) / ranks.size


@dataclass
class DirectionStats:
    medr: tuple[float, float]
    recall: dict[int, tuple[float, float]]


@dataclass
class RetrievalReport:
    a_to_b: DirectionStats
    b_to_a: DirectionStats
    subset_size: int
    n_subsets: int
    seed: int
    per_subset: list = field(default_factory=list, repr=False)

    def directions(self):
        return (("AtoB", self.a_to_b), ("BtoA", self.b_to_a))

    def mean_medr(self) -> float:
        return 0.5 * (self.a_to_b.medr[0] + self.b_to_a.medr[0])

    def as_text(self) -> str:
        """Flat ``key: value`` block."""
        lines = [f"subset_size: {self.subset_size}", f"n_subsets: {self.n_subsets}", f"seed: {self.seed}"]
        for name, st in self.directions():
            lines.append(f"{name}.MedR: {st.medr[0]:.4f} +- {st.medr[1]:.4f}")
            for k in KS:
                m, s = st.recall[k]
                lines.append(f"{name}.R@{k}: {m:.4f} +- {s:.4f}")
        return "\n".join(lines)

    @staticmethod
    def tsv_header(prefix=()) -> str:
        cols = list(prefix) + ["direction", "medr_mean", "medr_std"]
        for k in KS:
            cols += [f"r{k}_mean", f"r{k}_std"]
        return "\t".join(cols + ["subset_size", "n_subsets", "seed"])

    def tsv_rows(self, prefix=()) -> list[str]:
        rows = []
        for name, st in self.directions():
            vals = list(prefix) + [name, f"{st.medr[0]:.6g}", f"{st.medr[1]:.6g}"]
            for k in KS:
                vals += [f"{st.recall[k][0]:.6g}", f"{st.recall[k][1]:.6g}"]
            rows.append("\t".join(vals + [str(self.subset_size), str(self.n_subsets), str(self.seed)]))
        return rows


def _stats(per_subset, key):
    meds = np.array([r[key]["medr"] for r in per_subset])
    rec = {k: np.array([r[key]["recall"][k] for r in per_subset]) for k in KS}
    return DirectionStats((float(meds.mean()), float(meds.std())), {k: (float(v.mean()), float(v.std())) for k, v in rec.items()})


def _direction(ranks):
    return {"medr": medr(ranks), "recall": {k: recall_at_k(ranks, k) for k in KS}}


def subset_protocol_latents(za, zb, subset_size: int, n_subsets: int, seed=0) -> RetrievalReport:
    """Evaluate precomputed latents; row ``i`` of ``za`` matches row ``i`` of ``zb``."""
    n = len(za)
    if subset_size < 1 or n_subsets < 1:
        raise ValueError("subset_size and n_subsets must be positive")
    if n < subset_size:
        raise ValueError(f"evaluation needs at least {subset_size} pairs, got {n}")
    rng = make_rng(seed)
    per = []
    for _ in range(n_subsets):
        idx = np.arange(n) if subset_size == n else rng.choice(n, size=subset_size, replace=False)
        a, b = za[idx], zb[idx]
        per.append({"AtoB": _direction(cross_modal_ranks(a, b)), "BtoA": _direction(cross_modal_ranks(b, a))})
    return RetrievalReport(_stats(per, "AtoB"), _stats(per, "BtoA"), subset_size, n_subsets, int(seed) if not isinstance(seed, np.random.Generator) else -1, per)


def embed_dataset(params: EncoderParams, dataset) -> tuple[np.ndarray, np.ndarray]:
    za, _ = encode_batch(params, "a", dataset.features_a)
    zb, _ = encode_batch(params, "b", dataset.features_b)
    return za, zb


def subset_protocol(params: EncoderParams, dataset, subset_size: int = 1000, n_subsets: int = 10, seed=0) -> RetrievalReport:
    if len(dataset) < subset_size:
        raise ValueError(f"evaluation needs at least {subset_size} pairs, dataset has {len(dataset)}")
    za, zb = embed_dataset(params, dataset)
    return subset_protocol_latents(za, zb, subset_size, n_subsets, seed)


def nearest(query_latent, candidates, top: int):
    """Indices and cosine distances of the ``top`` closest candidates (ties by index)."""
    q = np.asarray(query_latent, dtype=np.float64)
    d = 1.0 - _unit_rows(candidates) @ (q / np.linalg.norm(q))
    order = np.lexsort((np.arange(len(d)), d))[:top]
    return order, d[order]
