"""
Adaptive versus average aggregation
===================================

Dividing by the number of active triplets keeps the update size steady
as training satisfies more and more constraints.
"""

import numpy as np

from xmodal import EncoderSpec, LossConfig, init_params
from xmodal.mining import aggregate_adaptive, aggregate_average, sample_semantic_triplets

rng = np.random.default_rng(0)
n, k = 40, 4
labels = np.repeat(np.arange(k), n // k)
centers = rng.normal(size=(k, 8))

spec = EncoderSpec(8, 8, latent_dim=8)
params = init_params(spec, seed=1)
params.tensors["a.0.W"] = np.eye(8)
params.tensors["b.0.W"] = np.eye(8)

# Shrinking the noise tightens the classes: semantic triplets get satisfied
# while same-class instance negatives crowd in around each match
for noise in (2.0, 1.0, 0.5, 0.2):
    fa = centers[labels] + noise * rng.normal(size=(n, 8))
    fb = fa + 0.05 * rng.normal(size=(n, 8))
    sem = sample_semantic_triplets(labels, rng)
    cfg = LossConfig()
    ad = aggregate_adaptive(params, fa, fb, labels, sem, cfg)
    av = aggregate_average(params, fa, fb, labels, sem, cfg)
    print(
        f"noise {noise:.1f}  active ins {ad.beta_r:5d}/{ad.n_r}  sem {ad.beta_s:4d}/{ad.n_s}"
        f"  |adaptive| {ad.norm():.3f}  |average| {av.norm():.3f}"
    )
