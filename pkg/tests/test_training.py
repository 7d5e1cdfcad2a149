import math

import numpy as np
import pytest

from xmodal import SyntheticSpec, TrainConfig, generate_synthetic, train
from xmodal.encoders import EncoderParams
from xmodal.training import SCENARIOS, AdamState, ConfigError, adam_step, scenario_losses, sweep_lambda


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(SyntheticSpec(n_classes=4, pairs_per_class=60, dim_a=12, dim_b=10, latent_dim_true=6, seed=3))


def one_param(x):
    return EncoderParams({"a.0.W": np.array([[float(x)]]), "a.0.b": np.zeros(1)}, 1)


def test_adam_zero_grads():
    p = one_param(2.0)
    st = AdamState(p)
    adam_step(p, {"a.0.W": np.zeros((1, 1)), "a.0.b": np.zeros(1)}, st, 1e-4)
    assert p["a.0.W"][0, 0] == 2.0
    assert st.t == 1


def test_adam_first_step():
    p = one_param(0.0)
    st = AdamState(p)
    adam_step(p, {"a.0.W": np.ones((1, 1)), "a.0.b": np.zeros(1)}, st, 1e-4)
    assert abs(p["a.0.W"][0, 0] + 1e-4) < 1e-8


def reference_adam(x0, grad, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v, out = x0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = grad(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
        out.append(x)
    return out


def test_adam_matches_reference_on_quadratic():
    grad = lambda x: 2.0 * (x - 3.0)  # d/dx (x-3)^2
    ref = reference_adam(0.5, grad, 0.1, 10)
    p = one_param(0.5)
    st = AdamState(p)
    got = []
    for _ in range(10):
        x = p["a.0.W"][0, 0]
        adam_step(p, {"a.0.W": np.array([[grad(x)]]), "a.0.b": np.zeros(1)}, st, 0.1)
        got.append(p["a.0.W"][0, 0])
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-10)


def test_adam_frozen_prefix():
    p = EncoderParams({"a.0.W": np.ones((1, 1)), "a.0.b": np.zeros(1), "b.0.W": np.ones((1, 1)), "b.0.b": np.zeros(1)}, 1)
    g = {k: np.ones_like(v) for k, v in p.tensors.items()}
    adam_step(p, g, AdamState(p), 1e-2, frozen=("a.",))
    assert p["a.0.W"][0, 0] == 1.0 and p["b.0.W"][0, 0] < 1.0


def test_scenario_table():
    assert scenario_losses("adamine").terms == ("instance", "semantic")
    assert scenario_losses("adamine").strategy == "adaptive"
    assert scenario_losses("adamine_avg").strategy == "average"
    assert "instance" not in scenario_losses("adamine_sem").terms
    assert scenario_losses("adamine_ins").terms == ("instance",)
    assert "classification" in scenario_losses("adamine_ins_cls").terms
    assert not scenario_losses("pwpp").uses_triplets
    assert len(SCENARIOS) == 6


@pytest.mark.parametrize("kw", [dict(scenario="nope"), dict(learning_rate=0), dict(epochs=0), dict(freeze_branch="C"), dict(alpha=-1)])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_semantic_needs_labels(small):
    tr, va, _ = small
    bare = tr.subset(np.arange(len(tr)))
    bare.labels[:] = -1
    with pytest.raises(ConfigError):
        train(TrainConfig(scenario="adamine", epochs=1, batch_size=40), bare, va)
    _, h = train(TrainConfig(scenario="adamine_ins", epochs=1, batch_size=40), bare, va)
    assert len(h.records) == 1


def test_too_small_for_a_batch(small):
    tr, va, _ = small
    with pytest.raises(ConfigError):
        train(TrainConfig(epochs=1, batch_size=len(tr) + 1), tr, va)


def test_determinism_and_beta_s(small):
    tr, va, _ = small
    cfg = TrainConfig(scenario="adamine_ins", epochs=3, batch_size=40, seed=5)
    p1, h1 = train(cfg, tr, va)
    p2, h2 = train(cfg, tr, va)
    assert p1 == p2
    assert h1.log_text() == h2.log_text()
    assert all(r.beta_s == 0 for r in h1.records)


def test_frozen_branch_bit_identical(small):
    tr, va, _ = small
    cfg = TrainConfig(epochs=3, batch_size=40, freeze_branch="A", unfreeze_epoch=3, eval_every=1)
    seen = []
    from xmodal import training

    orig = training.adam_step

    def spy(params, grads, state, lr, frozen=()):
        seen.append(({k: v.copy() for k, v in params.tensors.items() if k.startswith("a.")}, frozen))
        return orig(params, grads, state, lr, frozen)

    training.adam_step = spy
    try:
        train(cfg, tr, va)
    finally:
        training.adam_step = orig
    frozen_steps = [s for s in seen if s[1]]
    assert frozen_steps and len(frozen_steps) < len(seen)
    first = frozen_steps[0][0]
    # every step while frozen starts from the initial branch-a weights
    for snap, _ in frozen_steps:
        assert all(np.array_equal(first[k], snap[k]) for k in first)
    nxt = seen[len(frozen_steps)][0]
    assert all(np.array_equal(first[k], nxt[k]) for k in first)


def test_loss_descent_two_classes():
    tr, va, _ = generate_synthetic(SyntheticSpec(n_classes=2, pairs_per_class=150, dim_a=16, dim_b=12, latent_dim_true=4, sigma_within=0.0, sigma_cross=0.0, seed=1))
    _, h = train(TrainConfig(scenario="adamine_ins", epochs=20, batch_size=50, eval_every=20), tr, va)
    assert h.records[19].loss < h.records[0].loss


def test_model_selection_is_argmin(small):
    tr, va, _ = small
    _, h = train(TrainConfig(epochs=6, batch_size=40, eval_every=2), tr, va)
    ev = h.evaluated()
    assert [r.epoch for r in ev] == [2, 4, 6]
    best = min(ev, key=lambda r: (r.val_medr, r.epoch))
    assert h.best_epoch == best.epoch


def test_strategy_does_not_change_sampling(small):
    tr, va, _ = small
    from xmodal import training

    calls = {"adamine": [], "adamine_avg": []}
    orig = training.build_epoch_batches
    for name in calls:
        def spy(*a, _n=name, **k):
            out = orig(*a, **k)
            calls[_n].append([mb.pair_indices.copy() for mb in out])
            return out

        training.build_epoch_batches = spy
        try:
            train(TrainConfig(scenario=name, epochs=1, batch_size=40), tr, va)
        finally:
            training.build_epoch_batches = orig
    a, b = calls["adamine"][0], calls["adamine_avg"][0]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_norm_ratio_recorded(small):
    tr, va, _ = small
    _, h = train(TrainConfig(epochs=2, batch_size=40), tr, va)
    assert h.step_norm_ratios and min(h.step_norm_ratios) >= 1.0 - 1e-12


def test_sweep_one_row(small):
    tr, va, _ = small
    rows = sweep_lambda(TrainConfig(epochs=1, batch_size=40), tr, va, [0.5])
    assert len(rows) == 1 and rows[0][0] == 0.5
