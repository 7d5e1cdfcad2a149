"""Adam training loop over the scenario catalogue.

A scenario fixes which losses are active and how their per-triplet
gradients are aggregated:

==================  =============================  ===========
scenario            losses                         aggregation
==================  =============================  ===========
adamine             instance + semantic            adaptive
adamine_ins         instance                       adaptive
adamine_sem         semantic                       adaptive
adamine_ins_cls     instance + classification      adaptive
adamine_avg         instance + semantic            average
pwpp                pairwise with positive margin  average
==================  =============================  ===========
"""

import logging
import math
from dataclasses import dataclass, field, asdict, fields

import numpy as np

from .encoders import EncoderParams, EncoderSpec, init_params
from .evaluation import embed_dataset, subset_protocol_latents
from .losses import LossConfig
from .mining import batch_components, combine, sample_semantic_triplets
from .sampling import build_epoch_batches

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Configuration inconsistent with itself or with the data."""


@dataclass(frozen=True)
class Scenario:
    name: str
    terms: tuple[str, ...]
    strategy: str

    @property
    def needs_labels(self) -> bool:
        return "semantic" in self.terms or "classification" in self.terms

    @property
    def uses_triplets(self) -> bool:
        return "instance" in self.terms or "semantic" in self.terms


SCENARIOS = {
    s.name: s
    for s in (
        Scenario("adamine", ("instance", "semantic"), "adaptive"),
        Scenario("adamine_ins", ("instance",), "adaptive"),
        Scenario("adamine_sem", ("semantic",), "adaptive"),
        Scenario("adamine_ins_cls", ("instance", "classification"), "adaptive"),
        Scenario("adamine_avg", ("instance", "semantic"), "average"),
        Scenario("pwpp", ("pairwise",), "average"),
    )
}


def scenario_losses(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}") from None


@dataclass
class TrainConfig:
    scenario: str = "adamine"
    alpha: float = 0.3
    lam: float = 0.3
    alpha_pos: float = 0.3
    alpha_neg: float = 0.9
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 100
    labeled_fraction: float = 0.5
    freeze_branch: str = "none"
    unfreeze_epoch: int = 0
    eval_every: int = 1
    seed: int = 0

    def __post_init__(self):
        scenario_losses(self.scenario)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ConfigError("labeled_fraction must lie in [0, 1]")
        if self.freeze_branch not in ("none", "A", "B"):
            raise ConfigError("freeze_branch must be none, A or B")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        try:
            self.loss_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def loss_config(self) -> LossConfig:
        return LossConfig(self.alpha, self.lam, self.alpha_pos, self.alpha_neg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class AdamState:
    def __init__(self, params: EncoderParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps


def adam_step(params: EncoderParams, grads: dict, state: AdamState, lr: float, frozen=()) -> tuple[EncoderParams, AdamState]:
    """Bias-corrected Adam update, in place. Names starting with a prefix in ``frozen`` are skipped."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.tensors.items():
        if any(name.startswith(f) for f in frozen):
            continue
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    beta_r: float
    beta_s: float
    update_norm: float
    val_medr_ab: float = math.nan
    val_medr_ba: float = math.nan
    min_norm_ratio: float = math.nan

    @property
    def val_medr(self) -> float:
        return 0.5 * (self.val_medr_ab + self.val_medr_ba)

    def log_line(self) -> str:
        def f(x):
            return "-" if math.isnan(x) else f"{x:.10g}"

        return "\t".join(
            [str(self.epoch), f(self.loss), f(self.beta_r), f(self.beta_s), f(self.update_norm), f(self.val_medr_ab), f(self.val_medr_ba)]
        )


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    # adaptive / average update-norm ratio at every step of a triplet scenario
    step_norm_ratios: list[float] = field(default_factory=list)
    best_epoch: int = 0

    LOG_HEADER = "epoch\tloss\tbeta_r\tbeta_s\tupdate_norm\tval_medr_ab\tval_medr_ba"

    def log_text(self) -> str:
        return "\n".join([self.LOG_HEADER] + [r.log_line() for r in self.records]) + "\n"

    def evaluated(self) -> list[EpochRecord]:
        return [r for r in self.records if not math.isnan(r.val_medr_ab)]


def default_encoder_spec(train, latent_dim=64, hidden_dims=(), activation="relu") -> EncoderSpec:
    return EncoderSpec(train.dim_a, train.dim_b, latent_dim, list(hidden_dims), activation)


def validation_medr(params: EncoderParams, dataset, seed) -> tuple[float, float]:
    """MedR per direction on one seeded subset of at most 1000 pairs."""
    za, zb = embed_dataset(params, dataset)
    rep = subset_protocol_latents(za, zb, min(1000, len(dataset)), 1, seed)
    return rep.a_to_b.medr[0], rep.b_to_a.medr[0]


def check_inputs(config: TrainConfig, train, validation, encoder: EncoderSpec):
    sc = scenario_losses(config.scenario)
    if len(train) < config.batch_size:
        raise ConfigError(f"training set has {len(train)} pairs, fewer than one batch of {config.batch_size}")
    if validation is None or len(validation) < 2:
        raise ConfigError("validation set needs at least 2 pairs")
    if sc.needs_labels and train.n_labeled == 0:
        raise ConfigError(f"scenario {sc.name} needs class labels but the training set has none")
    if (train.dim_a, train.dim_b) != (encoder.input_dim_a, encoder.input_dim_b):
        raise ConfigError("encoder input dims do not match the training data")
    if (validation.dim_a, validation.dim_b) != (train.dim_a, train.dim_b):
        raise ConfigError("validation feature dims differ from training")


def train(config: TrainConfig, train_set, validation, encoder: EncoderSpec | None = None, progress=None):
    """Train one scenario; returns (best parameters, history).

    The returned parameters are the snapshot with the lowest mean validation
    MedR over both directions, the earliest epoch winning ties.
    """
    encoder = encoder or default_encoder_spec(train_set)
    check_inputs(config, train_set, validation, encoder)
    sc = scenario_losses(config.scenario)
    loss_cfg = config.loss_config()

    seeds = np.random.SeedSequence(config.seed).spawn(4)
    init_seed, sample_rng, mine_rng = seeds[0], np.random.default_rng(seeds[1]), np.random.default_rng(seeds[2])
    eval_seed = int(seeds[3].generate_state(1)[0])

    n_classes = train_set.n_classes if "classification" in sc.terms else None
    params = init_params(encoder, n_classes, seed=np.random.default_rng(init_seed))
    state = AdamState(params)
    other = "average" if sc.strategy == "adaptive" else "adaptive"

    history = TrainHistory()
    best_params, best_score = params.copy(), math.inf
    fa, fb, labels = train_set.features_a, train_set.features_b, train_set.labels

    for epoch in range(1, config.epochs + 1):
        frozen = ()
        if config.freeze_branch != "none" and epoch < config.unfreeze_epoch:
            frozen = (config.freeze_branch.lower() + ".",)
        batches = build_epoch_batches(labels, config.batch_size, config.labeled_fraction, sample_rng)
        losses, br, bs, norms, ratios = [], [], [], [], []
        for mb in batches:
            idx = mb.pair_indices
            lab = labels[idx]
            sem = sample_semantic_triplets(lab, mine_rng) if "semantic" in sc.terms else None
            comps = batch_components(params, fa[idx], fb[idx], lab, sem, loss_cfg, sc.terms)
            acc = combine(comps, sc.strategy, loss_cfg.lam)
            if sc.uses_triplets:
                alt = combine(comps, other, loss_cfg.lam).norm()
                adaptive_norm, average_norm = (acc.norm(), alt) if sc.strategy == "adaptive" else (alt, acc.norm())
                if average_norm > 0:
                    ratios.append(adaptive_norm / average_norm)
            losses.append(acc.loss)
            br.append(acc.beta_r)
            bs.append(acc.beta_s)
            norms.append(acc.norm())
            adam_step(params, acc.grads, state, config.learning_rate, frozen)

        rec = EpochRecord(epoch, float(np.mean(losses)), float(np.mean(br)), float(np.mean(bs)), float(np.mean(norms)))
        rec.min_norm_ratio = min(ratios) if ratios else math.nan
        history.step_norm_ratios.extend(ratios)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            rec.val_medr_ab, rec.val_medr_ba = validation_medr(params, validation, eval_seed)
            if rec.val_medr < best_score:
                best_score, best_params, history.best_epoch = rec.val_medr, params.copy(), epoch
        history.records.append(rec)
        log.debug(rec.log_line())
        if progress:
            progress(rec)
    return best_params, history


def sweep_lambda(config: TrainConfig, train_set, validation, values, encoder=None):
    """Best validation MedR (mean of both directions) for each semantic weight."""
    rows = []
    for lam in values:
        cfg = TrainConfig(**{**config.to_dict(), "lam": float(lam)})
        _, hist = train(cfg, train_set, validation, encoder)
        best = min(r.val_medr for r in hist.evaluated())
        ab = next(r for r in hist.records if r.epoch == hist.best_epoch)
        rows.append((float(lam), best, ab.val_medr_ab, ab.val_medr_ba))
    return rows
