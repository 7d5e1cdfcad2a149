"""Command-line front-end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .data import DataFormatError, SyntheticSpec, generate_synthetic, load_checkpoint, load_dataset, save_checkpoint, save_splits
from .encoders import EncoderSpec, encode
from .evaluation import RetrievalReport, nearest, subset_protocol, embed_dataset
from .training import SCENARIOS, ConfigError, TrainConfig, sweep_lambda, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

# config-file keys; "lambda" is the semantic weight
CONFIG_DEFAULTS = {
    "train": None,
    "validation": None,
    "test": None,
    "scenario": "adamine",
    "alpha": 0.3,
    "lambda": 0.3,
    "alpha_pos": 0.3,
    "alpha_neg": 0.9,
    "learning_rate": 1e-4,
    "epochs": 50,
    "batch_size": 100,
    "labeled_fraction": 0.5,
    "freeze_branch": "none",
    "unfreeze_epoch": 0,
    "eval_every": 1,
    "seed": 0,
    "latent_dim": 64,
    "hidden_dims": [],
    "activation": "relu",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def load_config(path, overrides: dict) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"config {path}: invalid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise UsageError(f"config {path}: expected a JSON object")
        unknown = sorted(set(doc) - set(CONFIG_DEFAULTS))
        if unknown:
            raise UsageError(f"config {path}: unknown keys {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    keys = set(TrainConfig.field_names()) - {"lam"}
    return TrainConfig(lam=float(cfg["lambda"]), **{k: cfg[k] for k in keys})


def encoder_spec(cfg: dict, dataset) -> EncoderSpec:
    return EncoderSpec(dataset.dim_a, dataset.dim_b, int(cfg["latent_dim"]), list(cfg["hidden_dims"]), cfg["activation"])


def _need(cfg, key):
    if not cfg.get(key):
        raise UsageError(f"no {key} dataset given (config key {key!r} or --{key})")
    return load_dataset(cfg[key])


def _config_overrides(args) -> dict:
    return {
        "train": getattr(args, "train", None),
        "validation": getattr(args, "validation", None),
        "test": getattr(args, "test", None),
        "scenario": getattr(args, "scenario", None),
        "alpha": args.alpha,
        "lambda": args.lam,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "labeled_fraction": args.labeled_fraction,
        "freeze_branch": args.freeze_branch,
        "unfreeze_epoch": args.unfreeze_epoch,
        "eval_every": args.eval_every,
        "seed": args.seed,
        "latent_dim": args.latent_dim,
        "hidden_dims": [int(h) for h in args.hidden_dims.split(",") if h] if args.hidden_dims is not None else None,
    }


# ---------------------------------------------------------------------------


def cmd_gen(args):
    fields = dict(SyntheticSpec().to_dict())
    if args.spec:
        doc = json.loads(Path(args.spec).read_text())
        unknown = sorted(set(doc) - set(fields))
        if unknown:
            raise UsageError(f"spec {args.spec}: unknown keys {', '.join(unknown)}")
        fields.update(doc)
    for key in fields:
        v = getattr(args, key, None)
        if v is not None:
            fields[key] = v
    try:
        spec = SyntheticSpec(**fields)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid synthetic spec: {e}") from None
    splits = generate_synthetic(spec)
    paths = save_splits(splits, args.out)
    for ds, p in zip(splits, paths):
        print(f"{ds.split}\t{len(ds)}\t{ds.n_labeled}\t{p}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config, _config_overrides(args))
    tc = train_config(cfg)
    tr, va = _need(cfg, "train"), _need(cfg, "validation")
    enc = encoder_spec(cfg, tr)
    log_file = open(args.log, "w") if args.log else None
    try:
        params, hist = train(tc, tr, va, enc, progress=(lambda r: (log_file.write(r.log_line() + "\n"), log_file.flush())) if log_file else None)
    finally:
        if log_file:
            log_file.close()
    save_checkpoint(params, enc, tc.to_dict(), args.out)
    best = next(r for r in hist.records if r.epoch == hist.best_epoch)
    print(f"best epoch {hist.best_epoch}: val MedR {best.val_medr_ab:g} / {best.val_medr_ba:g}")
    return EXIT_OK


def _subset_size(requested, n):
    if requested is None:
        size = min(1000, n)
        if size < 1000:
            print(f"note: dataset has {n} pairs; evaluating on subsets of {size}", file=sys.stderr)
        return size
    return requested


def cmd_eval(args):
    params, _, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    rep = subset_protocol(params, ds, _subset_size(args.subset_size, len(ds)), args.n_subsets, args.seed)
    print(rep.as_text())
    if args.tsv:
        Path(args.tsv).write_text("\n".join([RetrievalReport.tsv_header(), *rep.tsv_rows()]) + "\n")
    return EXIT_OK


def cmd_sweep_lambda(args):
    cfg = load_config(args.config, _config_overrides(args))
    tc = train_config(cfg)
    tr, va = _need(cfg, "train"), _need(cfg, "validation")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --values {args.values!r}") from None
    rows = sweep_lambda(tc, tr, va, values, encoder_spec(cfg, tr))
    lines = ["lambda\tval_medr\tval_medr_ab\tval_medr_ba"] + [f"{l:g}\t{m:g}\t{a:g}\t{b:g}" for l, m, a, b in rows]
    print("\n".join(lines))
    if args.tsv:
        Path(args.tsv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_compare(args):
    cfg = load_config(args.config, _config_overrides(args))
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    bad = [s for s in names if s not in SCENARIOS]
    if bad:
        raise UsageError(f"unknown scenario(s) {', '.join(bad)}; valid: {', '.join(SCENARIOS)}")
    tr, va, te = _need(cfg, "train"), _need(cfg, "validation"), _need(cfg, "test")
    enc = encoder_spec(cfg, tr)
    size = _subset_size(args.subset_size, len(te))
    lines = [RetrievalReport.tsv_header(["scenario"])]
    for name in names:
        tc = train_config({**cfg, "scenario": name})
        params, _ = train(tc, tr, va, enc)
        rep = subset_protocol(params, te, size, args.n_subsets, args.eval_seed)
        lines += rep.tsv_rows([name])
    print("\n".join(lines))
    if args.tsv:
        Path(args.tsv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_query(args):
    params, _, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    qb = args.modality.lower()
    cb = "b" if qb == "a" else "a"
    if (args.features is None) == (args.id is None):
        raise UsageError("give exactly one of --features or --id")
    if args.id is not None:
        i = ds.index_of(args.id)
        feats = (ds.features_a if qb == "a" else ds.features_b)[i]
    else:
        try:
            feats = np.array([float(v) for v in args.features.split(",")])
        except ValueError:
            raise UsageError("--features must be comma-separated numbers") from None
    z = encode(params, qb, feats)
    za, zb = embed_dataset(params, ds)
    idx, dist = nearest(z, zb if cb == "b" else za, max(1, args.top))
    for rank, (j, d) in enumerate(zip(idx, dist), start=1):
        print(f"{rank}\t{ds.ids[j]}\t{d:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _train_flags(p, with_scenario=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--train", help="training dataset file")
    p.add_argument("--validation", help="validation dataset file")
    if with_scenario:
        p.add_argument("--scenario", choices=list(SCENARIOS))
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--labeled-fraction", type=float)
    p.add_argument("--freeze-branch", choices=["none", "A", "B"])
    p.add_argument("--unfreeze-epoch", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--hidden-dims", help="comma-separated hidden layer widths")


def build_parser():
    ap = _Parser(prog="xmodal", description="Cross-modal triplet metric learning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic paired dataset")
    g.add_argument("--spec", help="JSON file with synthetic spec fields")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--n-classes", dest="n_classes", type=int)
    g.add_argument("--pairs-per-class", dest="pairs_per_class", type=int)
    g.add_argument("--latent-dim-true", dest="latent_dim_true", type=int)
    g.add_argument("--dim-a", dest="dim_a", type=int)
    g.add_argument("--dim-b", dest="dim_b", type=int)
    g.add_argument("--sigma-within", dest="sigma_within", type=float)
    g.add_argument("--sigma-cross", dest="sigma_cross", type=float)
    g.add_argument("--unlabeled-fraction", dest="unlabeled_fraction", type=float)
    g.add_argument("--class-dims", dest="class_dims", type=int)
    g.add_argument("--center-scale", dest="center_scale", type=float)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train one scenario")
    _train_flags(t)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="per-epoch log file")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="retrieval report for a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--subset-size", type=int, help="default: min(1000, dataset size)")
    e.add_argument("--n-subsets", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--tsv", help="also write tab-separated rows here")
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("sweep-lambda", help="validation MedR for several semantic weights")
    _train_flags(s)
    s.add_argument("--values", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    s.add_argument("--tsv")
    s.set_defaults(fn=cmd_sweep_lambda)

    c = sub.add_parser("compare", help="train and evaluate several scenarios")
    _train_flags(c, with_scenario=False)
    c.add_argument("--test", help="test dataset file")
    c.add_argument("--scenarios", required=True)
    c.add_argument("--subset-size", type=int)
    c.add_argument("--n-subsets", type=int, default=10)
    c.add_argument("--eval-seed", type=int, default=0)
    c.add_argument("--tsv")
    c.set_defaults(fn=cmd_compare)

    q = sub.add_parser("query", help="nearest cross-modal neighbours of one item")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--dataset", required=True)
    q.add_argument("--modality", required=True, choices=["A", "B", "a", "b"])
    q.add_argument("--features")
    q.add_argument("--id")
    q.add_argument("--top", type=int, default=10)
    q.set_defaults(fn=cmd_query)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError, KeyError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
