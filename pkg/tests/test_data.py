import json

import numpy as np
import pytest

from xmodal.data import (
    CheckpointVersionError,
    DataFormatError,
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from xmodal.encoders import EncoderSpec, encode, init_params

SMALL = SyntheticSpec(n_classes=4, pairs_per_class=20, latent_dim_true=4, dim_a=6, dim_b=5, seed=3)


def test_split_sizes_disjoint_and_deterministic():
    tr, va, te = generate_synthetic(SMALL)
    assert (tr.split, va.split, te.split) == ("train", "validation", "test")
    assert len(tr) + len(va) + len(te) == 80
    ids = tr.ids + va.ids + te.ids
    assert len(set(ids)) == 80
    again = generate_synthetic(SMALL)
    assert all(x == y for x, y in zip((tr, va, te), again))


def test_label_fraction():
    splits = generate_synthetic(SyntheticSpec(n_classes=4, pairs_per_class=20, unlabeled_fraction=0.5))
    total = sum(len(s) for s in splits)
    assert sum(s.n_labeled for s in splits) == total // 2
    splits = generate_synthetic(SyntheticSpec(n_classes=4, pairs_per_class=20, unlabeled_fraction=0.0))
    assert all(s.n_labeled == len(s) for s in splits)


def test_noiseless_collapses_classes():
    spec = SyntheticSpec(n_classes=3, pairs_per_class=10, sigma_within=0, sigma_cross=0, unlabeled_fraction=0)
    for ds in generate_synthetic(spec):
        for c in range(3):
            rows = ds.features_a[ds.labels == c]
            assert np.all(rows == rows[0])
            rows = ds.features_b[ds.labels == c]
            assert np.all(rows == rows[0])


def nearest_centroid_accuracy(train, test, attr):
    X, y = getattr(train, attr)[train.labels >= 0], train.labels[train.labels >= 0]
    cents = np.stack([X[y == c].mean(axis=0) for c in range(train.n_classes)])
    Xt, yt = getattr(test, attr)[test.labels >= 0], test.labels[test.labels >= 0]
    pred = np.argmin(((Xt[:, None, :] - cents[None]) ** 2).sum(-1), axis=1)
    return (pred == yt).mean()


def test_default_spec_is_class_recoverable():
    tr, _, te = generate_synthetic(SyntheticSpec())
    assert (len(tr), tr.dim_a, tr.dim_b, tr.n_classes) == (2100, 64, 48, 20)
    assert nearest_centroid_accuracy(tr, te, "features_a") > 0.95
    assert nearest_centroid_accuracy(tr, te, "features_b") > 0.95


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(n_classes=0)
    with pytest.raises(ValueError):
        SyntheticSpec(sigma_within=-1)
    with pytest.raises(ValueError):
        SyntheticSpec(unlabeled_fraction=1.5)


def test_dataset_round_trip(tmp_path):
    for ds in generate_synthetic(SMALL):
        path = tmp_path / f"{ds.split}.tsv"
        save_dataset(ds, path)
        assert load_dataset(path) == ds


def test_empty_dataset(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text(json.dumps({"format": "xmodal-pairs/1", "dim_a": 2, "dim_b": 3, "n_classes": 1}) + "\n")
    ds = load_dataset(path)
    assert len(ds) == 0 and ds.dim_a == 2 and ds.dim_b == 3


def _write(tmp_path, lines):
    path = tmp_path / "bad.tsv"
    path.write_text("\n".join(lines) + "\n")
    return path


HEADER = json.dumps({"format": "xmodal-pairs/1", "dim_a": 2, "dim_b": 1, "n_classes": 2})


@pytest.mark.parametrize(
    "lines, match",
    [
        ([HEADER, "x\t0\t1.0,2.0\t3.0", "y\t-\t1.0\t3.0"], "line 3"),
        ([HEADER, "x\t0\t1.0,2.0\t3.0", "x\t1\t1.0,2.0\t3.0"], "duplicate"),
        ([HEADER, "x\t5\t1.0,2.0\t3.0"], "line 2"),
        (["{not json"], "line 1"),
        ([json.dumps({"format": "other"})], "line 1"),
        ([HEADER, "x\t0\t1.0,abc\t3.0"], "line 2"),
        ([HEADER, "x\t0\t1.0,2.0"], "line 2"),
    ],
)
def test_malformed_files(tmp_path, lines, match):
    with pytest.raises(DataFormatError, match=match):
        load_dataset(_write(tmp_path, lines))


def test_checkpoint_round_trip(tmp_path):
    spec = EncoderSpec(4, 3, latent_dim=5, hidden_dims=[6], activation="tanh")
    p = init_params(spec, n_classes=3, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(p, spec, {"scenario": "adamine", "seed": 2}, path)
    q, spec2, cfg = load_checkpoint(path)
    assert q == p and spec2 == spec and cfg["scenario"] == "adamine"
    x = np.array([0.3, -1.0, 2.0, 0.5])
    assert np.array_equal(encode(p, "a", x), encode(q, "a", x))


def test_checkpoint_errors(tmp_path):
    spec = EncoderSpec(4, 3, latent_dim=5)
    p = init_params(spec, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(p, spec, {}, path)
    text = path.read_text()
    trunc = tmp_path / "t.ckpt"
    trunc.write_text(text[: len(text) // 2])
    with pytest.raises(DataFormatError):
        load_checkpoint(trunc)
    header, rest = text.split("\n", 1)
    h = json.loads(header)
    h["format"] = "xmodal-ckpt/9"
    other = tmp_path / "v.ckpt"
    other.write_text(json.dumps(h) + "\n" + rest)
    with pytest.raises(CheckpointVersionError, match="xmodal-ckpt/9.*xmodal-ckpt/1"):
        load_checkpoint(other)
