"""Paired datasets: synthetic generation, text file format and checkpoints.

Dataset file (``xmodal-pairs/1``)::

    {"format": "xmodal-pairs/1", "dim_a": D, "dim_b": E, "n_classes": C}
    id <TAB> class-or-dash <TAB> a1,a2,... <TAB> b1,b2,...

Checkpoint file (``xmodal-ckpt/1``): a JSON header line followed by one
line per tensor, ``name <TAB> shape <TAB> values``.
Floats are written with ``repr`` so reading them back is exact.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .core import make_rng
from .encoders import EncoderParams, EncoderSpec

DATASET_FORMAT = "xmodal-pairs/1"
CHECKPOINT_FORMAT = "xmodal-ckpt/1"
UNLABELED = -1


class DataFormatError(ValueError):
    """Malformed dataset or checkpoint file."""


class CheckpointVersionError(DataFormatError):
    pass


@dataclass
class PairedSample:
    id: str
    features_a: np.ndarray
    features_b: np.ndarray
    class_label: int | None = None


@dataclass
class Dataset:
    ids: list[str]
    features_a: np.ndarray
    features_b: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = ""

    def __post_init__(self):
        self.features_a = np.asarray(self.features_a, dtype=np.float64)
        self.features_b = np.asarray(self.features_b, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.ids)
        if self.features_a.shape[0] != n or self.features_b.shape[0] != n or self.labels.shape != (n,):
            raise ValueError("ids, features and labels must have the same length")
        if len(set(self.ids)) != n:
            raise ValueError("sample ids must be unique")
        if n and self.labels.max() >= self.n_classes:
            raise ValueError("class label exceeds n_classes")

    def __len__(self):
        return len(self.ids)

    @property
    def dim_a(self) -> int:
        return self.features_a.shape[1]

    @property
    def dim_b(self) -> int:
        return self.features_b.shape[1]

    @property
    def n_labeled(self) -> int:
        return int((self.labels != UNLABELED).sum())

    def __getitem__(self, i) -> PairedSample:
        lab = int(self.labels[i])
        return PairedSample(self.ids[i], self.features_a[i], self.features_b[i], None if lab == UNLABELED else lab)

    def subset(self, indices, split=None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            [self.ids[i] for i in indices],
            self.features_a[indices],
            self.features_b[indices],
            self.labels[indices],
            self.n_classes,
            self.split if split is None else split,
        )

    def index_of(self, sample_id: str) -> int:
        try:
            return self.ids.index(sample_id)
        except ValueError:
            raise KeyError(f"no sample with id {sample_id!r}") from None

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.ids == other.ids
            and self.n_classes == other.n_classes
            and self.split == other.split
            and self.features_a.shape == other.features_a.shape
            and self.features_b.shape == other.features_b.shape
            and np.array_equal(self.features_a, other.features_a)
            and np.array_equal(self.features_b, other.features_b)
            and np.array_equal(self.labels, other.labels)
        )


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    n_classes: int = 20
    pairs_per_class: int = 150
    latent_dim_true: int = 16
    dim_a: int = 64
    dim_b: int = 48
    sigma_within: float = 0.2
    sigma_cross: float = 0.1
    unlabeled_fraction: float = 0.5
    seed: int = 13
    class_dims: int | None = None
    center_scale: float = 1.0

    def __post_init__(self):
        for name in ("n_classes", "pairs_per_class", "latent_dim_true", "dim_a", "dim_b"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.sigma_within < 0 or self.sigma_cross < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.unlabeled_fraction <= 1.0:
            raise ValueError("unlabeled_fraction must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Clustered paired data seen through two random linear views.

    Each class gets a standard-normal center in a hidden space; a pair's
    hidden point is its center plus ``sigma_within`` noise. Modality A sees
    ``map_a @ z`` plus ``sigma_cross`` noise, modality B an independent map.
    Maps are scaled so a feature has roughly the hidden point's variance.
    Splits are 70/15/15 within each class; labels are stripped from a random
    ``unlabeled_fraction`` of every split.
    """
    rng = make_rng(spec.seed)
    k = spec.latent_dim_true
    r = k if spec.class_dims is None else min(spec.class_dims, k)
    centers = np.zeros((spec.n_classes, k))
    centers[:, :r] = spec.center_scale * rng.standard_normal((spec.n_classes, r))
    map_a = rng.standard_normal((spec.dim_a, k)) / np.sqrt(k)
    map_b = rng.standard_normal((spec.dim_b, k)) / np.sqrt(k)

    n = spec.n_classes * spec.pairs_per_class
    classes = np.repeat(np.arange(spec.n_classes), spec.pairs_per_class)
    z = centers[classes] + spec.sigma_within * rng.standard_normal((n, k))
    fa = z @ map_a.T + spec.sigma_cross * rng.standard_normal((n, spec.dim_a))
    fb = z @ map_b.T + spec.sigma_cross * rng.standard_normal((n, spec.dim_b))
    ids = [f"p{i:06d}" for i in range(n)]

    parts = {"train": [], "validation": [], "test": []}
    for c in range(spec.n_classes):
        members = rng.permutation(np.flatnonzero(classes == c))
        n_train = int(round(SPLIT_FRACTIONS[0] * len(members)))
        n_val = int(round(SPLIT_FRACTIONS[1] * len(members)))
        parts["train"].append(members[:n_train])
        parts["validation"].append(members[n_train:n_train + n_val])
        parts["test"].append(members[n_train + n_val:])

    full = Dataset(ids, fa, fb, classes, spec.n_classes)
    out = []
    for split, chunks in parts.items():
        idx = np.sort(np.concatenate(chunks))
        ds = full.subset(idx, split=split)
        n_strip = int(round(spec.unlabeled_fraction * len(ds)))
        strip = rng.choice(len(ds), size=n_strip, replace=False)
        ds.labels[strip] = UNLABELED
        out.append(ds)
    return tuple(out)


# ---------------------------------------------------------------------------
# dataset files


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_dataset(dataset: Dataset, path) -> None:
    header = {"format": DATASET_FORMAT, "dim_a": dataset.dim_a, "dim_b": dataset.dim_b, "n_classes": dataset.n_classes}
    if dataset.split:
        header["split"] = dataset.split
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for i, sid in enumerate(dataset.ids):
            lab = int(dataset.labels[i])
            f.write(f"{sid}\t{'-' if lab == UNLABELED else lab}\t{_fmt(dataset.features_a[i])}\t{_fmt(dataset.features_b[i])}\n")


def _parse_floats(text, expected, lineno, what):
    try:
        vals = [float(v) for v in text.split(",")] if text else []
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric value in {what}") from None
    if len(vals) != expected:
        raise DataFormatError(f"line {lineno}: {what} has {len(vals)} values, header declares {expected}")
    if not np.all(np.isfinite(vals)):
        raise DataFormatError(f"line {lineno}: non-finite value in {what}")
    return vals


def load_dataset(path) -> Dataset:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataFormatError("line 1: missing header")
    try:
        header = json.loads(lines[0])
        if header.get("format") != DATASET_FORMAT:
            raise DataFormatError(f"line 1: expected format {DATASET_FORMAT!r}, got {header.get('format')!r}")
        dim_a, dim_b, n_classes = int(header["dim_a"]), int(header["dim_b"]), int(header["n_classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as e:
        if isinstance(e, DataFormatError):
            raise
        raise DataFormatError(f"line 1: malformed header ({e})") from None
    if dim_a < 1 or dim_b < 1 or n_classes < 0:
        raise DataFormatError("line 1: dimensions must be positive")

    ids, fa, fb, labels, seen = [], [], [], [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataFormatError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        sid, lab, a, b = fields
        if sid in seen:
            raise DataFormatError(f"line {lineno}: duplicate id {sid!r}")
        seen.add(sid)
        if lab == "-":
            label = UNLABELED
        else:
            try:
                label = int(lab)
            except ValueError:
                raise DataFormatError(f"line {lineno}: bad class label {lab!r}") from None
            if not 0 <= label < n_classes:
                raise DataFormatError(f"line {lineno}: class {label} outside [0, {n_classes})")
        ids.append(sid)
        labels.append(label)
        fa.append(_parse_floats(a, dim_a, lineno, "features_a"))
        fb.append(_parse_floats(b, dim_b, lineno, "features_b"))
    return Dataset(
        ids,
        np.array(fa, dtype=np.float64).reshape(len(ids), dim_a),
        np.array(fb, dtype=np.float64).reshape(len(ids), dim_b),
        np.array(labels, dtype=np.int64),
        n_classes,
        header.get("split", ""),
    )


def save_splits(splits, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ds in splits:
        p = out_dir / f"{ds.split}.tsv"
        save_dataset(ds, p)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: EncoderParams, spec: EncoderSpec, config: dict | None, path) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "encoder": spec.to_dict(),
        "config": config or {},
        "n_layers": params.n_layers,
        "activation": params.activation,
        "tensors": params.names(),
    }
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for name, arr in params.tensors.items():
            shape = ",".join(str(s) for s in arr.shape)
            f.write(f"{name}\t{shape}\t{_fmt(arr.ravel())}\n")


def load_checkpoint(path) -> tuple[EncoderParams, EncoderSpec, dict]:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataFormatError("checkpoint is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DataFormatError("checkpoint header is not valid JSON") from None
    fmt = header.get("format") if isinstance(header, dict) else None
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointVersionError(f"checkpoint format {fmt!r} is not supported; expected {CHECKPOINT_FORMAT!r}")
    names = header["tensors"]
    body = lines[1:]
    if len(body) < len(names):
        raise DataFormatError(f"checkpoint truncated: {len(body)} of {len(names)} tensors present")
    tensors = {}
    for lineno, (name, line) in enumerate(zip(names, body), start=2):
        fields = line.split("\t")
        if len(fields) != 3 or fields[0] != name:
            raise DataFormatError(f"line {lineno}: corrupt tensor record (expected {name!r})")
        shape = tuple(int(s) for s in fields[1].split(",") if s)
        size = int(np.prod(shape))
        vals = _parse_floats(fields[2], size, lineno, name)
        tensors[name] = np.array(vals, dtype=np.float64).reshape(shape)
    spec = EncoderSpec(**header["encoder"])
    params = EncoderParams(tensors, int(header["n_layers"]), header.get("activation", spec.activation))
    return params, spec, header.get("config", {})
