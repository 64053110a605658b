"""UCI car-evaluation ingestion and preprocessing.

Pipeline: parse ``car.data`` -> one-hot (21 columns) with binary labels
(``unacc`` -> -1, everything else -> +1) -> seeded 80/20 split -> PCA fitted on
the training part -> optional min-max scaling to ``[0, 1]``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parents[2] / "data"
CAR_DATA_PATH = DATA_DIR / "car.data"
CAR_DATA_SHA256 = "b703a9ac69f11e64ce8c223c0a40de4d2e9d769f7fb20be5f8f2e8a619893d83"

FEATURES = ("buying", "maint", "doors", "persons", "lug_boot", "safety")
# alphabetical order within each vocabulary fixes the one-hot column order
VOCAB = {
    "buying": ("high", "low", "med", "vhigh"),
    "maint": ("high", "low", "med", "vhigh"),
    "doors": ("2", "3", "4", "5more"),
    "persons": ("2", "4", "more"),
    "lug_boot": ("big", "med", "small"),
    "safety": ("high", "low", "med"),
}
CLASSES = ("acc", "good", "unacc", "vgood")
NEGATIVE_CLASS = "unacc"


@dataclass(frozen=True)
class RawCarRecord:
    buying: str
    maint: str
    doors: str
    persons: str
    lug_boot: str
    safety: str
    label: str


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    provenance: str = "raw"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise InvalidInputError(f"features {x.shape} do not match labels {y.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain NaN or Inf")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidInputError("labels must be -1 or +1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])

    def with_features(self, x, names=(), provenance=None) -> "LabeledDataset":
        return LabeledDataset(x, self.labels, tuple(names), provenance or self.provenance)


def parse_car_csv(text: str) -> list[RawCarRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 7:
            raise InvalidInputError(f"line {lineno}: expected 7 fields, got {len(fields)}")
        for name, value in zip(FEATURES, fields):
            if value not in VOCAB[name]:
                raise InvalidInputError(f"line {lineno}: unknown {name} value {value!r}")
        if fields[6] not in CLASSES:
            raise InvalidInputError(f"line {lineno}: unknown class value {fields[6]!r}")
        records.append(RawCarRecord(*fields))
    return records


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_car_records(path=None, verify: bool = True) -> list[RawCarRecord]:
    path = Path(path or CAR_DATA_PATH)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read car dataset at {path}: {exc}") from exc
    if verify and path.resolve() == CAR_DATA_PATH.resolve():
        digest = hashlib.sha256(raw).hexdigest()
        if digest != CAR_DATA_SHA256:
            raise InvalidInputError(f"{path}: checksum {digest} != recorded {CAR_DATA_SHA256}")
    return parse_car_csv(raw.decode("ascii"))


def one_hot_names() -> tuple[str, ...]:
    return tuple(f"{f}={v}" for f in FEATURES for v in VOCAB[f])


def one_hot(records: list[RawCarRecord]) -> LabeledDataset:
    names = one_hot_names()
    x = np.zeros((len(records), len(names)))
    y = np.empty(len(records))
    offsets = np.cumsum([0] + [len(VOCAB[f]) for f in FEATURES])
    for i, rec in enumerate(records):
        for j, f in enumerate(FEATURES):
            x[i, offsets[j] + VOCAB[f].index(getattr(rec, f))] = 1.0
        y[i] = -1.0 if rec.label == NEGATIVE_CLASS else 1.0
    return LabeledDataset(x, y, names, "one-hot")


def load_car_dataset(path=None) -> LabeledDataset:
    return one_hot(load_car_records(path))


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d, k), orthonormal columns
    explained_variance: np.ndarray  # (k,)
    explained_variance_ratio: np.ndarray  # (k,)

    @property
    def num_components(self) -> int:
        return self.components.shape[1]


def pca_fit(x: np.ndarray, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance.

    Each component's largest-magnitude entry is made positive so fits are
    reproducible across eigensolver sign choices.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if k > d or k < 1:
        raise InvalidInputError(f"cannot take {k} components of {d} features")
    if n < 2:
        raise InvalidInputError("PCA needs at least two samples")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    total = evals.sum()
    ratios = evals / total if total > 0 else np.zeros_like(evals)
    return PcaModel(mean, evecs[:, :k], evals[:k], ratios[:k])


def pca_transform(m: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != m.mean.shape[0]:
        raise InvalidInputError(f"expected {m.mean.shape[0]} columns, got shape {x.shape}")
    return (x - m.mean) @ m.components


def pca_inverse_transform(m: PcaModel, z: np.ndarray) -> np.ndarray:
    return np.asarray(z, dtype=float) @ m.components.T + m.mean


def scree(m: PcaModel) -> list[tuple[int, float]]:
    return [(j, float(r)) for j, r in enumerate(m.explained_variance_ratio)]


def split(ds: LabeledDataset, train_fraction: float = 0.8, seed: int = 0):
    if not 0 < train_fraction < 1:
        raise InvalidInputError("train_fraction must be in (0, 1)")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, x) -> "MinMaxScaler":
        x = np.asarray(x, dtype=float)
        return cls(x.min(axis=0), x.max(axis=0))

    def transform(self, x) -> tuple[np.ndarray, int]:
        """Scaled copy of ``x`` and the number of values clamped into [0, 1]."""
        x = np.asarray(x, dtype=float)
        span = self.high - self.low
        const = span <= 0
        out = (x - self.low) / np.where(const, 1.0, span)
        out[:, const] = 0.5
        clamped = int(np.count_nonzero((out < 0) | (out > 1)))
        return np.clip(out, 0.0, 1.0), clamped


def minmax_scale(train: LabeledDataset, val: LabeledDataset):
    scaler = MinMaxScaler.fit(train.features)
    xt, _ = scaler.transform(train.features)
    xv, clamped = scaler.transform(val.features)
    if clamped:
        log.info("clamped %d validation values into [0, 1]", clamped)
    prov = lambda ds: f"{ds.provenance}+scaled"
    return (
        train.with_features(xt, train.feature_names, prov(train)),
        val.with_features(xv, val.feature_names, prov(val)),
        scaler,
    )


@dataclass(frozen=True)
class PrepareOptions:
    components: int | None = None  # None keeps all 21 one-hot columns
    seed: int = 0
    train_fraction: float = 0.8
    scale: bool = False
    pca_fit_on: str = "train"  # or "all"


def prepare(ds: LabeledDataset, opts: PrepareOptions):
    """Split, reduce and optionally scale; returns ``(train, val)``."""
    train, val = split(ds, opts.train_fraction, opts.seed)
    if opts.components is not None and opts.components < ds.num_features:
        basis = train.features if opts.pca_fit_on == "train" else ds.features
        model = pca_fit(basis, opts.components)
        names = tuple(f"pc{j}" for j in range(opts.components))
        prov = f"pca({opts.components})"
        train = train.with_features(pca_transform(model, train.features), names, prov)
        val = val.with_features(pca_transform(model, val.features), names, prov)
    if opts.scale:
        train, val, _ = minmax_scale(train, val)
    return train, val


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + ["label"])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([_fmt(v) for v in row] + [int(y)])


def scree_csv(rows: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "explained_variance_ratio"])
    for j, r in rows:
        w.writerow([f"{float(j):.1f}", _fmt(r)])
    return buf.getvalue()
