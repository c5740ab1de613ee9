"""Dataset ingestion, labelling, stratified splitting, and normalisation.

A dataset is one CSV: required columns ``id``, ``text``, ``rating`` plus
the caller-declared feature columns.  Ratings live on a 7-point scale and
binarise to the loyalty label (6 or 7 -> 1).  Splitting is stratified by
that label and fully determined by the seed; feature z-scoring is fitted
on training rows only, with population standard deviation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RATING_MIN, RATING_MAX = 1, 7
LOYAL_THRESHOLD = 6


class DataError(Exception):
    """Malformed input data; message names the offending row or column."""


@dataclass(frozen=True)
class Record:
    id: str
    text: str
    features: np.ndarray
    rating: int


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "schema", tuple(self.schema))
        seen: set[str] = set()
        for i, rec in enumerate(self.records, start=1):
            if not (RATING_MIN <= rec.rating <= RATING_MAX):
                raise DataError(f"row {i}: rating {rec.rating} outside {RATING_MIN}..{RATING_MAX}")
            if len(rec.features) != len(self.schema):
                raise DataError(
                    f"row {i}: {len(rec.features)} features, schema has {len(self.schema)}"
                )
            if rec.id in seen:
                raise DataError(f"row {i}: duplicate id {rec.id!r}")
            seen.add(rec.id)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def feature_matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, len(self.schema)))
        return np.stack([r.features for r in self.records]).astype(np.float64)

    def labels(self) -> np.ndarray:
        return np.array([binarize_rating(r.rating) for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-scoring statistics; constant features map to 0."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        safe_std = np.where(self.constant, 1.0, self.std)
        out = (x - self.mean) / safe_std
        if out.ndim == 1:
            out[self.constant] = 0.0
        else:
            out[:, self.constant] = 0.0
        return out


@dataclass(frozen=True)
class LabeledSplit:
    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    labels: np.ndarray
    normalizer: Normalizer

    def __post_init__(self) -> None:
        train, val, test = set(self.train), set(self.validation), set(self.test)
        if train & test or train & val or val & test:
            raise DataError("split partitions overlap")
        if len(train) + len(val) + len(test) != len(self.labels):
            raise DataError("split partitions do not cover the dataset")


def binarize_rating(rating: int) -> int:
    """Loyalty label: 1 iff the 7-point rating is 6 or 7."""
    if not (RATING_MIN <= rating <= RATING_MAX):
        raise ValueError(f"rating {rating} outside {RATING_MIN}..{RATING_MAX}")
    return 1 if rating >= LOYAL_THRESHOLD else 0


def load_csv(path: str | Path, schema: list[str] | tuple[str, ...]) -> Dataset:
    """Parse the dataset CSV; any malformed cell aborts naming its row.

    Header names are matched case-sensitively and column order is free.
    Quoted fields may contain commas and newlines.
    """
    schema = tuple(schema)
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = ["id", "text", "rating", *schema]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        records: list[Record] = []
        seen: set[str] = set()
        for i, row in enumerate(reader, start=1):
            id_ = row.get("id")
            if id_ is None or id_ == "":
                raise DataError(f"row {i}: empty id")
            if id_ in seen:
                raise DataError(f"row {i}: duplicate id {id_!r}")
            seen.add(id_)
            raw_rating = (row.get("rating") or "").strip()
            try:
                rating = int(raw_rating)
            except ValueError:
                raise DataError(f"row {i}: malformed rating {raw_rating!r}") from None
            if not (RATING_MIN <= rating <= RATING_MAX):
                raise DataError(f"row {i}: rating {rating} outside {RATING_MIN}..{RATING_MAX}")
            values = np.empty(len(schema), dtype=np.float64)
            for j, col in enumerate(schema):
                cell = row.get(col)
                try:
                    values[j] = float(cell)  # type: ignore[arg-type]
                except (TypeError, ValueError):
                    raise DataError(f"row {i}: non-numeric value {cell!r} in column {col!r}") from None
            records.append(Record(id=id_, text=row.get("text") or "", features=values, rating=rating))
    return Dataset(records=tuple(records), schema=schema)


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Inverse of :func:`load_csv`; feature floats keep full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "rating", *dataset.schema])
        for rec in dataset.records:
            writer.writerow([rec.id, rec.text, rec.rating,
                             *[repr(float(v)) for v in rec.features]])


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _quotas(counts: list[int], total: int, overall: int) -> list[int]:
    """Largest-remainder apportionment of ``total`` across classes.

    Keeps every per-class quota within one record of the exact
    proportional share.
    """
    exact = [total * c / overall for c in counts]
    quotas = [int(np.floor(e)) for e in exact]
    short = total - sum(quotas)
    remainders = sorted(range(len(counts)), key=lambda k: (-(exact[k] - quotas[k]), k))
    for k in remainders[:short]:
        quotas[k] += 1
    return quotas


def split_dataset(dataset: Dataset, test_fraction: float = 0.25,
                  val_fraction_of_train: float = 0.15, seed: int = 0,
                  stratified: bool = True) -> LabeledSplit:
    """Label-stratified train/validation/test partition, seed-deterministic.

    Test size is round(test_fraction * N); the validation share is then
    carved out of the remaining training pool.  The normaliser is fitted
    on the final training rows only.
    """
    if not (0.0 < test_fraction < 1.0):
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not (0.0 <= val_fraction_of_train < 1.0):
        raise DataError(f"val_fraction_of_train must be in [0, 1), got {val_fraction_of_train}")
    labels = dataset.labels()
    n = dataset.n
    rng = np.random.default_rng(seed)
    n_test = _round_half_up(test_fraction * n)

    if stratified:
        class_indices = [np.flatnonzero(labels == c) for c in (0, 1)]
        counts = [len(ix) for ix in class_indices]
        if min(counts) < 2:
            raise DataError(
                f"cannot stratify: class sizes {counts}; every class needs at least 2 records"
            )
        test_quotas = _quotas(counts, n_test, n)
        test_ix: list[int] = []
        pool_by_class: list[np.ndarray] = []
        for ix, quota in zip(class_indices, test_quotas):
            perm = rng.permutation(ix)
            test_ix.extend(int(v) for v in perm[:quota])
            pool_by_class.append(perm[quota:])
        pool_size = sum(len(p) for p in pool_by_class)
        n_val = _round_half_up(val_fraction_of_train * pool_size)
        val_quotas = _quotas([len(p) for p in pool_by_class], n_val, pool_size) if pool_size else [0, 0]
        val_ix: list[int] = []
        train_ix: list[int] = []
        for pool, quota in zip(pool_by_class, val_quotas):
            val_ix.extend(int(v) for v in pool[:quota])
            train_ix.extend(int(v) for v in pool[quota:])
    else:
        perm = rng.permutation(n)
        test_ix = [int(v) for v in perm[:n_test]]
        pool = perm[n_test:]
        n_val = _round_half_up(val_fraction_of_train * len(pool))
        val_ix = [int(v) for v in pool[:n_val]]
        train_ix = [int(v) for v in pool[n_val:]]

    train_ix.sort()
    val_ix.sort()
    test_ix.sort()
    if not train_ix:
        raise DataError("split produced an empty training set")
    normalizer = fit_normalizer(dataset, train_ix)
    return LabeledSplit(train=tuple(train_ix), validation=tuple(val_ix),
                        test=tuple(test_ix), labels=labels, normalizer=normalizer)


def fit_normalizer(dataset: Dataset, train_indices) -> Normalizer:
    """Per-feature mean/population-std over the training rows only."""
    idx = list(train_indices)
    if not idx:
        raise DataError("cannot fit a normalizer on an empty training set")
    x = dataset.feature_matrix()[idx]
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population (ddof=0)
    constant = std == 0.0
    return Normalizer(mean=mean, std=std, constant=constant)
