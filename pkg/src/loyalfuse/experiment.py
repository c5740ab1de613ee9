"""Grid-search orchestration over encoder x optimizer x modality.

A grid cell is one training run.  Text-consuming modalities multiply over
the encoder axis; the profile-only modality ignores it.  Every cell is
fully determined by its seed (split, weight init, shuffling all derive
from it), and aggregation happens in enumeration order, so any worker
count yields a byte-identical report.

Encoder axis grammar (one string per encoder):

    ``stub``                  hash-based placeholder, seed 0, 200 dims
    ``stub:SEED``             explicit seed
    ``stub:SEED:DIM``         explicit seed and width
    ``service:MODEL``         HTTP embedding service checkpoint
    ``file:PATH``             pre-computed embedding file

Cell failures (unreachable service, missing file, diverged run) are
recorded on the cell and excluded from group averages; they never abort
the rest of the grid.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .data import Dataset, LabeledSplit, load_csv, split_dataset
from .embeddings import EmbeddingConfig, EmbeddingMatrix, embed_texts
from .network import MODALITIES, NetworkSpec
from .optim import OPTIMIZERS
from .preprocess import PreprocessConfig, clean_text
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig, train

ENDPOINT_ENV = "LOYALFUSE_EMBED_ENDPOINT"


class ExperimentError(Exception):
    """Grid construction or execution failure."""


class ConfigError(ExperimentError):
    """Malformed experiment config (a usage error, not a data error)."""


@dataclass(frozen=True)
class EncoderSpec:
    raw: str
    kind: str
    seed: int = 0
    d_text: int = 200
    model: str | None = None
    path: str | None = None


def parse_encoder(text: str) -> EncoderSpec:
    """Parse one encoder-axis string; see the module grammar."""
    head, _, rest = text.partition(":")
    if head == "stub":
        seed, d_text = 0, 200
        if rest:
            fields = rest.split(":")
            if len(fields) > 2:
                raise ConfigError(f"bad stub encoder {text!r}: expected stub[:SEED[:DIM]]")
            try:
                seed = int(fields[0])
                if len(fields) == 2:
                    d_text = int(fields[1])
            except ValueError:
                raise ConfigError(f"bad stub encoder {text!r}: SEED and DIM must be integers") from None
            if d_text <= 0:
                raise ConfigError(f"bad stub encoder {text!r}: DIM must be positive")
        return EncoderSpec(raw=text, kind="stub", seed=seed, d_text=d_text)
    if head == "service":
        if not rest:
            raise ConfigError(f"bad service encoder {text!r}: expected service:MODEL")
        return EncoderSpec(raw=text, kind="service", model=rest)
    if head == "file":
        if not rest:
            raise ConfigError(f"bad file encoder {text!r}: expected file:PATH")
        return EncoderSpec(raw=text, kind="file", path=rest)
    raise ConfigError(f"unknown encoder kind {head!r} in {text!r} "
                      "(expected stub, service, or file)")


def resolve_embeddings(encoder: str, dataset: Dataset, len_max: int = 200,
                       endpoint: str | None = None) -> EmbeddingMatrix:
    """Clean every text and embed it with the named encoder."""
    enc = parse_encoder(encoder)
    pre = PreprocessConfig(len_max=len_max)
    texts = [clean_text(t, pre) for t in dataset.texts]
    ids = list(dataset.ids)
    if enc.kind == "stub":
        cfg = EmbeddingConfig(provider="stub", d_text=enc.d_text,
                              len_max=len_max, seed=enc.seed)
        return embed_texts(texts, ids, cfg)
    if enc.kind == "service":
        cfg = EmbeddingConfig(provider="service", model_name=enc.model, len_max=len_max)
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        return embed_texts(texts, ids, cfg, endpoint=endpoint)
    cfg = EmbeddingConfig(provider="file", len_max=len_max)
    return embed_texts(texts, ids, cfg, emb_path=enc.path)


@dataclass(frozen=True)
class GridSpec:
    encoders: tuple[str, ...]
    optimizers: tuple[str, ...]
    modalities: tuple[str, ...]
    seeds: tuple[int, ...]
    train: TrainConfig = TrainConfig()

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoders", tuple(self.encoders))
        object.__setattr__(self, "optimizers", tuple(self.optimizers))
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for axis, values in (("optimizers", self.optimizers),
                             ("modalities", self.modalities), ("seeds", self.seeds)):
            if not values:
                raise ConfigError(f"empty {axis} axis")
        for opt in self.optimizers:
            if opt not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {opt!r}; expected one of {OPTIMIZERS}")
        for mod in self.modalities:
            if mod not in MODALITIES:
                raise ConfigError(f"unknown modality {mod!r}; expected one of {MODALITIES}")
        if any(m in ("Both", "X1") for m in self.modalities) and not self.encoders:
            raise ConfigError("empty encoders axis with a text-consuming modality")
        for axis, values in (("encoders", self.encoders), ("optimizers", self.optimizers),
                             ("modalities", self.modalities), ("seeds", self.seeds)):
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate entries on the {axis} axis")
        for enc in self.encoders:
            parse_encoder(enc)


@dataclass(frozen=True)
class GridCell:
    index: int
    modality: str
    encoder: str | None  # None when the modality ignores text
    optimizer: str
    seed: int

    @property
    def cell_id(self) -> str:
        return f"{self.modality}|{self.encoder or 'none'}|{self.optimizer}|s{self.seed}"

    @property
    def run_dir(self) -> str:
        safe = re.sub(r"[^A-Za-z0-9._-]+", "_", self.cell_id)
        return f"cell{self.index:03d}_{safe}"


def enumerate_cells(spec: GridSpec) -> list[GridCell]:
    """Modality (caller order), then encoder, optimizer, seed."""
    cells: list[GridCell] = []
    for modality in spec.modalities:
        encoders = spec.encoders if modality in ("Both", "X1") else (None,)
        for encoder in encoders:
            for optimizer in spec.optimizers:
                for seed in spec.seeds:
                    cells.append(GridCell(index=len(cells), modality=modality,
                                          encoder=encoder, optimizer=optimizer, seed=seed))
    return cells


@dataclass(frozen=True)
class CellResult:
    cell_id: str
    modality: str
    encoder: str | None
    optimizer: str
    seed: int
    ok: bool
    error: str | None = None
    train_acc: float | None = None
    test_acc: float | None = None
    best_epoch: int | None = None
    epochs_run: int | None = None

    def to_dict(self) -> dict:
        return {"cell_id": self.cell_id, "modality": self.modality,
                "encoder": self.encoder, "optimizer": self.optimizer,
                "seed": self.seed, "ok": self.ok, "error": self.error,
                "train_acc": self.train_acc, "test_acc": self.test_acc,
                "best_epoch": self.best_epoch, "epochs_run": self.epochs_run}


GROUP_FIELDS = ("train_acc", "test_acc", "epochs")


@dataclass(frozen=True)
class GridReport:
    cells: tuple[CellResult, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def ok_cells(self) -> list[CellResult]:
        return [c for c in self.cells if c.ok]

    @property
    def failed_cells(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def best_per_modality(self) -> dict[str, CellResult]:
        """Highest test accuracy; ties to fewer epochs, then cell id."""
        best: dict[str, CellResult] = {}
        for cell in self.ok_cells:
            key = (-cell.test_acc, cell.best_epoch, cell.cell_id)
            cur = best.get(cell.modality)
            if cur is None or key < (-cur.test_acc, cur.best_epoch, cur.cell_id):
                best[cell.modality] = cell
        return best

    def _means_by(self, attr: str) -> dict[str, dict[str, float]]:
        groups: dict[str, list[CellResult]] = {}
        for cell in self.ok_cells:
            groups.setdefault(getattr(cell, attr), []).append(cell)
        out: dict[str, dict[str, float]] = {}
        for key, members in groups.items():
            n = len(members)
            out[key] = {
                "train_acc": sum(c.train_acc for c in members) / n,
                "test_acc": sum(c.test_acc for c in members) / n,
                "epochs": sum(c.best_epoch for c in members) / n,
                "cells": n,
            }
        return out

    def means_by_optimizer(self) -> dict[str, dict[str, float]]:
        return self._means_by("optimizer")

    def means_by_modality(self) -> dict[str, dict[str, float]]:
        return self._means_by("modality")

    def to_json(self) -> str:
        return json.dumps({"cells": [c.to_dict() for c in self.cells]},
                          sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GridReport":
        try:
            payload = json.loads(text)
            cells = tuple(CellResult(**c) for c in payload["cells"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ExperimentError(f"malformed grid report JSON: {exc}") from exc
        return cls(cells=cells)


def run_grid(grid: GridSpec, dataset: Dataset, *, workers: int = 1,
             out_dir: str | Path | None = None, endpoint: str | None = None,
             test_fraction: float = 0.25, val_fraction_of_train: float = 0.15,
             len_max: int = 200) -> GridReport:
    """Execute every cell; failures are recorded per cell, never raised.

    Splits (one per seed) and embeddings (one per encoder) are shared
    across cells and computed up front, so workers only ever read them.
    """
    if workers < 1:
        raise ExperimentError(f"workers must be >= 1, got {workers}")
    cells = enumerate_cells(grid)
    out_path = Path(out_dir) if out_dir is not None else None

    splits: dict[int, LabeledSplit | Exception] = {}
    for seed in grid.seeds:
        try:
            splits[seed] = split_dataset(dataset, test_fraction=test_fraction,
                                         val_fraction_of_train=val_fraction_of_train,
                                         seed=seed)
        except Exception as exc:  # recorded on each dependent cell
            splits[seed] = exc

    matrices: dict[str, EmbeddingMatrix | Exception] = {}
    for encoder in {c.encoder for c in cells if c.encoder is not None}:
        try:
            matrices[encoder] = resolve_embeddings(encoder, dataset,
                                                   len_max=len_max, endpoint=endpoint)
        except Exception as exc:
            matrices[encoder] = exc

    def run_cell(cell: GridCell) -> CellResult:
        base = {"cell_id": cell.cell_id, "modality": cell.modality,
                "encoder": cell.encoder, "optimizer": cell.optimizer, "seed": cell.seed}
        try:
            split = splits[cell.seed]
            if isinstance(split, Exception):
                raise split
            embeddings = None
            if cell.encoder is not None:
                embeddings = matrices[cell.encoder]
                if isinstance(embeddings, Exception):
                    raise embeddings
            spec = NetworkSpec(
                modality=cell.modality,
                d_text=embeddings.d_text if embeddings is not None else 0,
                j_in=len(dataset.schema) if cell.modality in ("Both", "X2") else 0)
            cfg = replace(grid.train, seed=cell.seed)
            log_path = (out_path / "runs" / cell.run_dir / "epochs.jsonl"
                        if out_path is not None else None)
            result = train(spec, dataset, split, embeddings, cell.optimizer, cfg,
                           log_path=log_path)
            return CellResult(ok=True, train_acc=result.train_acc,
                              test_acc=result.test_acc, best_epoch=result.best_epoch,
                              epochs_run=result.epochs_run, **base)
        except Exception as exc:
            return CellResult(ok=False, error=f"{type(exc).__name__}: {exc}", **base)

    if workers == 1:
        results = [run_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    return GridReport(cells=tuple(results))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment config file (YAML)."""

    grid: GridSpec
    dataset_path: str | None = None
    schema: tuple[str, ...] = ()
    synthetic: SyntheticSpec | None = None
    test_fraction: float = 0.25
    val_fraction_of_train: float = 0.15
    len_max: int = 200
    endpoint: str | None = None


_TOP_KEYS = {"dataset", "schema", "synthetic", "encoders", "optimizers", "modalities",
             "seeds", "train", "split", "len_max", "endpoint"}


def _as_mapping(value, name: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    if ("dataset" in raw) == ("synthetic" in raw):
        raise ConfigError("config needs exactly one of 'dataset' or 'synthetic'")
    dataset_path = raw.get("dataset")
    schema = tuple(raw.get("schema") or ())
    if dataset_path is not None and not schema:
        raise ConfigError("'dataset' requires a 'schema' list of feature columns")
    synthetic = None
    if "synthetic" in raw:
        try:
            synthetic = SyntheticSpec(**_as_mapping(raw["synthetic"], "synthetic"))
        except TypeError as exc:
            raise ConfigError(f"bad 'synthetic' section: {exc}") from exc

    try:
        train_cfg = TrainConfig(**_as_mapping(raw.get("train"), "train"))
    except TypeError as exc:
        raise ConfigError(f"bad 'train' section: {exc}") from exc
    grid = GridSpec(encoders=tuple(raw.get("encoders") or ()),
                    optimizers=tuple(raw.get("optimizers") or ()),
                    modalities=tuple(raw.get("modalities") or ()),
                    seeds=tuple(raw.get("seeds") or ()),
                    train=train_cfg)

    split = _as_mapping(raw.get("split"), "split")
    unknown = set(split) - {"test_fraction", "val_fraction_of_train"}
    if unknown:
        raise ConfigError(f"unknown split key(s): {', '.join(sorted(unknown))}")
    len_max = raw.get("len_max", 200)
    if not isinstance(len_max, int) or not 1 <= len_max <= 512:
        raise ConfigError(f"len_max must be an integer in 1..512, got {len_max!r}")

    return ExperimentConfig(
        grid=grid, dataset_path=dataset_path, schema=schema, synthetic=synthetic,
        test_fraction=float(split.get("test_fraction", 0.25)),
        val_fraction_of_train=float(split.get("val_fraction_of_train", 0.15)),
        len_max=len_max, endpoint=raw.get("endpoint"))


def load_experiment_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic).dataset
    return load_csv(cfg.dataset_path, cfg.schema)


def run_experiment(cfg: ExperimentConfig, *, workers: int = 1,
                   out_dir: str | Path | None = None,
                   endpoint: str | None = None) -> GridReport:
    dataset = load_experiment_dataset(cfg)
    return run_grid(cfg.grid, dataset, workers=workers, out_dir=out_dir,
                    endpoint=endpoint or cfg.endpoint,
                    test_fraction=cfg.test_fraction,
                    val_fraction_of_train=cfg.val_fraction_of_train,
                    len_max=cfg.len_max)
