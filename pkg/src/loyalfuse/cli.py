"""Command-line entry point for the batch pipeline.

Exit codes: 0 success, 1 usage error (bad flags or config), 2 data error
(malformed input files), 3 runtime failure (service unreachable, run
diverged, write failure).  The default embedding-service endpoint can be
set via the ``LOYALFUSE_EMBED_ENDPOINT`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

from .data import DataError, save_csv, split_dataset
from .embeddings import (EmbeddingConfig, EmbeddingError, EmbeddingFileError,
                         embed_texts, save_embeddings)
from .experiment import (ENDPOINT_ENV, ConfigError, ExperimentError, GridReport,
                         load_config, load_experiment_dataset, resolve_embeddings,
                         run_experiment)
from .network import NetworkSpec, save_checkpoint
from .preprocess import MAX_TOKEN_CAP, PreprocessConfig, clean_text
from .report import summary_lines, write_reports
from .synthetic import SyntheticError, SyntheticSpec, generate_synthetic
from .training import train


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


def _pre_config(len_max: int) -> PreprocessConfig:
    if not 1 <= len_max <= MAX_TOKEN_CAP:
        raise UsageError(f"--len-max must be in 1..{MAX_TOKEN_CAP}, got {len_max}")
    return PreprocessConfig(len_max=len_max)


def _read_table(path: str) -> tuple[list[str], list[dict]]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    try:
        with open(p, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = list(reader.fieldnames or [])
            rows = list(reader)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {p}: {exc}") from exc
    return fields, rows


def _cmd_preprocess(args) -> int:
    cfg = _pre_config(args.len_max)
    fields, rows = _read_table(args.infile)
    if "text" not in fields:
        raise DataError(f"{args.infile}: missing 'text' column")
    for i, row in enumerate(rows, start=1):
        if row.get("text") is None or None in row or None in row.values():
            raise DataError(f"{args.infile}: row {i} is malformed")
        row["text"] = clean_text(row["text"], cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_embed(args) -> int:
    cfg_pre = _pre_config(args.len_max)
    fields, rows = _read_table(args.infile)
    for col in ("id", "text"):
        if col not in fields:
            raise DataError(f"{args.infile}: missing '{col}' column")
    ids, texts = [], []
    for i, row in enumerate(rows, start=1):
        if not row.get("id") or row.get("text") is None:
            raise DataError(f"{args.infile}: row {i} is malformed")
        ids.append(row["id"])
        texts.append(clean_text(row["text"], cfg_pre))
    if len(set(ids)) != len(ids):
        raise DataError(f"{args.infile}: duplicate ids")

    if args.provider == "service" and not args.model:
        raise UsageError("--provider service requires --model")
    if args.provider == "service" and not args.endpoint:
        raise UsageError(f"--provider service requires --endpoint or ${ENDPOINT_ENV}")
    if args.provider == "file" and not args.emb_in:
        raise UsageError("--provider file requires --emb-in")
    try:
        cfg = EmbeddingConfig(provider=args.provider, d_text=args.d_text,
                              model_name=args.model, len_max=args.len_max,
                              seed=args.seed)
    except EmbeddingError as exc:  # flag-level validation, e.g. unknown model
        raise UsageError(str(exc)) from exc

    matrix = embed_texts(texts, ids, cfg, endpoint=args.endpoint, emb_path=args.emb_in)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_embeddings(matrix, out)
    print(f"wrote {matrix.n} x {matrix.d_text} embeddings to {out}")
    print(f"checksum {matrix.checksum()}")
    return 0


def _cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec(n=args.n, j_in=args.j_in, a=args.a, b=args.b,
                             noise=args.noise, seed=args.seed)
    except SyntheticError as exc:
        raise UsageError(str(exc)) from exc
    result = generate_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(result.dataset, out)
    print(f"wrote {result.dataset.n} records to {out}")
    print(f"label_prior={result.label_prior:.4f}")
    print("bayes_accuracy " + " ".join(
        f"{k}={v:.4f}" for k, v in result.bayes_accuracy.items()))
    return 0


def _single(axis_name: str, flag_value, config_values) -> str:
    if flag_value is not None:
        return flag_value
    if len(config_values) == 1:
        return config_values[0]
    raise UsageError(f"--{axis_name} is required when the config lists "
                     f"{len(config_values)} {axis_name} values")


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    modality = _single("modality", args.modality, cfg.grid.modalities)
    optimizer = _single("optimizer", args.optimizer, cfg.grid.optimizers)
    seed = args.seed if args.seed is not None else cfg.grid.seeds[0]
    dataset = load_experiment_dataset(cfg)
    split = split_dataset(dataset, test_fraction=cfg.test_fraction,
                          val_fraction_of_train=cfg.val_fraction_of_train, seed=seed)
    endpoint = args.endpoint or cfg.endpoint
    embeddings = None
    if modality in ("Both", "X1"):
        encoder = _single("encoder", args.encoder, cfg.grid.encoders)
        embeddings = resolve_embeddings(encoder, dataset, len_max=cfg.len_max,
                                        endpoint=endpoint)
    spec = NetworkSpec(modality=modality,
                       d_text=embeddings.d_text if embeddings is not None else 0,
                       j_in=len(dataset.schema) if modality in ("Both", "X2") else 0)
    out = Path(args.out)
    result = train(spec, dataset, split, embeddings, optimizer,
                   replace(cfg.grid.train, seed=seed),
                   log_path=out / "epochs.jsonl")
    save_checkpoint(result.best_params, out / "model.mlp")
    print(f"best_epoch={result.best_epoch} epochs_run={result.epochs_run} "
          f"train_acc={result.train_acc:.3f} test_acc={result.test_acc:.3f}")
    return 0


def _cmd_grid(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg, workers=args.workers, out_dir=args.out,
                            endpoint=args.endpoint)
    write_reports(report, args.out)
    for line in summary_lines(report):
        print(line)
    if not report.ok_cells:
        print("error: all grid cells failed", file=sys.stderr)
        return 3
    return 0


def _cmd_report(args) -> int:
    path = Path(args.infile)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        report = GridReport.from_json(path.read_text(encoding="utf-8"))
    except ExperimentError as exc:
        raise DataError(str(exc)) from exc
    for written in write_reports(report, args.out):
        print(f"wrote {written}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loyalfuse",
                     description="Binary loyalty classification from review text "
                                 "and profile features.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean the text column of a CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--len-max", type=int, default=200)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("embed", help="embed the text column into a binary file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--provider", choices=("stub", "service", "file"), required=True)
    p.add_argument("--endpoint", default=os.environ.get(ENDPOINT_ENV))
    p.add_argument("--model")
    p.add_argument("--d-text", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--len-max", type=int, default=200)
    p.add_argument("--emb-in", help="existing embedding file (provider 'file')")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("synth", help="generate a synthetic review dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--j-in", type=int, default=5)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="run a single training cell from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--modality", choices=("Both", "X1", "X2"))
    p.add_argument("--encoder")
    p.add_argument("--optimizer", choices=("adam", "adamax", "nadam"))
    p.add_argument("--seed", type=int)
    p.add_argument("--endpoint", default=os.environ.get(ENDPOINT_ENV))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("grid", help="run the full grid search")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--endpoint", default=os.environ.get(ENDPOINT_ENV))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("report", help="re-emit report files from gridreport.json")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, EmbeddingFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure contract: exit 3
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
