"""Render a GridReport as markdown and round-trippable CSV files.

Result I lists the best run per (encoder, modality): the run with the
highest test accuracy, ties to fewer epochs then cell id.  Rows are
encoders in grid order plus a ``None`` row for the profile-only
modality; absent combinations render as ``-``.  Bold marks the best
train accuracy, the best test accuracy, and the lowest epoch count
across the whole table (every cell attaining the optimum is bolded).

Result II gives arithmetic means over completed cells, grouped by
optimizer and by modality.  Failed cells are excluded from every table
and counted in a footnote.

CSV values are written with ``repr`` so parsing them back yields
bit-identical floats.  The markdown uses fixed precision (three decimals
for accuracies, one for mean epochs).
"""

from __future__ import annotations

import csv
from pathlib import Path

from .experiment import CellResult, GridReport

MODALITY_ORDER = ("Both", "X1", "X2")
NO_ENCODER_LABEL = "None"


def _encoder_order(report: GridReport) -> list[str | None]:
    seen: list[str | None] = []
    for cell in report.cells:
        if cell.encoder not in seen:
            seen.append(cell.encoder)
    if None in seen:  # profile-only row renders last, like the tables it mimics
        seen.remove(None)
        seen.append(None)
    return seen


def best_per_combo(report: GridReport) -> dict[tuple[str | None, str], CellResult]:
    """Best completed run per (encoder, modality) key."""
    best: dict[tuple[str | None, str], CellResult] = {}
    for cell in report.ok_cells:
        key = (cell.encoder, cell.modality)
        rank = (-cell.test_acc, cell.best_epoch, cell.cell_id)
        cur = best.get(key)
        if cur is None or rank < (-cur.test_acc, cur.best_epoch, cur.cell_id):
            best[key] = cell
    return best


def result1_rows(report: GridReport) -> list[dict]:
    """One dict per table row, in render order."""
    combos = best_per_combo(report)
    rows = []
    for encoder in _encoder_order(report):
        row: dict = {"encoder": NO_ENCODER_LABEL if encoder is None else encoder}
        for modality in MODALITY_ORDER:
            cell = combos.get((encoder, modality))
            row[modality] = cell
        rows.append(row)
    return rows


def _fmt_acc(value: float) -> str:
    return f"{value:.3f}"


def _bold(text: str) -> str:
    return f"**{text}**"


def render_markdown(report: GridReport) -> str:
    rows = result1_rows(report)
    present = [(row, m, row[m]) for row in rows for m in MODALITY_ORDER
               if row[m] is not None]
    best_train = max((c.train_acc for _, _, c in present), default=None)
    best_test = max((c.test_acc for _, _, c in present), default=None)
    best_epochs = min((c.best_epoch for _, _, c in present), default=None)

    lines = ["# Grid Search Report", "",
             "## Result I (best run per encoder and modality)", ""]
    header = ["Encoder"]
    for group in ("Train", "Test", "Epochs"):
        header += [f"{group} {m}" for m in MODALITY_ORDER]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for row in rows:
        cells = [str(row["encoder"])]
        for group, fmt, best in (("train_acc", _fmt_acc, best_train),
                                 ("test_acc", _fmt_acc, best_test),
                                 ("best_epoch", str, best_epochs)):
            for modality in MODALITY_ORDER:
                cell = row[modality]
                if cell is None:
                    cells.append("-")
                    continue
                value = getattr(cell, group)
                text = fmt(value)
                cells.append(_bold(text) if value == best else text)
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", "Bold marks the best train accuracy, best test accuracy, and"
                  " lowest epoch count in the table.", ""]

    lines += ["## Result II (group averages)", ""]
    for title, means, key_order in (
            ("By optimizer", report.means_by_optimizer(), None),
            ("By modality", report.means_by_modality(), MODALITY_ORDER)):
        keys = [k for k in (key_order or sorted(means)) if k in means]
        best_train = max((means[k]["train_acc"] for k in keys), default=None)
        best_test = max((means[k]["test_acc"] for k in keys), default=None)
        best_epochs = min((means[k]["epochs"] for k in keys), default=None)
        lines += [f"### {title}", "",
                  "| Group | Train | Test | Epochs | Cells |", "|---|---|---|---|---|"]
        for key in keys:
            m = means[key]
            parts = [key]
            for field, fmt, best in (("train_acc", _fmt_acc, best_train),
                                     ("test_acc", _fmt_acc, best_test),
                                     ("epochs", lambda v: f"{v:.1f}", best_epochs)):
                text = fmt(m[field])
                parts.append(_bold(text) if m[field] == best else text)
            parts.append(str(m["cells"]))
            lines.append("| " + " | ".join(parts) + " |")
        lines.append("")

    failed = report.failed_cells
    if failed:
        lines += ["## Failures", "",
                  f"{len(failed)} of {len(report.cells)} cells failed and are"
                  " excluded from all tables:", ""]
        lines += [f"- `{c.cell_id}`: {c.error}" for c in failed]
        lines.append("")
    return "\n".join(lines)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else
                             ("" if v is None else str(v)) for v in row])


def write_result1_csv(report: GridReport, path: str | Path) -> None:
    combos = best_per_combo(report)
    rows = []
    for encoder in _encoder_order(report):
        for modality in MODALITY_ORDER:
            cell = combos.get((encoder, modality))
            if cell is None:
                continue
            rows.append([NO_ENCODER_LABEL if encoder is None else encoder, modality,
                         cell.train_acc, cell.test_acc, cell.best_epoch,
                         cell.epochs_run, cell.optimizer, cell.seed, cell.cell_id])
    _write_csv(Path(path),
               ["encoder", "modality", "train_acc", "test_acc", "best_epoch",
                "epochs_run", "optimizer", "seed", "cell_id"], rows)


def _write_means_csv(means: dict[str, dict[str, float]], key_name: str,
                     path: str | Path, key_order=None) -> None:
    keys = [k for k in (key_order or sorted(means)) if k in means]
    rows = [[k, means[k]["train_acc"], means[k]["test_acc"], means[k]["epochs"],
             int(means[k]["cells"])] for k in keys]
    _write_csv(Path(path), [key_name, "mean_train_acc", "mean_test_acc",
                            "mean_epochs", "cells"], rows)


def summary_lines(report: GridReport) -> list[str]:
    """Human-readable best-per-modality digest for the CLI."""
    out = []
    best = report.best_per_modality()
    for modality in MODALITY_ORDER:
        cell = best.get(modality)
        if cell is None:
            continue
        out.append(f"best {modality}: test_acc={cell.test_acc:.3f} "
                   f"train_acc={cell.train_acc:.3f} epochs={cell.best_epoch} "
                   f"({cell.cell_id})")
    if report.failed_cells:
        out.append(f"failed cells: {len(report.failed_cells)} of {len(report.cells)}")
    return out


def write_reports(report: GridReport, out_dir: str | Path) -> list[Path]:
    """Emit report.md, the three CSVs, and the reloadable JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    md = out / "report.md"
    md.write_text(render_markdown(report), encoding="utf-8")
    written.append(md)
    r1 = out / "result1.csv"
    write_result1_csv(report, r1)
    written.append(r1)
    r2o = out / "result2_optimizer.csv"
    _write_means_csv(report.means_by_optimizer(), "optimizer", r2o)
    written.append(r2o)
    r2m = out / "result2_modality.csv"
    _write_means_csv(report.means_by_modality(), "modality", r2m,
                     key_order=MODALITY_ORDER)
    written.append(r2m)
    js = out / "gridreport.json"
    js.write_text(report.to_json(), encoding="utf-8")
    written.append(js)
    return written
