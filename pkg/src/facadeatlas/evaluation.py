"""Review sampling and regression metrics against manual ground truth."""

from __future__ import annotations

import csv
import math
import os
import random
from dataclasses import dataclass

from .dataset import Dataset, DatasetRow
from .errors import EmptyInput, LengthMismatch, NoMatchedPairs, SampleTooLarge
from .indicators import Count, CountMulti, Numeric, ParseStatus, Percent

EVAL_VARIABLES = ("floor_to_floor_height", "wwr", "num_vertices", "tree_count")


@dataclass(frozen=True)
class BenchmarkEntry:
    building_id: str
    variable_key: str
    ground_truth: float

    def __post_init__(self):
        if self.variable_key not in EVAL_VARIABLES:
            raise ValueError(f"unknown evaluation variable: {self.variable_key}")
        if not math.isfinite(self.ground_truth):
            raise ValueError("ground truth must be finite")


def predicted_value(row: DatasetRow, variable_key: str) -> float | None:
    """Model prediction for one evaluation variable, None when unusable."""
    if variable_key == "tree_count":
        entry = row.indicators["greening_conditions"]
        if entry.status is not ParseStatus.PARSED or not isinstance(entry.value, CountMulti):
            return None
        count = entry.value.as_dict().get("trees")
        return float(count.value) if isinstance(count, Count) else None
    entry = row.indicators[variable_key]
    if entry.status is not ParseStatus.PARSED:
        return None
    if variable_key == "floor_to_floor_height" and isinstance(entry.value, Numeric):
        return entry.value.value
    if variable_key == "wwr" and isinstance(entry.value, Percent):
        return entry.value.fraction
    if variable_key == "num_vertices" and isinstance(entry.value, Count):
        return float(entry.value.value)
    return None


# ---------------------------------------------------------------------------
# Review sheet


def sample_for_review(dataset: Dataset, n: int = 200, seed: int = 0) -> list[dict[str, str]]:
    """Uniform, seed-deterministic review sample as sheet rows.

    Columns: building_id, image_path, then pred_<var>/truth_<var> per
    evaluation variable, truth columns left empty for the reviewer.
    """
    if n > len(dataset.rows):
        raise SampleTooLarge(f"requested {n} of {len(dataset.rows)} rows")
    rows = sorted(dataset.rows, key=lambda r: r.building_id)
    if n < len(rows):
        rows = sorted(random.Random(seed).sample(rows, n), key=lambda r: r.building_id)
    sheet = []
    for row in rows:
        record = {"building_id": row.building_id, "image_path": row.image_path}
        for var in EVAL_VARIABLES:
            pred = predicted_value(row, var)
            record[f"pred_{var}"] = "" if pred is None else str(pred)
            record[f"truth_{var}"] = ""
        sheet.append(record)
    return sheet


def review_sheet_columns() -> list[str]:
    cols = ["building_id", "image_path"]
    for var in EVAL_VARIABLES:
        cols += [f"pred_{var}", f"truth_{var}"]
    return cols


def write_review_sheet(sheet: list[dict[str, str]], path: str) -> None:
    cols = review_sheet_columns()
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(sheet)
    os.replace(tmp, path)


def read_benchmark_csv(path: str) -> list[BenchmarkEntry]:
    """Ground-truth CSV with required header building_id,variable_key,ground_truth."""
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"building_id", "variable_key", "ground_truth"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"benchmark CSV must have columns {sorted(required)}")
        for record in reader:
            entries.append(BenchmarkEntry(record["building_id"], record["variable_key"],
                                          float(record["ground_truth"])))
    return entries


# ---------------------------------------------------------------------------
# Metrics


def _check_pairs(pred: list[float], truth: list[float]) -> None:
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    if not pred:
        raise EmptyInput("metrics need at least one pair")


def mae(pred: list[float], truth: list[float]) -> float:
    _check_pairs(pred, truth)
    return math.fsum(abs(p - t) for p, t in zip(pred, truth)) / len(pred)


def rmse(pred: list[float], truth: list[float]) -> float:
    _check_pairs(pred, truth)
    return math.sqrt(math.fsum((p - t) ** 2 for p, t in zip(pred, truth)) / len(pred))


def r_squared(pred: list[float], truth: list[float]) -> float | None:
    """1 - SS_res/SS_tot about the truth mean; None when the truth is constant."""
    _check_pairs(pred, truth)
    mean_t = math.fsum(truth) / len(truth)
    ss_tot = math.fsum((t - mean_t) ** 2 for t in truth)
    if ss_tot == 0.0:
        return None
    ss_res = math.fsum((p - t) ** 2 for p, t in zip(pred, truth))
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# Report


@dataclass
class EvalRow:
    variable: str
    n: int
    mae: float
    rmse: float
    r_squared: float | None


@dataclass
class EvalReport:
    rows: list[EvalRow]
    total: EvalRow
    excluded_pairs: dict[str, int]
    # Populated when averaging the per-variable metrics disagrees with
    # pooling all pairs; both views are printed in that case.
    total_mean_of_variables: EvalRow | None = None

    def to_json_obj(self) -> dict:
        def row_obj(row: EvalRow) -> dict:
            return {"variable": row.variable, "n": row.n, "mae": row.mae,
                    "rmse": row.rmse, "r_squared": row.r_squared}

        return {
            "rows": [row_obj(r) for r in self.rows],
            "total": row_obj(self.total),
            "total_mean_of_variables": (row_obj(self.total_mean_of_variables)
                                        if self.total_mean_of_variables else None),
            "excluded_pairs": self.excluded_pairs,
        }

    def render_text(self) -> str:
        header = f"{'Variable':<24} {'n':>5} {'MAE':>10} {'RMSE':>10} {'R²':>10}"
        lines = [header, "-" * len(header)]
        for row in self.rows + [self.total]:
            r2 = "-" if row.r_squared is None else f"{row.r_squared:.5f}"
            lines.append(f"{row.variable:<24} {row.n:>5} {row.mae:>10.5f} "
                         f"{row.rmse:>10.5f} {r2:>10}")
        if self.total_mean_of_variables is not None:
            row = self.total_mean_of_variables
            r2 = "-" if row.r_squared is None else f"{row.r_squared:.5f}"
            lines.append(f"{'Total (mean of vars)':<24} {row.n:>5} {row.mae:>10.5f} "
                         f"{row.rmse:>10.5f} {r2:>10}")
        excluded = sum(self.excluded_pairs.values())
        if excluded:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(self.excluded_pairs.items()) if v)
            lines.append(f"excluded pairs (no usable prediction): {excluded} ({detail})")
        return "\n".join(lines) + "\n"


def evaluate(dataset: Dataset, benchmark: list[BenchmarkEntry]) -> EvalReport:
    """Per-variable MAE/RMSE/R² plus a pooled Total row.

    Benchmark entries whose prediction is unknown or unparseable are
    excluded and counted rather than zero-filled.
    """
    by_id = {row.building_id: row for row in dataset.rows}
    pairs: dict[str, tuple[list[float], list[float]]] = {v: ([], []) for v in EVAL_VARIABLES}
    excluded = {v: 0 for v in EVAL_VARIABLES}
    for entry in benchmark:
        row = by_id.get(entry.building_id)
        pred = predicted_value(row, entry.variable_key) if row is not None else None
        if pred is None:
            excluded[entry.variable_key] += 1
            continue
        preds, truths = pairs[entry.variable_key]
        preds.append(pred)
        truths.append(entry.ground_truth)

    rows = []
    all_preds: list[float] = []
    all_truths: list[float] = []
    for variable in EVAL_VARIABLES:
        preds, truths = pairs[variable]
        if not preds:
            continue
        rows.append(EvalRow(variable, len(preds), mae(preds, truths),
                            rmse(preds, truths), r_squared(preds, truths)))
        all_preds.extend(preds)
        all_truths.extend(truths)
    if not all_preds:
        raise NoMatchedPairs("no benchmark entry matched a usable prediction")

    total = EvalRow("Total", len(all_preds), mae(all_preds, all_truths),
                    rmse(all_preds, all_truths), r_squared(all_preds, all_truths))

    mean_total = None
    if len(rows) > 1:
        mean_mae = math.fsum(r.mae for r in rows) / len(rows)
        mean_rmse = math.fsum(r.rmse for r in rows) / len(rows)
        r2_values = [r.r_squared for r in rows if r.r_squared is not None]
        mean_r2 = math.fsum(r2_values) / len(r2_values) if r2_values else None
        if not (math.isclose(mean_mae, total.mae, abs_tol=1e-12)
                and math.isclose(mean_rmse, total.rmse, abs_tol=1e-12)):
            mean_total = EvalRow("Total (mean of vars)", len(all_preds),
                                 mean_mae, mean_rmse, mean_r2)

    return EvalReport(rows=rows, total=total, excluded_pairs=excluded,
                      total_mean_of_variables=mean_total)
