import csv
import math
import random

import pytest

from facadeatlas.dataset import Dataset, DatasetRow
from facadeatlas.errors import (
    EmptyInput,
    LengthMismatch,
    NoMatchedPairs,
    SampleTooLarge,
)
from facadeatlas.evaluation import (
    BenchmarkEntry,
    EVAL_VARIABLES,
    evaluate,
    mae,
    predicted_value,
    r_squared,
    read_benchmark_csv,
    review_sheet_columns,
    rmse,
    sample_for_review,
    write_review_sheet,
)
from facadeatlas.geo import GeoPoint
from facadeatlas.indicators import default_schema, parse_response
from oracles import oracle_mae, oracle_r_squared, oracle_rmse

SCHEMA = default_schema()


def row(building_id, raw_text="", image_path=""):
    return DatasetRow(building_id, GeoPoint(0, 0), "house", None, "p", image_path,
                      "m", 0.0, parse_response(raw_text, SCHEMA))


def dataset(rows):
    return Dataset(rows=sorted(rows, key=lambda r: r.building_id))


# ---------------------------------------------------------------------------
# Metric anchors


def test_perfect_predictor():
    truth = [3.0, -1.0, 7.5, 2.25]
    assert mae(truth, truth) == 0.0
    assert rmse(truth, truth) == 0.0
    assert r_squared(truth, truth) == 1.0


def test_constant_mean_predictor_r2_zero():
    truth = [1.0, 2.0, 3.0, 6.0]
    mean = sum(truth) / len(truth)
    pred = [mean] * len(truth)
    assert r_squared(pred, truth) == pytest.approx(0.0, abs=1e-15)


def test_hand_case():
    truth = [1.0, 2.0, 3.0]
    pred = [1.1, 1.9, 3.2]
    assert mae(pred, truth) == pytest.approx(0.13333, abs=1e-5)
    assert rmse(pred, truth) == pytest.approx(0.14142, abs=1e-5)
    assert r_squared(pred, truth) == pytest.approx(0.97, abs=1e-9)


def test_constant_truth_r2_absent():
    assert r_squared([1.0, 2.0], [5.0, 5.0]) is None


def test_metric_input_validation():
    with pytest.raises(LengthMismatch):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInput):
        rmse([], [])


# ---------------------------------------------------------------------------
# Metric properties against the brute-force oracle


def random_vectors(rng):
    n = rng.randint(2, 40)
    truth = [rng.uniform(-100, 100) for _ in range(n)]
    pred = [t + rng.uniform(-10, 10) for t in truth]
    return pred, truth


def test_oracle_equivalence_500_vectors():
    rng = random.Random(2024)
    for _ in range(500):
        pred, truth = random_vectors(rng)
        assert abs(mae(pred, truth) - oracle_mae(pred, truth)) < 1e-9
        assert abs(rmse(pred, truth) - oracle_rmse(pred, truth)) < 1e-9
        r2, r2_oracle = r_squared(pred, truth), oracle_r_squared(pred, truth)
        assert abs(r2 - r2_oracle) < 1e-9


def test_mae_never_exceeds_rmse():
    rng = random.Random(7)
    for _ in range(500):
        pred, truth = random_vectors(rng)
        assert mae(pred, truth) <= rmse(pred, truth) * (1 + 1e-12) + 1e-15


def test_permutation_invariance():
    rng = random.Random(11)
    for _ in range(200):
        pred, truth = random_vectors(rng)
        pairs = list(zip(pred, truth))
        rng.shuffle(pairs)
        pred2, truth2 = [p for p, _ in pairs], [t for _, t in pairs]
        assert mae(pred2, truth2) == mae(pred, truth)
        assert rmse(pred2, truth2) == rmse(pred, truth)
        assert r_squared(pred2, truth2) == r_squared(pred, truth)


def test_scale_equivariance():
    rng = random.Random(13)
    for k in (0.5, 2.0, 10.0):
        for _ in range(100):
            pred, truth = random_vectors(rng)
            scaled_p = [k * p for p in pred]
            scaled_t = [k * t for t in truth]
            assert mae(scaled_p, scaled_t) == pytest.approx(k * mae(pred, truth), rel=1e-12)
            assert rmse(scaled_p, scaled_t) == pytest.approx(k * rmse(pred, truth), rel=1e-12)
            assert r_squared(scaled_p, scaled_t) == pytest.approx(
                r_squared(pred, truth), abs=1e-12)


# ---------------------------------------------------------------------------
# Prediction extraction


def test_predicted_value_extraction():
    r = row("way/1", "floor_to_floor_height: 3m\nwwr: 30%\nnum_vertices: 8\n"
                     "greening_conditions: 4 trees, 1 grasslands")
    assert predicted_value(r, "floor_to_floor_height") == 3.0
    assert predicted_value(r, "wwr") == pytest.approx(0.30)
    assert predicted_value(r, "num_vertices") == 8.0
    assert predicted_value(r, "tree_count") == 4.0


def test_predicted_value_unknown_is_none():
    r = row("way/1", "wwr: unknown\nfloor_to_floor_height: tall-ish")
    assert predicted_value(r, "wwr") is None
    assert predicted_value(r, "floor_to_floor_height") is None
    assert predicted_value(r, "tree_count") is None


# ---------------------------------------------------------------------------
# Review sheet


def test_sample_whole_dataset_in_id_order():
    rows = [row(f"way/{i}") for i in (3, 1, 2)]
    sheet = sample_for_review(dataset(rows), n=3, seed=0)
    assert [r["building_id"] for r in sheet] == ["way/1", "way/2", "way/3"]


def test_sample_deterministic_per_seed():
    rows = [row(f"way/{i:02d}") for i in range(20)]
    a = sample_for_review(dataset(rows), n=5, seed=7)
    b = sample_for_review(dataset(rows), n=5, seed=7)
    assert a == b
    c = sample_for_review(dataset(rows), n=5, seed=8)
    assert a != c


def test_sample_golden_selection():
    rows = [row(f"way/{i:02d}") for i in range(20)]
    sheet = sample_for_review(dataset(rows), n=5, seed=7)
    chosen = [r["building_id"] for r in sheet]
    expected = sorted(random.Random(7).sample(sorted(f"way/{i:02d}" for i in range(20)), 5))
    assert chosen == expected


def test_sample_too_large():
    with pytest.raises(SampleTooLarge):
        sample_for_review(dataset([row("way/1")]), n=2, seed=0)


def test_review_sheet_roundtrip(tmp_path):
    rows = [row("way/1", "wwr: 30%", image_path="images/house/way_1.jpg")]
    sheet = sample_for_review(dataset(rows), n=1, seed=0)
    path = tmp_path / "review.csv"
    write_review_sheet(sheet, str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == review_sheet_columns()
        record = next(reader)
    assert record["pred_wwr"] == "0.3"
    assert record["truth_wwr"] == ""
    assert record["image_path"] == "images/house/way_1.jpg"


# ---------------------------------------------------------------------------
# Benchmark ingestion


def test_read_benchmark_requires_header(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("way/1,wwr,0.3\n")
    with pytest.raises(ValueError):
        read_benchmark_csv(str(path))


def test_read_benchmark_ok(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("building_id,variable_key,ground_truth\nway/1,wwr,0.3\n")
    entries = read_benchmark_csv(str(path))
    assert entries == [BenchmarkEntry("way/1", "wwr", 0.3)]


def test_benchmark_entry_validation():
    with pytest.raises(ValueError):
        BenchmarkEntry("way/1", "not_a_variable", 1.0)
    with pytest.raises(ValueError):
        BenchmarkEntry("way/1", "wwr", math.nan)


# ---------------------------------------------------------------------------
# evaluate()


def eval_rows():
    return [
        row("way/1", "floor_to_floor_height: 3m\nwwr: 30%"),
        row("way/2", "floor_to_floor_height: 2.8m\nwwr: 25%"),
        row("way/3", "num_vertices: 4\ngreening_conditions: 2 trees"),
        row("way/4", "num_vertices: 6\nwwr: unknown\ngreening_conditions: 3 trees"),
    ]


def test_evaluate_equal_benchmark_gives_perfect_scores():
    benchmark = [
        BenchmarkEntry("way/1", "floor_to_floor_height", 3.0),
        BenchmarkEntry("way/2", "floor_to_floor_height", 2.8),
        BenchmarkEntry("way/1", "wwr", 0.30),
        BenchmarkEntry("way/2", "wwr", 0.25),
        BenchmarkEntry("way/3", "num_vertices", 4.0),
        BenchmarkEntry("way/4", "num_vertices", 6.0),
        BenchmarkEntry("way/3", "tree_count", 2.0),
        BenchmarkEntry("way/4", "tree_count", 3.0),
    ]
    report = evaluate(dataset(eval_rows()), benchmark)
    for r in report.rows + [report.total]:
        assert r.mae == 0.0 and r.rmse == 0.0
        assert r.r_squared == 1.0
    assert report.total.n == 8


def test_evaluate_matches_direct_metrics_single_variable():
    benchmark = [
        BenchmarkEntry("way/1", "wwr", 0.35),
        BenchmarkEntry("way/2", "wwr", 0.20),
    ]
    report = evaluate(dataset(eval_rows()), benchmark)
    assert len(report.rows) == 1
    got = report.rows[0]
    assert got.variable == "wwr" and got.n == 2
    assert got.mae == mae([0.30, 0.25], [0.35, 0.20])
    assert got.rmse == rmse([0.30, 0.25], [0.35, 0.20])
    assert got.r_squared == r_squared([0.30, 0.25], [0.35, 0.20])


def test_evaluate_pooled_total_hand_computed():
    benchmark = [
        BenchmarkEntry("way/1", "floor_to_floor_height", 3.1),
        BenchmarkEntry("way/2", "floor_to_floor_height", 2.7),
        BenchmarkEntry("way/3", "num_vertices", 5.0),
        BenchmarkEntry("way/4", "num_vertices", 6.0),
    ]
    report = evaluate(dataset(eval_rows()), benchmark)
    # Pooled pairs: preds (3, 2.8, 4, 6) vs truths (3.1, 2.7, 5, 6)
    assert report.total.mae == pytest.approx((0.1 + 0.1 + 1.0 + 0.0) / 4)
    assert report.total.rmse == pytest.approx(math.sqrt((0.01 + 0.01 + 1.0 + 0.0) / 4))
    # Pooling disagrees with averaging per-variable metrics here, so the
    # alternate total is also reported.
    assert report.total_mean_of_variables is not None
    assert report.total_mean_of_variables.mae == pytest.approx((0.1 + 0.5) / 2)


def test_evaluate_excludes_unknown_predictions():
    benchmark = [BenchmarkEntry("way/4", "wwr", 0.5),
                 BenchmarkEntry("way/1", "wwr", 0.3)]
    report = evaluate(dataset(eval_rows()), benchmark)
    assert report.excluded_pairs["wwr"] == 1
    assert report.rows[0].n == 1


def test_evaluate_no_matched_pairs():
    benchmark = [BenchmarkEntry("way/404", "wwr", 0.5)]
    with pytest.raises(NoMatchedPairs):
        evaluate(dataset(eval_rows()), benchmark)


def test_report_layout_mirrors_table_columns():
    benchmark = [
        BenchmarkEntry("way/1", "floor_to_floor_height", 3.1),
        BenchmarkEntry("way/3", "num_vertices", 5.0),
    ]
    report = evaluate(dataset(eval_rows()), benchmark)
    text = report.render_text()
    header = text.splitlines()[0]
    for column in ("Variable", "MAE", "RMSE", "R²"):
        assert column in header
    assert any(line.startswith("Total") for line in text.splitlines())
    obj = report.to_json_obj()
    assert {"variable", "n", "mae", "rmse", "r_squared"} == set(obj["rows"][0])
    assert obj["total"]["variable"] == "Total"


def test_eval_variables_fixed():
    assert EVAL_VARIABLES == ("floor_to_floor_height", "wwr", "num_vertices", "tree_count")
