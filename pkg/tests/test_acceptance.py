"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Everything here is offline: scripted mocks and committed fixtures
stand in for every remote service.
"""

import csv
import json
import os
import random
import time
from fractions import Fraction

import pytest

from facadeatlas.annotate import (
    AnnotationTask,
    CheckpointLedger,
    FixtureProvider,
    ProviderConfig,
    ProviderKind,
    run_job,
)
from facadeatlas.cli import main
from facadeatlas.evaluation import evaluate, mae, r_squared, rmse
from facadeatlas.geo import GeoPoint, haversine_distance_m, initial_bearing_deg
from facadeatlas.indicators import (
    IndicatorEntry,
    ParseStatus,
    Unknown,
    default_schema,
    format_rate,
    generation_rate,
    normalize_value,
    parse_response,
)
from facadeatlas.mock import fixture_path
from facadeatlas.ratelimit import KeyPool
from facadeatlas.streetview import PanoramaRef, PanoStatus, find_panorama
from conftest import VirtualClock
from normalization_table import NORMALIZATION_CASES
from oracles import (
    circular_diff_deg,
    geojson_violations,
    oracle_bearing_deg,
    oracle_distance_m,
    oracle_mae,
    oracle_r_squared,
    oracle_rmse,
)

SCHEMA = default_schema()
BENCHMARK = os.path.join(os.path.dirname(__file__), "data", "benchmark.csv")


def passed(number: int, description: str) -> None:
    print(f"\nACCEPTANCE C{number} PASS - {description}")


# ---------------------------------------------------------------------------
# Criterion 1: geodesic oracle suite


def test_c1_geodesic_oracle_suite():
    started = time.perf_counter()

    assert initial_bearing_deg(GeoPoint(0, 0), GeoPoint(1, 0)) == 0.0
    assert abs(initial_bearing_deg(GeoPoint(0, 0), GeoPoint(0, 1)) - 90.0) < 1e-9
    d = haversine_distance_m(GeoPoint(0, 0), GeoPoint(0, 1))
    assert abs(d - 111_194.93) <= 0.01

    rng = random.Random(12345)
    checked = 0
    while checked < 1000:
        a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180))
        b = GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180))
        if a == b:
            continue
        checked += 1
        d_got = haversine_distance_m(a, b)
        d_want = oracle_distance_m(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg)
        assert abs(d_got - d_want) < 0.01, (a, b)
        b_got = initial_bearing_deg(a, b)
        b_want = oracle_bearing_deg(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg)
        assert circular_diff_deg(b_got, b_want) < 1e-6, (a, b)

    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"geodesic suite took {elapsed:.3f}s"
    passed(1, f"distance/bearing match the vector oracle on 1000 seeded pairs "
              f"(1 cm / 1e-6 deg) in {elapsed:.3f}s")


# ---------------------------------------------------------------------------
# Criterion 2: radius-schedule contract


class _ScriptedMetadata:
    def __init__(self, hit_at):
        self.hit_at = hit_at
        self.calls = 0

    def metadata(self, location, radius_m):
        self.calls += 1
        if self.hit_at is not None and radius_m >= self.hit_at:
            return PanoramaRef("p", GeoPoint(0.001, 0), PanoStatus.OK)
        return PanoramaRef("", None, PanoStatus.ZERO_RESULTS)


def test_c2_radius_schedule_contract():
    for hit_at, expected_calls in ((30, 1), (40, 2), (50, 3)):
        client = _ScriptedMetadata(hit_at)
        ref = find_panorama(GeoPoint(0, 0), client, radii_m=(30, 40, 50))
        assert ref is not None and ref.status is PanoStatus.OK
        assert client.calls == expected_calls, f"hit at {hit_at}"
    exhausted = _ScriptedMetadata(None)
    assert find_panorama(GeoPoint(0, 0), exhausted, radii_m=(30, 40, 50)) is None
    assert exhausted.calls == 3
    passed(2, "metadata hits at 30/40/50 m cost exactly 1/2/3 calls; "
              "exhaustion yields not-found")


# ---------------------------------------------------------------------------
# Criterion 3: end-to-end fixture city


def test_c3_end_to_end_fixture_city(tmp_path):
    started = time.perf_counter()
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--mock", "--city", "Amsterdam", "--out", str(dir_a)]) == 0
    assert main(["run", "--mock", "--city", "Amsterdam", "--out", str(dir_b)]) == 0
    # And a rerun in an existing directory (resume path).
    assert main(["run", "--mock", "--city", "Amsterdam", "--out", str(dir_a)]) == 0

    with open(dir_a / "dataset.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10

    doc = json.loads((dir_a / "dataset.geojson").read_text())
    violations = geojson_violations(doc)
    assert violations == [], violations
    assert len(doc["features"]) == 10

    assert (dir_a / "dataset.csv").read_bytes() == (dir_b / "dataset.csv").read_bytes()
    assert (dir_a / "dataset.geojson").read_bytes() == (dir_b / "dataset.geojson").read_bytes()

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"end-to-end run took {elapsed:.2f}s"
    passed(3, f"mock pipeline gives a 10-row CSV and a valid 10-feature GeoJSON, "
              f"byte-identical across runs, in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 4: crash-safe resume


def _fixture_tasks():
    with open(fixture_path("llm_responses.json"), encoding="utf-8") as fh:
        responses = json.load(fh)
    return [AnnotationTask(bid, f"/img/{bid}.jpg", "h") for bid in sorted(responses)]


def _mock_provider_config():
    return ProviderConfig(provider_kind=ProviderKind.MOCK_FIXTURE,
                          fixture_path=fixture_path("llm_responses.json"),
                          per_key_requests_per_minute=None, model_id="m")


def _parsed_ok(ledger: CheckpointLedger):
    return {bid: parse_response(e.raw_text, SCHEMA)
            for bid, e in ledger.ok_entries().items()}


def test_c4_crash_safe_resume(tmp_path, clock):
    tasks = _fixture_tasks()
    config = _mock_provider_config()
    full_path = str(tmp_path / "full.jsonl")
    run_job(tasks, "prompt", config, full_path,
            provider=FixtureProvider.from_file(config.fixture_path),
            clock=clock.time, sleep=clock.sleep, now=lambda: 0.0)
    reference = _parsed_ok(CheckpointLedger(full_path))
    assert set(reference) == {t.building_id for t in tasks}
    full_lines = open(full_path, encoding="utf-8").readlines()

    for cut in range(len(full_lines) + 1):
        partial = tmp_path / f"cut{cut}.jsonl"
        partial.write_text("".join(full_lines[:cut]))
        provider = FixtureProvider.from_file(config.fixture_path)
        ledger = run_job(tasks, "prompt", config, str(partial), provider=provider,
                         clock=clock.time, sleep=clock.sleep, now=lambda: 0.0)
        assert provider.calls == len(tasks) - cut
        assert _parsed_ok(ledger) == reference

    # Completed rerun does zero provider work.
    provider = FixtureProvider.from_file(config.fixture_path)
    run_job(tasks, "prompt", config, full_path, provider=provider,
            clock=clock.time, sleep=clock.sleep, now=lambda: 0.0)
    assert provider.calls == 0
    passed(4, "every ledger truncation point resumes to the uninterrupted result; "
              "a completed rerun makes 0 provider calls")


# ---------------------------------------------------------------------------
# Criterion 5: parser table and fuzz totality


def test_c5_parser_table_and_fuzz():
    assert len(NORMALIZATION_CASES) >= 30
    by_key = {d.key: d for d in SCHEMA}
    for fragment, key, expected in NORMALIZATION_CASES:
        got = normalize_value(fragment, by_key[key])
        assert got == expected, f"{key}: {fragment!r} -> {got!r}, wanted {expected!r}"

    keys = [d.key for d in SCHEMA]
    rng = random.Random(987654)
    fillers = ["30%", "unknown", "3m", "none", "abc", "=", ":", "1.5", "doors=1",
               "\x00\x01", "🏠", "a" * 50]
    for i in range(10_000):
        if i % 3 == 0:
            raw = rng.randbytes(rng.randrange(0, 200)).decode("latin-1")
        else:
            lines = []
            for _ in range(rng.randrange(0, 8)):
                key = rng.choice(keys + ["not_a_key", "", "123"])
                lines.append(f"{key}: {rng.choice(fillers)}")
            raw = "\n".join(lines)
        result = parse_response(raw, SCHEMA)
        assert list(result) == keys
    passed(5, "30-case normalization table exact; parser total over 10,000 "
              "fuzz iterations with the full key set every time")


# ---------------------------------------------------------------------------
# Criterion 6: generation-rate arithmetic


def test_c6_generation_rate_arithmetic():
    def rows(n_parsed, n_total, key="k"):
        out = []
        for i in range(n_total):
            status = ParseStatus.PARSED if i < n_parsed else ParseStatus.UNPARSEABLE
            out.append({key: IndicatorEntry(Unknown(), status)})
        return out

    rate = generation_rate(rows(3, 4), "k")
    assert rate == Fraction(3, 4) and format_rate(rate) == "0.7500"
    rate = generation_rate(rows(17, 20), "k")
    assert rate == Fraction(17, 20) and format_rate(rate) == "0.8500"
    passed(6, "generation rates render exactly: 3/4 -> 0.7500, 17/20 -> 0.8500")


# ---------------------------------------------------------------------------
# Criterion 7: metric suite


def test_c7_metric_suite():
    truth = [4.0, -2.0, 9.0]
    assert mae(truth, truth) == 0.0 and rmse(truth, truth) == 0.0
    assert r_squared(truth, truth) == 1.0

    base = [1.0, 2.0, 3.0, 6.0]
    mean = sum(base) / len(base)
    assert abs(r_squared([mean] * 4, base)) < 1e-15

    t, p = [1.0, 2.0, 3.0], [1.1, 1.9, 3.2]
    assert abs(mae(p, t) - 0.13333) <= 1e-5
    assert abs(rmse(p, t) - 0.14142) <= 1e-5
    assert abs(r_squared(p, t) - 0.97) <= 1e-9

    rng = random.Random(31337)
    for _ in range(500):
        n = rng.randint(2, 40)
        truths = [rng.uniform(-100, 100) for _ in range(n)]
        preds = [x + rng.uniform(-10, 10) for x in truths]
        assert abs(mae(preds, truths) - oracle_mae(preds, truths)) < 1e-9
        assert abs(rmse(preds, truths) - oracle_rmse(preds, truths)) < 1e-9
        assert abs(r_squared(preds, truths) - oracle_r_squared(preds, truths)) < 1e-9
        assert mae(preds, truths) <= rmse(preds, truths) * (1 + 1e-12) + 1e-15
        pairs = list(zip(preds, truths))
        rng.shuffle(pairs)
        shuffled_p = [a for a, _ in pairs]
        shuffled_t = [b for _, b in pairs]
        assert mae(shuffled_p, shuffled_t) == mae(preds, truths)
        assert rmse(shuffled_p, shuffled_t) == rmse(preds, truths)
        k = rng.choice((0.5, 2.0, 10.0))
        assert abs(mae([k * a for a in preds], [k * b for b in truths])
                   - k * mae(preds, truths)) < 1e-9
        assert abs(r_squared([k * a for a in preds], [k * b for b in truths])
                   - r_squared(preds, truths)) < 1e-9

    # Report layout: Variable / MAE / RMSE / R² columns plus a Total row.
    from facadeatlas.dataset import Dataset, DatasetRow
    from facadeatlas.evaluation import BenchmarkEntry

    rows = [
        DatasetRow("way/1", GeoPoint(0, 0), "house", None, "", "", "m", 0.0,
                   parse_response("floor_to_floor_height: 3m\nwwr: 30%", SCHEMA)),
        DatasetRow("way/2", GeoPoint(0, 0), "house", None, "", "", "m", 0.0,
                   parse_response("floor_to_floor_height: 2.5m\nwwr: 20%", SCHEMA)),
    ]
    report = evaluate(Dataset(rows=rows), [
        BenchmarkEntry("way/1", "floor_to_floor_height", 3.1),
        BenchmarkEntry("way/2", "floor_to_floor_height", 2.6),
        BenchmarkEntry("way/1", "wwr", 0.25),
        BenchmarkEntry("way/2", "wwr", 0.22),
    ])
    header = report.render_text().splitlines()[0]
    for column in ("Variable", "MAE", "RMSE", "R²"):
        assert column in header
    assert report.total.variable == "Total"
    passed(7, "metric anchors, 500-vector oracle equivalence at 1e-9, and the "
              "report layout with a pooled Total row")


# ---------------------------------------------------------------------------
# Criterion 8: key fairness and rate compliance under a virtual clock


def test_c8_key_fairness_and_rate_compliance():
    clock = VirtualClock()
    per_minute = 30
    pool = KeyPool(["k1", "k2", "k3", "k4"], per_minute,
                   clock=clock.time, sleep=clock.sleep)
    calls: dict[str, list[float]] = {k: [] for k in pool.keys}
    for _ in range(100):
        key, limiter = pool.lease()
        limiter.acquire()
        calls[key].append(clock.time())

    counts = {k: len(v) for k, v in calls.items()}
    assert max(counts.values()) - min(counts.values()) <= 1, counts

    for key, times in calls.items():
        for start in times:
            in_window = sum(1 for t in times if start <= t < start + 60.0)
            assert in_window <= per_minute, (key, start, in_window)
    passed(8, "100 tasks over 4 keys stay within +/-1 per key and no key "
              "exceeds its per-minute budget in any sliding 60 s window")


# ---------------------------------------------------------------------------
# Criterion 9: dedup and export invariants


def test_c9_dedup_and_export_invariants(tmp_path):
    from facadeatlas.annotate import RawAnnotation
    from facadeatlas.dataset import _dedupe

    early = RawAnnotation("way/1", "num_floors: 1", "OK", 1, 1, 1, 0.0, "m", 100.0)
    late = RawAnnotation("way/1", "num_floors: 2", "OK", 1, 1, 1, 0.0, "m", 200.0)
    chosen = _dedupe([early, late])
    assert chosen["way/1"].raw_text == "num_floors: 2"
    assert _dedupe([late, early])["way/1"].raw_text == "num_floors: 2"
    assert _dedupe(list(chosen.values())) == chosen  # idempotent

    # CSV <-> GeoJSON parity on the fixture-city dataset.
    run_dir = tmp_path / "run"
    assert main(["run", "--mock", "--out", str(run_dir)]) == 0
    with open(run_dir / "dataset.csv", newline="", encoding="utf-8") as fh:
        csv_rows = list(csv.DictReader(fh))
    features = json.loads((run_dir / "dataset.geojson").read_text())["features"]
    assert len(csv_rows) == len(features) == 10
    for row, feature in zip(csv_rows, features):
        assert dict(row) == feature["properties"]
    passed(9, "latest-timestamp dedup, merge idempotence, and field-for-field "
              "CSV/GeoJSON parity on the fixture city")
