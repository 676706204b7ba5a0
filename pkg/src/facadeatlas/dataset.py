"""Merge annotations with building metadata and export CSV / GeoJSON / summary.

The CSV and the GeoJSON properties carry exactly the same cells, so the
two exports stay field-for-field interchangeable.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction

from .annotate import CheckpointLedger, RawAnnotation
from .errors import EmptyDataset
from .geo import GeoPoint
from .indicators import (
    Count,
    IndicatorDef,
    IndicatorSet,
    Kind,
    Numeric,
    ParseStatus,
    Percent,
    Scores,
    Unknown,
    canonical_text,
    format_rate,
    generation_rate,
    parse_response,
)
from .osm import BuildingRecord
from .streetview import ImageAsset

SCHEMA_VERSION = "1"

# "osm_building_type" is the raw OSM building tag; the annotated use class
# lives in the indicator column named building_type.
METADATA_COLUMNS = ("building_id", "lat", "lon", "osm_building_type", "address",
                    "pano_id", "image_path", "model_id", "timestamp")

_ADDRESS_ORDER = ("street", "housenumber", "city")


@dataclass
class DatasetRow:
    building_id: str
    center: GeoPoint
    building_type: str
    address: dict[str, str] | None
    pano_id: str
    image_path: str
    model_id: str
    timestamp: float
    indicators: IndicatorSet


@dataclass
class Dataset:
    rows: list[DatasetRow]
    schema_version: str = SCHEMA_VERSION
    orphan_count: int = 0


def _dedupe(annotations: list[RawAnnotation]) -> dict[str, RawAnnotation]:
    """Latest timestamp wins per building_id; later entries win ties."""
    latest: dict[str, RawAnnotation] = {}
    for entry in annotations:
        current = latest.get(entry.building_id)
        if current is None or entry.ts >= current.ts:
            latest[entry.building_id] = entry
    return latest


def merge_and_dedupe(ledger_paths: list[str], buildings: list[BuildingRecord],
                     schema: list[IndicatorDef],
                     image_index: dict[str, ImageAsset] | None = None,
                     path_base: str | None = None) -> Dataset:
    """Join OK annotations to building records by building_id.

    Duplicate ids keep the most recent annotation; annotations without a
    matching building are dropped and counted in Dataset.orphan_count.
    Image paths are exported relative to ``path_base`` when given, so the
    outputs do not depend on where the run directory lives.
    """
    ok_entries: list[RawAnnotation] = []
    for path in ledger_paths:
        ledger = CheckpointLedger(path)
        ok_entries.extend(e for e in ledger.entries if e.status == "OK")
    chosen = _dedupe(ok_entries)

    by_id = {b.building_id: b for b in buildings}
    image_index = image_index or {}
    rows: list[DatasetRow] = []
    orphans = 0
    for building_id, entry in chosen.items():
        building = by_id.get(building_id)
        if building is None:
            orphans += 1
            continue
        asset = image_index.get(building_id)
        image_path = asset.file_path if asset else ""
        if image_path and path_base:
            image_path = os.path.relpath(image_path, path_base)
        rows.append(DatasetRow(
            building_id=building_id,
            center=building.center,
            building_type=building.building_type,
            address=building.address,
            pano_id=asset.pano_id if asset else "",
            image_path=image_path,
            model_id=entry.model_id,
            timestamp=entry.ts,
            indicators=parse_response(entry.raw_text, schema),
        ))
    rows.sort(key=lambda r: r.building_id)
    return Dataset(rows=rows, orphan_count=orphans)


def _render_address(address: dict[str, str] | None) -> str:
    if not address:
        return ""
    return ";".join(f"{k}={address[k]}" for k in _ADDRESS_ORDER if k in address)


def _render_indicator(indicators: IndicatorSet, key: str) -> str:
    value = indicators[key].value
    if isinstance(value, Unknown):
        return ""
    return canonical_text(value)


def row_cells(row: DatasetRow, schema: list[IndicatorDef]) -> dict[str, str]:
    """The flattened, all-string cell mapping shared by CSV and GeoJSON."""
    cells = {
        "building_id": row.building_id,
        "lat": str(row.center.lat_deg),
        "lon": str(row.center.lon_deg),
        "osm_building_type": row.building_type,
        "address": _render_address(row.address),
        "pano_id": row.pano_id,
        "image_path": row.image_path,
        "model_id": row.model_id,
        "timestamp": datetime.fromtimestamp(row.timestamp, tz=timezone.utc).isoformat(),
    }
    for d in schema:
        cells[d.key] = _render_indicator(row.indicators, d.key)
    return cells


def export_csv(dataset: Dataset, path: str, schema: list[IndicatorDef]) -> int:
    """RFC 4180 CSV: metadata columns then one column per indicator."""
    header = list(METADATA_COLUMNS) + [d.key for d in schema]
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in dataset.rows:
            cells = row_cells(row, schema)
            writer.writerow([cells[col] for col in header])
    os.replace(tmp, path)
    return len(dataset.rows)


def export_geojson(dataset: Dataset, path: str, schema: list[IndicatorDef]) -> int:
    """RFC 7946 FeatureCollection of Points with CSV-identical properties."""
    features = []
    for row in dataset.rows:
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "Point",
                "coordinates": [row.center.lon_deg, row.center.lat_deg],
            },
            "properties": row_cells(row, schema),
        })
    doc = {"type": "FeatureCollection", "features": features}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")
    os.replace(tmp, path)
    return len(features)


# ---------------------------------------------------------------------------
# Summary report (tabular stand-in for maps and word clouds)


@dataclass
class IndicatorSummary:
    key: str
    kind: Kind
    generation_rate: str
    frequencies: list[tuple[str, int]] = field(default_factory=list)
    stats: dict[str, float] | None = None


@dataclass
class SummaryReport:
    n_rows: int
    indicators: list[IndicatorSummary]

    def to_json_obj(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "indicators": [
                {
                    "key": s.key,
                    "kind": s.kind.value,
                    "generation_rate": s.generation_rate,
                    "frequencies": [[v, c] for v, c in s.frequencies] or None,
                    "stats": s.stats,
                }
                for s in self.indicators
            ],
        }

    def render_text(self) -> str:
        lines = [f"dataset rows: {self.n_rows}", ""]
        width = max(len(s.key) for s in self.indicators)
        for s in self.indicators:
            lines.append(f"{s.key:<{width}}  rate={s.generation_rate}")
            if s.stats:
                stat_bits = ", ".join(f"{k}={_fmt_stat(v)}" for k, v in s.stats.items())
                lines.append(f"{'':<{width}}  {stat_bits}")
            for value, count in s.frequencies:
                lines.append(f"{'':<{width}}    {count:>5}  {value}")
        return "\n".join(lines) + "\n"


def _fmt_stat(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.4g}"


def _numeric_value(value) -> float | None:
    if isinstance(value, Numeric):
        return value.value
    if isinstance(value, Percent):
        return value.fraction
    if isinstance(value, Count):
        return float(value.value)
    return None


def summarize(dataset: Dataset, schema: list[IndicatorDef]) -> SummaryReport:
    """Frequency tables for categorical kinds, spread stats for numeric ones,
    and a generation rate for every indicator."""
    if not dataset.rows:
        raise EmptyDataset("cannot summarize an empty dataset")
    indicator_rows = [row.indicators for row in dataset.rows]
    summaries: list[IndicatorSummary] = []
    for d in schema:
        rate: Fraction = generation_rate(indicator_rows, d.key)
        summary = IndicatorSummary(key=d.key, kind=d.kind,
                                   generation_rate=format_rate(rate))
        parsed_values = [row[d.key].value for row in indicator_rows
                         if row[d.key].status is ParseStatus.PARSED
                         and not isinstance(row[d.key].value, Unknown)]
        if d.kind in (Kind.CATEGORICAL, Kind.SCORE_SET):
            counts: dict[str, int] = {}
            for value in parsed_values:
                if isinstance(value, Scores):
                    for dim, level in value.levels:
                        label = f"{dim}={level}"
                        counts[label] = counts.get(label, 0) + 1
                else:
                    label = canonical_text(value)
                    counts[label] = counts.get(label, 0) + 1
            summary.frequencies = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        elif d.kind in (Kind.NUMERIC, Kind.PERCENT, Kind.COUNT):
            numbers = [v for v in (_numeric_value(x) for x in parsed_values) if v is not None]
            if numbers:
                summary.stats = {
                    "n": float(len(numbers)),
                    "min": min(numbers),
                    "max": max(numbers),
                    "mean": statistics.fmean(numbers),
                    "median": statistics.median(numbers),
                }
        summaries.append(summary)
    return SummaryReport(n_rows=len(dataset.rows), indicators=summaries)


def write_summary(report: SummaryReport, json_path: str, text_path: str) -> None:
    tmp = json_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_obj(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    os.replace(tmp, json_path)
    tmp = text_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(report.render_text())
    os.replace(tmp, text_path)
