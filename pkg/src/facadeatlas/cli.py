"""Command-line front end wiring the pipeline stages together.

Stages communicate only through files in the run directory (building
JSONL store, image store + index, annotation ledger, exports), so every
subcommand can be rerun or resumed independently.

Exit codes: 0 ok, 1 internal error, 2 empty result, 3 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

from . import __version__
from .annotate import (
    AnnotationTask,
    CheckpointLedger,
    ProviderKind,
    make_provider,
    run_job,
    total_cost,
)
from .config import (
    KEYS_ENV,
    STREETVIEW_KEY_ENV,
    RunConfig,
    build_config,
    load_config_file,
    parse_bbox,
    parse_radii,
    parse_size,
    resolve_api_keys,
)
from .dataset import export_csv, export_geojson, merge_and_dedupe, summarize, write_summary
from .errors import ConfigError, EmptyDataset, EmptyQuery, FacadeAtlasError, NoMatchedPairs
from .evaluation import evaluate, read_benchmark_csv
from .geo import BoundingBox
from .indicators import (
    build_prompt,
    default_schema,
    format_rate,
    generation_rate,
    parse_response,
    schema_to_json,
)
from .mock import FixtureGeocoder, FixtureOverpass, FixtureStreetView, fixture_path, mock_clock
from .osm import (
    NominatimClient,
    OverpassClient,
    read_building_store,
    write_jsonl_by_type,
)
from .streetview import ImageStore, StreetViewClient, run_sampling, sample_buildings

logger = logging.getLogger(__name__)

OK, INTERNAL_ERROR, EMPTY_RESULT, CONFIG_ERROR = 0, 1, 2, 3

BUILDINGS_DIR = "buildings"
LEDGER_NAME = "ledger.jsonl"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", help="run directory")
    common.add_argument("--city", help="city query resolved via geocoding")
    common.add_argument("--bbox", metavar="S,W,N,E", help="bounding box override")
    common.add_argument("--limit-per-type", type=int, help="buildings sampled per type")
    common.add_argument("--seed", type=int, help="sampling seed")
    common.add_argument("--radii", metavar="30,40,50", help="panorama search radii in metres")
    common.add_argument("--size", metavar="600x300", help="capture size in pixels")
    common.add_argument("--pitch", type=float, help="camera pitch in degrees")
    common.add_argument("--fov", type=float, help="camera field of view in degrees")
    common.add_argument("--mock", action="store_true", default=None,
                        help="run offline against the committed fixtures")
    common.add_argument("--skip-failed", action="store_true", default=None,
                        help="do not retry previously FAILED annotations")
    common.add_argument("--workers", type=int, help="max in-flight network requests")
    common.add_argument("--strict", action="store_true", default=None,
                        help="abort on malformed stored lines instead of skipping")

    parser = argparse.ArgumentParser(prog="facadeatlas",
                                     description="Building-exterior dataset pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geocode", parents=[common], help="resolve a place query")
    p.add_argument("query")
    p.set_defaults(func=cmd_geocode)

    p = sub.add_parser("buildings", parents=[common], help="fetch buildings into the JSONL store")
    p.set_defaults(func=cmd_buildings)

    p = sub.add_parser("sample", parents=[common],
                       help="select buildings and capture street-view images")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("annotate", parents=[common], help="annotate captured images")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("export", parents=[common], help="merge and export CSV/GeoJSON/summary")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against ground truth")
    p.add_argument("benchmark", metavar="BENCHMARK_CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="full pipeline with stage checkpoints")
    p.set_defaults(func=cmd_run)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_doc = load_config_file(args.config) if args.config else None
    overrides = {
        "city": args.city,
        "bbox": parse_bbox(args.bbox) if args.bbox else None,
        "limit_per_type": args.limit_per_type,
        "seed": args.seed,
        "radii_m": parse_radii(args.radii) if args.radii else None,
        "pitch_deg": args.pitch,
        "fov_deg": args.fov,
        "mock": args.mock,
        "skip_failed": args.skip_failed,
        "workers": args.workers,
        "out_dir": args.out,
        "strict": args.strict,
    }
    if args.size:
        overrides["width"], overrides["height"] = parse_size(args.size)
    return build_config(file_doc, **overrides)


def _now_fn(config: RunConfig):
    return mock_clock if config.mock else time.time


def _geocoder(config: RunConfig):
    return FixtureGeocoder() if config.mock else NominatimClient(config.nominatim_url)


def _overpass(config: RunConfig):
    if config.mock:
        return FixtureOverpass()
    return OverpassClient(config.overpass_url, timeout_s=config.overpass_timeout_s)


def _streetview(config: RunConfig):
    if config.mock:
        return FixtureStreetView()
    api_key = os.environ.get(STREETVIEW_KEY_ENV, "")
    if not api_key:
        raise ConfigError(f"street-view API key missing: set {STREETVIEW_KEY_ENV}")
    return StreetViewClient(config.metadata_url, config.image_url, api_key=api_key)


def _provider_config(config: RunConfig):
    provider = config.provider
    # One global worker cap governs in-flight requests across stages.
    provider.max_in_flight = min(provider.max_in_flight, config.workers)
    if provider.provider_kind is ProviderKind.MOCK_FIXTURE:
        if not provider.fixture_path:
            provider.fixture_path = fixture_path("llm_responses.json")
    else:
        provider.api_keys = provider.api_keys or resolve_api_keys(config)
        if not provider.api_keys:
            raise ConfigError(f"annotation API keys missing: set {KEYS_ENV} "
                              "or point keys_file at a file with one key per line")
    return provider


def _resolve_bbox(config: RunConfig) -> BoundingBox:
    config.validate_area()
    if config.bbox:
        return config.bbox
    matches = _geocoder(config).geocode_city(config.city, limit=1)
    if not matches:
        raise _EmptyResult(f"no geocoding match for {config.city!r}")
    print(f"resolved {config.city!r} -> {matches[0].display_name}")
    return matches[0].bbox


class _EmptyResult(FacadeAtlasError):
    """Internal signal for exit code 2."""


def _write_stage_artifacts(config: RunConfig, schema) -> str:
    """Persist the indicator schema and the prompt; returns the prompt."""
    os.makedirs(config.out_dir, exist_ok=True)
    prompt = build_prompt(schema)
    with open(os.path.join(config.out_dir, "schema.json"), "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(schema), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    with open(os.path.join(config.out_dir, "prompt.txt"), "w", encoding="utf-8") as fh:
        fh.write(prompt)
    return prompt


# ---------------------------------------------------------------------------
# Subcommands


def cmd_geocode(args: argparse.Namespace, config: RunConfig) -> int:
    matches = _geocoder(config).geocode_city(args.query)
    for m in matches:
        b = m.bbox
        print(f"{m.display_name}\t[{b.south},{b.west},{b.north},{b.east}]"
              f"\t{m.osm_type_and_id}\trank={m.rank}")
    if not matches:
        print("no matches", file=sys.stderr)
        return EMPTY_RESULT
    return OK


def cmd_buildings(args: argparse.Namespace, config: RunConfig) -> int:
    bbox = _resolve_bbox(config)
    records = _overpass(config).fetch_buildings(bbox, config.type_filter)
    if not records:
        print("no buildings found", file=sys.stderr)
        return EMPTY_RESULT
    out_dir = os.path.join(config.out_dir, BUILDINGS_DIR)
    paths = write_jsonl_by_type(records, out_dir)
    with open(os.path.join(config.out_dir, "area.json"), "w", encoding="utf-8") as fh:
        json.dump({"city": config.city,
                   "bbox": [bbox.south, bbox.west, bbox.north, bbox.east]}, fh)
        fh.write("\n")
    for building_type in sorted(paths):
        count = sum(1 for r in records if r.building_type == building_type)
        print(f"{building_type}: {count} -> {paths[building_type]}")
    print(f"total: {len(records)}")
    return OK


def _load_buildings(config: RunConfig):
    store_dir = os.path.join(config.out_dir, BUILDINGS_DIR)
    if not os.path.isdir(store_dir):
        raise ConfigError(f"no building store at {store_dir}; run 'buildings' first")
    return read_building_store(store_dir, strict=config.strict)


def cmd_sample(args: argparse.Namespace, config: RunConfig) -> int:
    records = _load_buildings(config)
    sampled = sample_buildings(records, seed=config.seed, per_type_limit=config.limit_per_type)
    if not sampled:
        print("nothing to sample", file=sys.stderr)
        return EMPTY_RESULT
    store = ImageStore(config.out_dir)
    stats = run_sampling(sampled, _streetview(config), store,
                         capture=config.capture_params(), radii_m=config.radii_m,
                         workers=config.workers, now=_now_fn(config))
    with open(os.path.join(config.out_dir, "sample_stats.json"), "w", encoding="utf-8") as fh:
        json.dump({"processed": stats.processed, "no_panorama": stats.no_panorama,
                   "failed": stats.failed, "no_panorama_ids": sorted(stats.no_panorama_ids),
                   "failed_ids": sorted(stats.failed_ids)}, fh, indent=2)
        fh.write("\n")
    print(f"sampled={len(sampled)} processed={stats.processed} "
          f"no_panorama={stats.no_panorama} failed={stats.failed}")
    return OK if stats.processed else EMPTY_RESULT


def cmd_annotate(args: argparse.Namespace, config: RunConfig) -> int:
    store = ImageStore(config.out_dir)
    assets = store.assets()
    if not assets:
        print("no captured images to annotate; run 'sample' first", file=sys.stderr)
        return EMPTY_RESULT
    schema = default_schema()
    prompt = _write_stage_artifacts(config, schema)
    prompt_hash = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
    tasks = [AnnotationTask(b, asset.file_path, prompt_hash)
             for b, asset in sorted(assets.items())]
    provider_config = _provider_config(config)
    provider = make_provider(provider_config)
    ledger_path = os.path.join(config.out_dir, LEDGER_NAME)
    before = len(CheckpointLedger(ledger_path).entries)
    ledger = run_job(tasks, prompt, provider_config, ledger_path, provider=provider,
                     skip_failed=bool(config.skip_failed), now=_now_fn(config))
    ok_ids = ledger.completed_ids()
    print(f"tasks={len(tasks)} ok={len(ok_ids)} failed={len(ledger.failed_ids())} "
          f"new_entries={len(ledger.entries) - before}")
    print(f"estimated cost: ${total_cost(ledger):.4f}")

    rows = [parse_response(e.raw_text, schema) for e in ledger.ok_entries().values()]
    if rows:
        print("generation rates:")
        for d in schema:
            print(f"  {d.key}: {format_rate(generation_rate(rows, d.key))}")
    return OK


def _merged_dataset(config: RunConfig, schema):
    buildings = _load_buildings(config)
    ledger_path = os.path.join(config.out_dir, LEDGER_NAME)
    if not os.path.exists(ledger_path):
        raise ConfigError(f"no annotation ledger at {ledger_path}; run 'annotate' first")
    store = ImageStore(config.out_dir)
    return merge_and_dedupe([ledger_path], buildings, schema,
                            image_index=store.assets(), path_base=config.out_dir)


def cmd_export(args: argparse.Namespace, config: RunConfig) -> int:
    schema = default_schema()
    dataset = _merged_dataset(config, schema)
    csv_path = os.path.join(config.out_dir, "dataset.csv")
    geojson_path = os.path.join(config.out_dir, "dataset.geojson")
    n_csv = export_csv(dataset, csv_path, schema)
    n_geo = export_geojson(dataset, geojson_path, schema)
    print(f"csv: {n_csv} rows -> {csv_path}")
    print(f"geojson: {n_geo} features -> {geojson_path}")
    if dataset.orphan_count:
        print(f"dropped {dataset.orphan_count} annotation(s) without a matching building")
    if not dataset.rows:
        print("dataset is empty", file=sys.stderr)
        return EMPTY_RESULT
    report = summarize(dataset, schema)
    write_summary(report, os.path.join(config.out_dir, "summary.json"),
                  os.path.join(config.out_dir, "summary.txt"))
    print(f"summary -> {os.path.join(config.out_dir, 'summary.json')}")
    return OK


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    schema = default_schema()
    dataset = _merged_dataset(config, schema)
    try:
        benchmark = read_benchmark_csv(args.benchmark)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot use benchmark {args.benchmark}: {exc}") from exc
    try:
        report = evaluate(dataset, benchmark)
    except NoMatchedPairs as exc:
        print(f"no matched pairs: {exc}", file=sys.stderr)
        return EMPTY_RESULT
    print(report.render_text(), end="")
    with open(os.path.join(config.out_dir, "eval_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json_obj(), fh, indent=2)
        fh.write("\n")
    return OK


def cmd_run(args: argparse.Namespace, config: RunConfig) -> int:
    """Full pipeline; completed stages are detected from their artifacts."""
    schema = default_schema()
    _write_stage_artifacts(config, schema)
    print("stage indicators: schema.json + prompt.txt written")

    buildings_dir = os.path.join(config.out_dir, BUILDINGS_DIR)
    if os.path.isdir(buildings_dir) and any(
            name.endswith(".jsonl") for name in os.listdir(buildings_dir)):
        print("stage buildings: store exists, skipping fetch")
    else:
        code = cmd_buildings(args, config)
        if code != OK:
            return code
        print("stage buildings: done")

    code = cmd_sample(args, config)
    if code != OK:
        return code
    print("stage sample: done")

    code = cmd_annotate(args, config)
    if code != OK:
        return code
    print("stage annotate: done")

    code = cmd_export(args, config)
    if code != OK:
        return code
    print("stage export: done")
    return OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FACADEATLAS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        return args.func(args, config)
    except (ConfigError, EmptyQuery) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except _EmptyResult as exc:
        print(str(exc), file=sys.stderr)
        return EMPTY_RESULT
    except (EmptyDataset,) as exc:
        print(str(exc), file=sys.stderr)
        return EMPTY_RESULT
    except FacadeAtlasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
