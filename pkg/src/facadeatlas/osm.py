"""OpenStreetMap ingestion: geocoding, Overpass queries, JSONL persistence.

Buildings are fetched as ways (with footprint geometry) and relations
(center only), parsed into BuildingRecords, and persisted as one JSONL
file per building type.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import (
    DegenerateRing,
    EmptyQuery,
    MalformedLine,
    MalformedResponse,
    NetworkError,
    RateLimited,
)
from .geo import BoundingBox, GeoPoint, PolygonRing, footprint_centroid

logger = logging.getLogger(__name__)

DEFAULT_NOMINATIM_URL = "https://nominatim.openstreetmap.org/search"
DEFAULT_OVERPASS_URL = "https://overpass-api.de/api/interpreter"
USER_AGENT = "facadeatlas/0.1 (building-exterior dataset pipeline)"

_ADDRESS_TAGS = (("addr:street", "street"), ("addr:housenumber", "housenumber"), ("addr:city", "city"))

# One in-flight request per remote endpoint (public-instance politeness).
_endpoint_locks: dict[str, threading.Lock] = {}
_endpoint_locks_guard = threading.Lock()


def _endpoint_lock(url: str) -> threading.Lock:
    with _endpoint_locks_guard:
        if url not in _endpoint_locks:
            _endpoint_locks[url] = threading.Lock()
        return _endpoint_locks[url]


@dataclass(frozen=True)
class PlaceMatch:
    """One geocoding hit for a place query."""

    display_name: str
    bbox: BoundingBox
    osm_type_and_id: str
    rank: float


@dataclass
class BuildingRecord:
    """One OSM building: id, center, type, tags, optional footprint."""

    building_id: str
    center: GeoPoint
    building_type: str
    tags: dict[str, str] = field(default_factory=dict)
    address: dict[str, str] | None = None
    footprint: PolygonRing | None = None


class NominatimClient:
    """Thin client for the Nominatim search endpoint."""

    def __init__(self, base_url: str = DEFAULT_NOMINATIM_URL, timeout_s: float = 30.0,
                 session: requests.Session | None = None):
        self.base_url = base_url
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def geocode_city(self, query: str, limit: int = 5) -> list[PlaceMatch]:
        """Resolve a place query to candidate matches, best rank first."""
        if not query or not query.strip():
            raise EmptyQuery("geocoding query is empty")
        params = {"q": query, "format": "json", "limit": str(limit)}
        headers = {"User-Agent": USER_AGENT}
        with _endpoint_lock(self.base_url):
            try:
                resp = self.session.get(self.base_url, params=params, headers=headers,
                                        timeout=self.timeout_s)
            except requests.RequestException as exc:
                raise NetworkError(f"nominatim request failed: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited("nominatim rate limit hit")
        if resp.status_code != 200:
            raise NetworkError(f"nominatim returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"nominatim response not JSON: {exc}") from exc
        return parse_nominatim_response(payload)


def parse_nominatim_response(payload: object) -> list[PlaceMatch]:
    """Turn a Nominatim JSON payload into PlaceMatches, rank descending."""
    if not isinstance(payload, list):
        raise MalformedResponse("expected a JSON array of places")
    matches = []
    for item in payload:
        try:
            s, n, w, e = (float(v) for v in item["boundingbox"])
            matches.append(PlaceMatch(
                display_name=str(item["display_name"]),
                bbox=BoundingBox(south=s, west=w, north=n, east=e),
                osm_type_and_id=f"{item.get('osm_type', '?')}/{item.get('osm_id', '?')}",
                rank=float(item.get("importance", 0.0)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad place entry: {exc}") from exc
    matches.sort(key=lambda m: -m.rank)
    return matches


def build_overpass_query(bbox: BoundingBox, type_filter: list[str] | None = None,
                         timeout_s: int = 180) -> str:
    """Overpass QL selecting buildings inside bbox.

    Ways are returned with their footprint geometry, relations with a
    computed center; both carry tags. Deterministic for fixed inputs.
    """
    coords = f"{bbox.south},{bbox.west},{bbox.north},{bbox.east}"
    if not type_filter:
        selector = '["building"]'
    elif len(type_filter) == 1:
        selector = f'["building"="{type_filter[0]}"]'
    else:
        alternation = "|".join(sorted(type_filter))
        selector = f'["building"~"^({alternation})$"]'
    return (
        f"[out:json][timeout:{timeout_s}];\n"
        f"way{selector}({coords});\n"
        "out tags geom;\n"
        f"relation{selector}({coords});\n"
        "out tags center;\n"
    )


def _element_center(el: dict) -> GeoPoint | None:
    center = el.get("center")
    if isinstance(center, dict) and "lat" in center and "lon" in center:
        return GeoPoint(float(center["lat"]), float(center["lon"]))
    if "lat" in el and "lon" in el:  # node elements carry coordinates inline
        return GeoPoint(float(el["lat"]), float(el["lon"]))
    return None


def _element_footprint(el: dict) -> PolygonRing | None:
    geometry = el.get("geometry")
    if not isinstance(geometry, list) or len(geometry) < 3:
        return None
    try:
        points = [GeoPoint(float(g["lat"]), float(g["lon"])) for g in geometry]
        return PolygonRing.closed(points)
    except (KeyError, TypeError, ValueError):
        return None


def parse_overpass_response(body: str) -> list[BuildingRecord]:
    """Parse an Overpass JSON response into building records.

    Elements without a building tag are ignored; elements with neither a
    center nor a usable footprint are skipped (counted in a warning).
    """
    try:
        payload = json.loads(body)
    except ValueError as exc:
        raise MalformedResponse(f"overpass response not JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("elements"), list):
        raise MalformedResponse("overpass response missing 'elements' array")

    records = []
    skipped = 0
    for el in payload["elements"]:
        if not isinstance(el, dict):
            skipped += 1
            continue
        tags = el.get("tags") or {}
        if not isinstance(tags, dict) or "building" not in tags:
            continue
        footprint = _element_footprint(el)
        center = _element_center(el)
        if center is None and footprint is not None:
            try:
                center = footprint_centroid(footprint)
            except DegenerateRing:
                footprint = None
        if center is None:
            skipped += 1
            continue
        el_type = el.get("type", "way")
        el_id = el.get("id", "")
        address = {out: str(tags[src]) for src, out in _ADDRESS_TAGS if src in tags} or None
        records.append(BuildingRecord(
            building_id=f"{el_type}/{el_id}",
            center=center,
            building_type=str(tags.get("building") or "yes"),
            tags={str(k): str(v) for k, v in tags.items()},
            address=address,
            footprint=footprint,
        ))
    if skipped:
        logger.warning("skipped %d element(s) without usable coordinates", skipped)
    return records


class OverpassClient:
    """Overpass endpoint client with retries and quadrant chunking."""

    def __init__(self, base_url: str = DEFAULT_OVERPASS_URL, timeout_s: float = 180.0,
                 max_retries: int = 3, backoff_base_s: float = 2.0,
                 max_elements: int = 100_000, session: requests.Session | None = None,
                 sleep=time.sleep):
        self.base_url = base_url
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.max_elements = max_elements
        self.session = session or requests.Session()
        self._sleep = sleep

    def _post(self, query: str) -> str:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
            with _endpoint_lock(self.base_url):
                try:
                    resp = self.session.post(self.base_url, data={"data": query},
                                             headers={"User-Agent": USER_AGENT},
                                             timeout=self.timeout_s)
                except requests.RequestException as exc:
                    last_exc = exc
                    continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = NetworkError(f"overpass returned HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise NetworkError(f"overpass returned HTTP {resp.status_code}")
            return resp.text
        raise NetworkError(f"overpass request failed after retries: {last_exc}")

    def fetch_buildings(self, bbox: BoundingBox, type_filter: list[str] | None = None,
                        _depth: int = 0) -> list[BuildingRecord]:
        """Fetch all buildings in bbox, splitting into quadrants when the
        response looks truncated by the element cap."""
        body = self._post(build_overpass_query(bbox, type_filter, int(self.timeout_s)))
        try:
            records = parse_overpass_response(body)
            capped = self._looks_capped(body, records)
        except MalformedResponse:
            if _depth >= 4:
                raise
            capped = True
            records = []
        if capped and _depth < 4:
            logger.warning("overpass response capped for %s; splitting into quadrants", bbox)
            merged: dict[str, BuildingRecord] = {}
            for quadrant in bbox.split4():
                for rec in self.fetch_buildings(quadrant, type_filter, _depth + 1):
                    merged.setdefault(rec.building_id, rec)
            return list(merged.values())
        return records

    def _looks_capped(self, body: str, records: list[BuildingRecord]) -> bool:
        if len(records) >= self.max_elements:
            return True
        try:
            remark = json.loads(body).get("remark", "")
        except ValueError:
            return False
        return isinstance(remark, str) and "error" in remark.lower()


def _sanitize_type(building_type: str) -> str:
    """Filesystem-safe name for a building-tag value."""
    if building_type == "yes":
        return "building_yes"
    cleaned = re.sub(r"[/\\\0]", "_", building_type)
    cleaned = re.sub(r"\s+", "_", cleaned.strip()) or "building_yes"
    return cleaned


def record_to_json_obj(rec: BuildingRecord) -> dict:
    """Stable-keyed JSON object for the JSONL store."""
    return {
        "building_id": rec.building_id,
        "lat": rec.center.lat_deg,
        "lon": rec.center.lon_deg,
        "building_type": rec.building_type,
        "address": rec.address,
        "tags": rec.tags,
        "footprint": ([[p.lat_deg, p.lon_deg] for p in rec.footprint.vertices]
                      if rec.footprint else None),
    }


def record_from_json_obj(obj: dict) -> BuildingRecord:
    footprint = None
    if obj.get("footprint"):
        footprint = PolygonRing.closed([GeoPoint(lat, lon) for lat, lon in obj["footprint"]])
    return BuildingRecord(
        building_id=obj["building_id"],
        center=GeoPoint(obj["lat"], obj["lon"]),
        building_type=obj["building_type"],
        tags=obj.get("tags") or {},
        address=obj.get("address"),
        footprint=footprint,
    )


def write_jsonl_by_type(records: list[BuildingRecord], out_dir: str) -> dict[str, str]:
    """Write one JSONL file per building type; returns type -> path.

    Files are replaced atomically (temp file + rename), so a rerun never
    leaves a partially written store behind.
    """
    by_type: dict[str, list[BuildingRecord]] = {}
    for rec in records:
        by_type.setdefault(rec.building_type, []).append(rec)

    os.makedirs(out_dir, exist_ok=True)
    paths: dict[str, str] = {}
    for building_type in sorted(by_type):
        path = os.path.join(out_dir, f"{_sanitize_type(building_type)}.jsonl")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for rec in by_type[building_type]:
                fh.write(json.dumps(record_to_json_obj(rec), ensure_ascii=False) + "\n")
        os.replace(tmp, path)
        paths[building_type] = path
    return paths


def read_jsonl(path: str, strict: bool = False) -> list[BuildingRecord]:
    """Read building records back from a JSONL file.

    In strict mode a bad line raises MalformedLine (with its number);
    otherwise bad lines are skipped with a warning.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json_obj(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                if strict:
                    raise MalformedLine(line_no, str(exc)) from exc
                logger.warning("%s: skipping malformed line %d: %s", path, line_no, exc)
    return records


def read_building_store(dir_path: str, strict: bool = False) -> list[BuildingRecord]:
    """Read every *.jsonl file in a building store directory."""
    records = []
    for name in sorted(os.listdir(dir_path)):
        if name.endswith(".jsonl"):
            records.extend(read_jsonl(os.path.join(dir_path, name), strict=strict))
    return records
