"""Street-view sampling: building selection, panorama search, image capture.

The camera heading for each capture is the initial bearing from the
panorama toward the building centroid, so the image faces the facade
rather than the opposite side of the street.
"""

from __future__ import annotations

import io
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum

import requests
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, IdenticalPoints, NetworkError, QuotaExceeded
from .geo import GeoPoint, initial_bearing_deg
from .osm import USER_AGENT, BuildingRecord
from .ratelimit import RateLimiter

logger = logging.getLogger(__name__)

DEFAULT_RADII_M = (30.0, 40.0, 50.0)
DEFAULT_METADATA_URL = "https://maps.googleapis.com/maps/api/streetview/metadata"
DEFAULT_IMAGE_URL = "https://maps.googleapis.com/maps/api/streetview"


class PanoStatus(Enum):
    OK = "OK"
    ZERO_RESULTS = "ZERO_RESULTS"
    ERROR = "ERROR"


@dataclass(frozen=True)
class PanoramaRef:
    pano_id: str
    location: GeoPoint | None
    status: PanoStatus

    def __post_init__(self):
        if self.status is PanoStatus.OK and (not self.pano_id or self.location is None):
            raise ValueError("OK panorama needs a pano_id and a location")


@dataclass(frozen=True)
class CaptureParams:
    width: int = 600
    height: int = 300
    heading_deg: float = 0.0
    pitch_deg: float = 10.0
    fov_deg: float = 90.0

    def __post_init__(self):
        if not 0.0 <= self.heading_deg < 360.0:
            raise ValueError(f"heading out of range: {self.heading_deg}")

    @property
    def size(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class ImageAsset:
    building_id: str
    file_path: str
    pano_id: str
    params: CaptureParams
    acquired_at: str
    heading_fallback: bool = False


def sanitize_id(building_id: str) -> str:
    return re.sub(r"[/\\\0]", "_", building_id)


def sample_buildings(records: list[BuildingRecord], seed: int = 0,
                     per_type_limit: int | None = None) -> list[BuildingRecord]:
    """Deterministic uniform sample without replacement within each type.

    The per-type draw is seeded by (seed, building_type), so adding a new
    type never disturbs the selection made for the others. Output is
    sorted by building_id.
    """
    if per_type_limit is not None and per_type_limit <= 0:
        return []
    by_type: dict[str, list[BuildingRecord]] = {}
    for rec in records:
        by_type.setdefault(rec.building_type, []).append(rec)
    chosen: list[BuildingRecord] = []
    for building_type in sorted(by_type):
        group = sorted(by_type[building_type], key=lambda r: r.building_id)
        if per_type_limit is None or per_type_limit >= len(group):
            chosen.extend(group)
            continue
        rng = random.Random(f"{seed}|{building_type}")
        chosen.extend(rng.sample(group, per_type_limit))
    return sorted(chosen, key=lambda r: r.building_id)


class StreetViewClient:
    """HTTP client for panorama metadata and static images."""

    def __init__(self, metadata_url: str = DEFAULT_METADATA_URL,
                 image_url: str = DEFAULT_IMAGE_URL, api_key: str = "",
                 timeout_s: float = 30.0, max_retries: int = 3,
                 limiter: RateLimiter | None = None,
                 session: requests.Session | None = None, sleep=time.sleep):
        self.metadata_url = metadata_url
        self.image_url = image_url
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.limiter = limiter or RateLimiter(None)
        self.session = session or requests.Session()
        self._sleep = sleep

    def _get(self, url: str, params: dict) -> requests.Response:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            self.limiter.acquire()
            try:
                resp = self.session.get(url, params=params,
                                        headers={"User-Agent": USER_AGENT},
                                        timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code == 429:
                raise QuotaExceeded("street-view endpoint returned HTTP 429")
            if resp.status_code >= 500:
                last_exc = NetworkError(f"street-view endpoint returned HTTP {resp.status_code}")
                continue
            return resp
        raise NetworkError(f"street-view request failed after retries: {last_exc}")

    def metadata(self, location: GeoPoint, radius_m: float) -> PanoramaRef:
        params = {
            "location": f"{location.lat_deg},{location.lon_deg}",
            "radius": str(int(radius_m)),
        }
        if self.api_key:
            params["key"] = self.api_key
        resp = self._get(self.metadata_url, params)
        try:
            payload = resp.json()
        except ValueError as exc:
            raise NetworkError(f"metadata response not JSON: {exc}") from exc
        status = payload.get("status", "ERROR")
        if status == "OK":
            loc = payload.get("location", {})
            lat = loc.get("lat")
            lon = loc.get("lng", loc.get("lon"))
            return PanoramaRef(str(payload.get("pano_id", "")), GeoPoint(float(lat), float(lon)),
                               PanoStatus.OK)
        if status in ("ZERO_RESULTS", "NOT_FOUND"):
            return PanoramaRef("", None, PanoStatus.ZERO_RESULTS)
        if status == "OVER_QUERY_LIMIT":
            raise QuotaExceeded("street-view metadata quota exhausted")
        raise NetworkError(f"street-view metadata status {status}")

    def image(self, pano_id: str, params: CaptureParams) -> bytes:
        query = {
            "size": params.size,
            "pano": pano_id,
            "heading": f"{params.heading_deg:.6f}",
            "pitch": f"{params.pitch_deg:.6f}",
            "fov": f"{params.fov_deg:.6f}",
        }
        if self.api_key:
            query["key"] = self.api_key
        return self._get(self.image_url, query).content


def find_panorama(center: GeoPoint, client, radii_m=DEFAULT_RADII_M) -> PanoramaRef | None:
    """Nearest panorama within an expanding radius schedule.

    Tries each radius in order and returns the first OK hit; None after
    the schedule is exhausted. Makes at most len(radii_m) metadata calls.
    """
    radii = [float(r) for r in radii_m]
    if not radii or any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"radius schedule must be strictly increasing and positive: {radii}")
    for radius in radii:
        ref = client.metadata(center, radius)
        if ref.status is PanoStatus.OK:
            return ref
    return None


def compute_heading(pano_location: GeoPoint, building_center: GeoPoint) -> float:
    """Camera heading: the initial bearing from the panorama to the building.

    Raises IdenticalPoints when the panorama sits exactly on the centroid;
    callers fall back to 0 and flag the asset.
    """
    return initial_bearing_deg(pano_location, building_center)


def fetch_image(ref: PanoramaRef, params: CaptureParams, building_id: str,
                out_dir: str, client, store: "ImageStore | None" = None,
                now=time.time, heading_fallback: bool = False) -> ImageAsset:
    """Download (or reuse) the facade image for one building.

    Idempotent: when the index already has this building with the same
    pano and params and the file is still there, no request is made.
    """
    if ref.status is not PanoStatus.OK:
        raise ValueError("fetch_image needs an OK panorama")
    path = os.path.join(out_dir, f"{sanitize_id(building_id)}.jpg")

    if store is not None:
        existing = store.lookup(building_id)
        if (existing is not None and existing.pano_id == ref.pano_id
                and existing.params == params and os.path.exists(existing.file_path)):
            return existing

    payload = client.image(ref.pano_id, params)
    try:
        with Image.open(io.BytesIO(payload)) as img:
            width, height = img.size
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{building_id}: payload is not an image: {exc}") from exc
    if (width, height) != (params.width, params.height):
        raise DecodeError(f"{building_id}: image is {width}x{height}, "
                          f"expected {params.size}")

    os.makedirs(out_dir, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)

    acquired = datetime.fromtimestamp(now(), tz=timezone.utc).isoformat()
    asset = ImageAsset(building_id=building_id, file_path=path, pano_id=ref.pano_id,
                       params=params, acquired_at=acquired, heading_fallback=heading_fallback)
    if store is not None:
        store.append(asset)
    return asset


class ImageStore:
    """Image directory plus a serialized JSONL index of captured assets."""

    INDEX_NAME = "images_index.jsonl"

    def __init__(self, root: str):
        self.root = root
        self.index_path = os.path.join(root, self.INDEX_NAME)
        self._lock = threading.Lock()
        self._entries: dict[str, ImageAsset] = {}
        os.makedirs(root, exist_ok=True)
        self._load()

    def _load(self) -> None:
        if not os.path.exists(self.index_path):
            return
        with open(self.index_path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    asset = ImageAsset(
                        building_id=obj["building_id"],
                        file_path=os.path.join(self.root, obj["path"]),
                        pano_id=obj["pano_id"],
                        params=CaptureParams(width=obj["width"], height=obj["height"],
                                             heading_deg=obj["heading"], pitch_deg=obj["pitch"],
                                             fov_deg=obj["fov"]),
                        acquired_at=obj["acquired_at"],
                        heading_fallback=bool(obj.get("heading_fallback", False)),
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    logger.warning("%s: skipping malformed index line %d: %s",
                                   self.index_path, line_no, exc)
                    continue
                self._entries[asset.building_id] = asset

    def lookup(self, building_id: str) -> ImageAsset | None:
        with self._lock:
            return self._entries.get(building_id)

    def append(self, asset: ImageAsset) -> None:
        # Paths are stored relative to the store root so a run directory
        # can be moved (or compared against another) without rewriting.
        obj = {
            "building_id": asset.building_id,
            "pano_id": asset.pano_id,
            "heading": asset.params.heading_deg,
            "pitch": asset.params.pitch_deg,
            "fov": asset.params.fov_deg,
            "acquired_at": asset.acquired_at,
            "path": os.path.relpath(asset.file_path, self.root),
            "width": asset.params.width,
            "height": asset.params.height,
            "heading_fallback": asset.heading_fallback,
        }
        with self._lock:
            self._entries[asset.building_id] = asset
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
                fh.flush()

    def assets(self) -> dict[str, ImageAsset]:
        with self._lock:
            return dict(self._entries)


@dataclass
class SamplingStats:
    processed: int = 0
    no_panorama: int = 0
    failed: int = 0
    no_panorama_ids: list[str] = field(default_factory=list)
    failed_ids: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.processed + self.no_panorama + self.failed


def run_sampling(records: list[BuildingRecord], client, store: ImageStore,
                 capture: CaptureParams = CaptureParams(),
                 radii_m=DEFAULT_RADII_M, workers: int = 8,
                 now=time.time) -> SamplingStats:
    """Capture one facade image per building through a bounded worker pool.

    Every building ends in exactly one of processed / no_panorama /
    failed. Buildings already present in the store index with the same
    capture settings are counted as processed without any network call.
    """
    stats = SamplingStats()
    stats_lock = threading.Lock()

    def process(rec: BuildingRecord) -> None:
        try:
            existing = store.lookup(rec.building_id)
            if existing is not None and _params_match(existing.params, capture) \
                    and os.path.exists(existing.file_path):
                with stats_lock:
                    stats.processed += 1
                return
            ref = find_panorama(rec.center, client, radii_m)
            if ref is None:
                with stats_lock:
                    stats.no_panorama += 1
                    stats.no_panorama_ids.append(rec.building_id)
                return
            heading_fallback = False
            try:
                heading = compute_heading(ref.location, rec.center)
            except IdenticalPoints:
                logger.warning("%s: panorama sits on the centroid, heading 0", rec.building_id)
                heading, heading_fallback = 0.0, True
            params = replace(capture, heading_deg=heading)
            out_dir = os.path.join(store.root, "images", _type_dir(rec.building_type))
            fetch_image(ref, params, rec.building_id, out_dir, client, store=store,
                        now=now, heading_fallback=heading_fallback)
            with stats_lock:
                stats.processed += 1
        except Exception as exc:  # per-building failures never sink the run
            logger.warning("%s: sampling failed: %s", rec.building_id, exc)
            with stats_lock:
                stats.failed += 1
                stats.failed_ids.append(rec.building_id)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(process, records))
    return stats


def _params_match(stored: CaptureParams, requested: CaptureParams) -> bool:
    """Same capture settings apart from the per-building heading."""
    return (stored.width == requested.width and stored.height == requested.height
            and stored.pitch_deg == requested.pitch_deg
            and stored.fov_deg == requested.fov_deg)


def _type_dir(building_type: str) -> str:
    from .osm import _sanitize_type

    return _sanitize_type(building_type)
