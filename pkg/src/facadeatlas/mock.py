"""Offline fixture-backed clients so the whole pipeline runs without APIs.

The committed fixture city (ten buildings with panoramas and canned
model responses) lives in the package's fixtures directory; ``--mock``
wires these clients in place of the HTTP ones.
"""

from __future__ import annotations

import json
from importlib import resources

from .errors import EmptyQuery
from .geo import BoundingBox, GeoPoint, haversine_distance_m
from .osm import BuildingRecord, PlaceMatch, parse_nominatim_response, parse_overpass_response
from .streetview import CaptureParams, PanoramaRef, PanoStatus

# All mock timestamps are fixed so repeated mock runs are byte-identical.
MOCK_EPOCH = 0.0


def mock_clock() -> float:
    return MOCK_EPOCH


def fixture_path(name: str) -> str:
    return str(resources.files("facadeatlas").joinpath("fixtures", name))


def _load_json(name: str):
    with resources.files("facadeatlas").joinpath("fixtures", name).open("r") as fh:
        return json.load(fh)


class FixtureGeocoder:
    """Serves the committed geocoding fixture for the fixture city."""

    def __init__(self):
        self._matches = _load_json("nominatim_amsterdam.json")

    def geocode_city(self, query: str, limit: int = 5) -> list[PlaceMatch]:
        if not query or not query.strip():
            raise EmptyQuery("geocoding query is empty")
        if "amsterdam" not in query.lower():
            return []
        return parse_nominatim_response(self._matches)[:limit]


class FixtureOverpass:
    """Serves the committed Overpass fixture, filtered to the query."""

    def __init__(self):
        self._records = parse_overpass_response(json.dumps(_load_json("overpass_buildings.json")))

    def fetch_buildings(self, bbox: BoundingBox,
                        type_filter: list[str] | None = None) -> list[BuildingRecord]:
        records = [r for r in self._records if bbox.contains(r.center)]
        if type_filter:
            records = [r for r in records if r.building_type in type_filter]
        return records


class FixtureStreetView:
    """Nearest-panorama metadata and a fixed fixture image."""

    def __init__(self):
        self._panos = [(p["pano_id"], GeoPoint(p["lat"], p["lon"]))
                       for p in _load_json("panoramas.json")]
        with resources.files("facadeatlas").joinpath("fixtures", "pano_600x300.jpg").open("rb") as fh:
            self._image = fh.read()
        self.metadata_calls = 0
        self.image_calls = 0

    def metadata(self, location: GeoPoint, radius_m: float) -> PanoramaRef:
        self.metadata_calls += 1
        best = None
        best_d = float("inf")
        for pano_id, pano_loc in self._panos:
            d = haversine_distance_m(location, pano_loc)
            if d <= radius_m and d < best_d:
                best, best_d = (pano_id, pano_loc), d
        if best is None:
            return PanoramaRef("", None, PanoStatus.ZERO_RESULTS)
        return PanoramaRef(best[0], best[1], PanoStatus.OK)

    def image(self, pano_id: str, params: CaptureParams) -> bytes:
        self.image_calls += 1
        return self._image
