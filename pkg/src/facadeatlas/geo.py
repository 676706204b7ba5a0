"""Geodesic primitives: distances, bearings, centroids, bounding boxes.

All coordinates are WGS84 degrees. Distances use a mean-radius sphere,
which is accurate well below the metre at the sub-100 m ranges this
pipeline cares about.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import DegenerateRing, IdenticalPoints

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0

# Below this shoelace area (in the local plane's squared-degree units) a
# ring is treated as degenerate and the vertex mean is used instead.
_DEGENERATE_AREA = 1e-10


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate pair in degrees."""

    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        object.__setattr__(self, "lat_deg", float(self.lat_deg))
        object.__setattr__(self, "lon_deg", float(self.lon_deg))
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True)
class BoundingBox:
    """Geographic box. west > east is allowed and means antimeridian wrap."""

    south: float
    west: float
    north: float
    east: float

    def __post_init__(self):
        for name in ("south", "west", "north", "east"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.south > self.north:
            raise ValueError(f"south {self.south} exceeds north {self.north}")
        for name in ("south", "north"):
            v = getattr(self, name)
            if not -90.0 <= v <= 90.0:
                raise ValueError(f"{name} out of range: {v}")
        for name in ("west", "east"):
            v = getattr(self, name)
            if not -180.0 <= v <= 180.0:
                raise ValueError(f"{name} out of range: {v}")

    @property
    def wraps(self) -> bool:
        return self.west > self.east

    def contains(self, p: GeoPoint) -> bool:
        return bbox_contains(self, p)

    def split4(self) -> list["BoundingBox"]:
        """Four quadrants, used to subdivide oversized Overpass queries."""
        mid_lat = (self.south + self.north) / 2.0
        width = (self.east - self.west) % 360.0
        if width == 0.0 and self.west != self.east:
            width = 360.0
        mid_lon = _wrap_lon(self.west + width / 2.0)
        return [
            BoundingBox(self.south, self.west, mid_lat, mid_lon),
            BoundingBox(self.south, mid_lon, mid_lat, self.east),
            BoundingBox(mid_lat, self.west, self.north, mid_lon),
            BoundingBox(mid_lat, mid_lon, self.north, self.east),
        ]


@dataclass(frozen=True)
class PolygonRing:
    """Closed ring of GeoPoints; first and last vertex are identical."""

    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 4:
            raise ValueError("ring needs at least 4 stored vertices")
        if self.vertices[0] != self.vertices[-1]:
            raise ValueError("ring is not closed (first != last)")

    @classmethod
    def closed(cls, points: list[GeoPoint] | tuple[GeoPoint, ...]) -> "PolygonRing":
        """Build a ring, appending the closing vertex when missing."""
        pts = tuple(points)
        if pts and pts[0] != pts[-1]:
            pts = pts + (pts[0],)
        return cls(pts)

    def open_vertices(self) -> tuple[GeoPoint, ...]:
        return self.vertices[:-1]


def _wrap_lon(lon: float) -> float:
    wrapped = (lon + 180.0) % 360.0 - 180.0
    # Keep 180 as 180 rather than -180 so split boxes stay valid.
    if wrapped == -180.0 and lon > 0:
        return 180.0
    return wrapped


def haversine_distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres on the mean-radius sphere."""
    if a == b:
        return 0.0
    phi1 = math.radians(a.lat_deg)
    phi2 = math.radians(b.lat_deg)
    d_phi = math.radians(b.lat_deg - a.lat_deg)
    d_lam = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing_deg(origin: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle azimuth from origin toward target.

    0 = true north, 90 = east, normalized to [0, 360).

    Raises:
        IdenticalPoints: bearing is undefined when the points coincide.
    """
    if origin == target:
        raise IdenticalPoints(f"bearing undefined at {origin}")
    phi1 = math.radians(origin.lat_deg)
    phi2 = math.radians(target.lat_deg)
    d_lam = math.radians(target.lon_deg - origin.lon_deg)
    y = math.sin(d_lam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(d_lam)
    bearing = math.degrees(math.atan2(y, x)) % 360.0
    return 0.0 if bearing == 360.0 else bearing


def _local_plane(ring: PolygonRing) -> tuple[list[tuple[float, float]], float, float, float]:
    """Project vertices to an equirectangular plane at the ring's mean latitude.

    Coordinates are centred on (mean latitude, first longitude) before the
    shoelace pass, which avoids the cancellation error that working in
    absolute degrees would introduce.

    Returns (xy pairs for the closed ring, cos of the anchor latitude,
    anchor latitude, anchor longitude).
    """
    opens = ring.open_vertices()
    mean_lat = sum(p.lat_deg for p in opens) / len(opens)
    cos_lat = math.cos(math.radians(mean_lat))
    # Unwrap longitudes around the first vertex so rings straddling the
    # antimeridian stay contiguous in the plane.
    lon0 = ring.vertices[0].lon_deg
    xy = []
    for p in ring.vertices:
        d_lon = (p.lon_deg - lon0 + 180.0) % 360.0 - 180.0
        xy.append((d_lon * cos_lat, p.lat_deg - mean_lat))
    return xy, cos_lat, mean_lat, lon0


def footprint_centroid(ring: PolygonRing) -> GeoPoint:
    """Area-weighted (shoelace) centroid of a footprint ring.

    Computed in a local equirectangular plane anchored at the ring's mean
    latitude. Falls back to the vertex mean for degenerate (near-zero
    area) rings.

    Raises:
        DegenerateRing: fewer than three distinct vertices.
    """
    distinct = set(ring.open_vertices())
    if len(distinct) < 3:
        raise DegenerateRing(f"only {len(distinct)} distinct vertices")
    xy, cos_lat, mean_lat, lon0 = _local_plane(ring)

    area2 = 0.0  # twice the signed area
    cx = 0.0
    cy = 0.0
    for (x0, y0), (x1, y1) in zip(xy, xy[1:]):
        cross = x0 * y1 - x1 * y0
        area2 += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross

    if abs(area2 / 2.0) < _DEGENERATE_AREA:
        logger.warning("degenerate ring (area ~ 0), falling back to vertex mean")
        x = sum(x for x, _ in xy[:-1]) / (len(xy) - 1)
        return GeoPoint(mean_lat, _wrap_lon(lon0 + x / cos_lat))

    x = cx / (3.0 * area2)
    y = cy / (3.0 * area2)
    return GeoPoint(mean_lat + y, _wrap_lon(lon0 + x / cos_lat))


def bbox_contains(box: BoundingBox, p: GeoPoint) -> bool:
    """Inclusive containment test, honouring antimeridian wrap."""
    if not box.south <= p.lat_deg <= box.north:
        return False
    if box.wraps:
        return p.lon_deg >= box.west or p.lon_deg <= box.east
    return box.west <= p.lon_deg <= box.east
