#!/usr/bin/env python3
"""Regenerate the committed offline fixtures (mock city, panoramas, images).

The mock city is a 10-building grid inside the Amsterdam bounding box:
eight ways with footprint geometry and two relations with centers only.
Every building has a dedicated panorama placed due south of its centroid;
two buildings need the expanded search radii (40 m and 50 m bands) so the
offline pipeline exercises the radius schedule.
"""

from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from PIL import Image, ImageDraw

from facadeatlas.geo import BoundingBox, GeoPoint, haversine_distance_m

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "src", "facadeatlas", "fixtures")

CITY_BBOX = BoundingBox(south=52.3690, west=4.8890, north=52.3722, east=4.8932)

# (building_id, element type, numeric id, lat, lon, building tag, extra tags)
BUILDINGS = [
    ("way/1001", "way", 1001, 52.3697, 4.8900, "house",
     {"addr:street": "Keizersgracht", "addr:housenumber": "12", "addr:city": "Amsterdam"}),
    ("way/1002", "way", 1002, 52.3697, 4.8910, "house",
     {"addr:street": "Keizersgracht", "addr:housenumber": "14"}),
    ("way/1003", "way", 1003, 52.3697, 4.8920, "house", {}),
    ("way/1004", "way", 1004, 52.3703, 4.8900, "house", {"addr:city": "Amsterdam"}),
    ("way/1005", "way", 1005, 52.3703, 4.8910, "retail",
     {"addr:street": "Leidsestraat", "addr:housenumber": "3", "addr:city": "Amsterdam"}),
    ("way/1006", "way", 1006, 52.3703, 4.8920, "retail", {}),
    ("way/1007", "way", 1007, 52.3709, 4.8900, "yes", {}),
    ("way/1008", "way", 1008, 52.3709, 4.8910, "yes", {}),
    ("relation/2001", "relation", 2001, 52.3709, 4.8920, "retail", {"type": "multipolygon"}),
    ("relation/2002", "relation", 2002, 52.3715, 4.8910, "yes", {"type": "multipolygon"}),
]

# Panorama offset south of the centroid, in degrees latitude. The default
# lands inside the 30 m band; way/1004 inside (30, 40]; relation/2002
# inside (40, 50].
PANO_OFFSET = {bid: 1.5e-4 for bid, *_ in BUILDINGS}
PANO_OFFSET["way/1004"] = 3.2e-4
PANO_OFFSET["relation/2002"] = 4.1e-4
EXPECTED_BAND = {bid: (0.0, 30.0) for bid, *_ in BUILDINGS}
EXPECTED_BAND["way/1004"] = (30.0, 40.0)
EXPECTED_BAND["relation/2002"] = (40.0, 50.0)

HALF_LAT = 7e-5   # footprint half-height, ~7.8 m
HALF_LON = 1.1e-4  # footprint half-width, ~7.5 m


def footprint(lat: float, lon: float) -> list[dict]:
    corners = [
        (lat - HALF_LAT, lon - HALF_LON),
        (lat - HALF_LAT, lon + HALF_LON),
        (lat + HALF_LAT, lon + HALF_LON),
        (lat + HALF_LAT, lon - HALF_LON),
        (lat - HALF_LAT, lon - HALF_LON),
    ]
    return [{"lat": round(a, 7), "lon": round(o, 7)} for a, o in corners]


def make_overpass() -> dict:
    elements = []
    for building_id, el_type, el_id, lat, lon, tag, extra in BUILDINGS:
        tags = {"building": tag, **extra}
        if el_type == "way":
            elements.append({
                "type": "way", "id": el_id,
                "bounds": {"minlat": round(lat - HALF_LAT, 7), "minlon": round(lon - HALF_LON, 7),
                           "maxlat": round(lat + HALF_LAT, 7), "maxlon": round(lon + HALF_LON, 7)},
                "geometry": footprint(lat, lon),
                "tags": tags,
            })
        else:
            elements.append({
                "type": "relation", "id": el_id,
                "center": {"lat": lat, "lon": lon},
                "tags": tags,
            })
    return {
        "version": 0.6,
        "generator": "Overpass API 0.7.62",
        "osm3s": {
            "timestamp_osm_base": "2025-11-02T00:00:00Z",
            "copyright": "The data included in this document is from www.openstreetmap.org. "
                         "The data is made available under ODbL.",
        },
        "elements": elements,
    }


def make_panoramas() -> list[dict]:
    panos = []
    for building_id, _, _, lat, lon, _, _ in BUILDINGS:
        panos.append({
            "pano_id": "pano_" + building_id.replace("/", "_"),
            "lat": round(lat - PANO_OFFSET[building_id], 7),
            "lon": lon,
        })
    return panos


def check_geometry(panos: list[dict]) -> None:
    """Simulate the 30/40/50 m search: each building must find its own
    panorama, at the radius step its band prescribes."""
    locations = {bid: GeoPoint(lat, lon) for bid, _, _, lat, lon, _, _ in BUILDINGS}
    pano_points = [(p["pano_id"], GeoPoint(p["lat"], p["lon"])) for p in panos]
    for building_id, center in locations.items():
        assert CITY_BBOX.contains(center), f"{building_id} outside the fixture bbox"
        own_id = "pano_" + building_id.replace("/", "_")
        lo, hi = EXPECTED_BAND[building_id]
        for radius in (30.0, 40.0, 50.0):
            within = sorted((haversine_distance_m(center, loc), pid)
                            for pid, loc in pano_points
                            if haversine_distance_m(center, loc) <= radius)
            if radius < hi:
                assert not within, f"{building_id}: unexpected pano inside {radius} m"
            else:
                assert within and within[0][1] == own_id, \
                    f"{building_id}: nearest pano at {radius} m is {within[:1]}"
                assert lo < within[0][0] <= hi, \
                    f"{building_id}: own pano at {within[0][0]:.1f} m, want ({lo}, {hi}]"
                break
    print(f"geometry ok: {len(locations)} buildings, {len(pano_points)} panoramas")


NOMINATIM_AMSTERDAM = [
    {
        "place_id": 259127396,
        "licence": "Data © OpenStreetMap contributors, ODbL 1.0. http://osm.org/copyright",
        "osm_type": "relation",
        "osm_id": 271110,
        "lat": "52.3730796",
        "lon": "4.8924534",
        "class": "boundary",
        "type": "administrative",
        "place_rank": 16,
        "importance": 0.7739554267004959,
        "addresstype": "city",
        "name": "Amsterdam",
        "display_name": "Amsterdam, Noord-Holland, Nederland",
        "boundingbox": ["52.2781742", "52.4310638", "4.7288019", "5.0791622"],
    },
    {
        "place_id": 318563446,
        "licence": "Data © OpenStreetMap contributors, ODbL 1.0. http://osm.org/copyright",
        "osm_type": "relation",
        "osm_id": 128140,
        "lat": "42.9386857",
        "lon": "-74.1907483",
        "class": "boundary",
        "type": "administrative",
        "place_rank": 16,
        "importance": 0.4645061324832,
        "addresstype": "city",
        "name": "Amsterdam",
        "display_name": "Amsterdam, Montgomery County, New York, United States",
        "boundingbox": ["42.9233013", "42.9559874", "-74.2107583", "-74.1667213"],
    },
]


BASELINE = {
    "architectural_style": "modernism",
    "building_type": "single_family_houses",
    "relative_location": "on_the_surface",
    "colour": "red brick",
    "floor_to_floor_height": "approximately 3m",
    "num_doors_windows": "doors=1; windows=6",
    "num_floors": "3",
    "wwr": "30%",
    "glazing_type": "double",
    "window_colour": "white",
    "material": "brick",
    "material_classification": "natural_materials",
    "num_vertices": "4",
    "vertical_greenery_type": "unknown",
    "roof_type": "lightweight",
    "num_aircon_units": "none",
    "aircon_placement_type": "unknown",
    "street_type": "residential street",
    "neighbouring_buildings": "2 similar buildings",
    "greening_conditions": "3 trees, 1 grasslands",
    "street_facilities": "1 roads, 2 parking lots",
    "public_transport": "none",
    "human_perceptual_ratings": "complex=low; original=medium; ordered=high; pleasing=medium; boring=low",
    "building_style": "somewhat_historical",
    "exterior_complexity": "moderate",
    "streetscape_perception_scores": ("safer=high; wealthier=medium; livelier=medium; "
                                      "more_beautiful=high; more_depressing=low; more_boring=low"),
}

OVERRIDES = {
    "way/1001": {},
    "way/1002": {
        "building_style": "somewhat_modern",
        "floor_to_floor_height": "2.8m",
        "num_floors": "2",
        "wwr": "0.25",
        "num_doors_windows": "2 doors and approximately 8 windows",
        "greening_conditions": "2 trees",
    },
    "way/1003": {
        # Only three of six streetscape dimensions: majority-absent, so
        # this indicator stays unparseable for this building.
        "streetscape_perception_scores": "safer=high; wealthier=medium; livelier=low",
        "colour": "light brown",
    },
    "way/1004": {
        "wwr": "approximately 35%",
        "roof_type": "green",
        "building_style": "historical",
        "floor_to_floor_height": "approximately 2.6m",
    },
    "way/1005": {
        "building_type": "non_residential_buildings",
        "wwr": "approximately 0.45",
        "material": "glass product",
        "material_classification": "alternative_materials",
        "building_style": "modern",
        "num_floors": "1",
        "street_type": "local street",
    },
    "way/1006": {
        "building_type": "non_residential_buildings",
        "num_vertices": "6",
        "num_aircon_units": "approximately 3",
        "aircon_placement_type": "horizontal",
        "public_transport": "2 bus stops",
    },
    "way/1007": {
        "wwr": "unknown",
        "colour": "grey",
        "vertical_greenery_type": "panel_type",
        "architectural_style": "art deco",
    },
    "way/1008": {
        "wwr": "20%",
        "greening_conditions": "2 trees",
        "window_colour": "grey",
    },
    "relation/2001": {
        "building_type": "non_residential_buildings",
        "glazing_type": "triple",
        "building_style": "modern",
        "num_floors": "4",
    },
    "relation/2002": {
        "building_type": "multiple_family_houses",
        "num_floors": "approximately 12",
        "floor_to_floor_height": "approximately 2.9m",
        "wwr": "40%",
    },
}


def render_response(fields: dict[str, str], markdown: bool = False) -> str:
    lines = []
    for key, value in fields.items():
        if markdown:
            lines.append(f"- **{key}**: {value}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def make_llm_responses() -> dict[str, str]:
    responses = {}
    for building_id, *_ in BUILDINGS:
        fields = dict(BASELINE)
        fields.update(OVERRIDES[building_id])
        responses[building_id] = render_response(fields, markdown=(building_id == "way/1003"))
    return responses


def make_image(path: str) -> None:
    img = Image.new("RGB", (600, 300), (168, 205, 235))
    draw = ImageDraw.Draw(img)
    draw.rectangle([0, 190, 600, 300], fill=(96, 96, 100))        # street
    draw.rectangle([140, 60, 460, 200], fill=(182, 98, 70))       # facade
    draw.polygon([(120, 64), (300, 18), (480, 64)], fill=(120, 58, 44))
    for x in range(170, 430, 70):                                  # windows
        for y in (84, 132):
            draw.rectangle([x, y, x + 34, y + 32], fill=(218, 228, 240))
    draw.rectangle([280, 140, 320, 200], fill=(84, 50, 38))       # door
    img.save(path, format="JPEG", quality=85)


def dump(obj, name: str) -> None:
    path = os.path.join(FIXTURES, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    print(f"wrote {path}")


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    panos = make_panoramas()
    check_geometry(panos)
    dump(make_overpass(), "overpass_buildings.json")
    dump(panos, "panoramas.json")
    dump(NOMINATIM_AMSTERDAM, "nominatim_amsterdam.json")
    dump([], "nominatim_empty.json")
    dump(make_llm_responses(), "llm_responses.json")
    make_image(os.path.join(FIXTURES, "pano_600x300.jpg"))
    print(f"wrote {os.path.join(FIXTURES, 'pano_600x300.jpg')}")


if __name__ == "__main__":
    main()
