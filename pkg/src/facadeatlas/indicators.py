"""The 26-indicator building-exterior schema and its value codec.

This module owns the contract between the annotation prompt and the
parser: the prompt is generated from the schema, responses are parsed
back against the same schema, and every parse is total (statuses encode
failure, nothing raises on model output).
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction

from .errors import EmptyInput

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
PROMPT_FORMAT_VERSION = "1"

# Phrasings the model uses for "cannot tell from the image".
UNKNOWN_TOKENS = frozenset({
    "unknown", "none visible", "n/a", "na", "not applicable", "not visible",
    "unclear", "cannot determine", "cannot be determined", "indeterminate",
    "not identifiable",
})

_APPROX_WORDS = ("approximately", "approx.", "approx", "about", "around", "roughly")


class Kind(str, Enum):
    CATEGORICAL = "categorical"
    COLOR = "color"
    NUMERIC = "numeric"
    PERCENT = "percent"
    COUNT = "count"
    COUNT_MULTI = "count_multi"
    SCORE_SET = "score_set"
    FREE_TEXT = "free_text"


class ParseStatus(str, Enum):
    PARSED = "parsed"
    MISSING = "missing"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class IndicatorDef:
    key: str
    display_name: str
    kind: Kind
    explanation: str = ""
    allowed_values: tuple[str, ...] | None = None
    unit: str | None = None
    labels: tuple[str, ...] | None = None  # COUNT_MULTI sub-counts
    score_dimensions: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind is Kind.CATEGORICAL and not self.allowed_values:
            raise ValueError(f"{self.key}: categorical without allowed values")
        if self.kind is Kind.SCORE_SET and not self.score_dimensions:
            raise ValueError(f"{self.key}: score set without dimensions")


# ---------------------------------------------------------------------------
# Value model


@dataclass(frozen=True)
class Unknown:
    pass


@dataclass(frozen=True)
class Categorical:
    value: str


@dataclass(frozen=True)
class Color:
    value: str


@dataclass(frozen=True)
class Numeric:
    value: float
    approx: bool = False
    unit: str | None = None


@dataclass(frozen=True)
class Percent:
    fraction: float  # always within [0, 1]
    approx: bool = False


@dataclass(frozen=True)
class Count:
    value: int  # always >= 0
    approx: bool = False


@dataclass(frozen=True, eq=True)
class CountMulti:
    entries: tuple[tuple[str, "Count | Unknown"], ...]

    def as_dict(self) -> dict[str, "Count | Unknown"]:
        return dict(self.entries)


@dataclass(frozen=True, eq=True)
class Scores:
    levels: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.levels)


@dataclass(frozen=True)
class Text:
    value: str


IndicatorValue = (
    Unknown | Categorical | Color | Numeric | Percent | Count | CountMulti | Scores | Text
)


@dataclass(frozen=True)
class IndicatorEntry:
    value: IndicatorValue
    status: ParseStatus


IndicatorSet = dict[str, IndicatorEntry]


# ---------------------------------------------------------------------------
# Schema


def default_schema() -> list[IndicatorDef]:
    """The 26 building-exterior indicators, in canonical order."""
    c = Kind.CATEGORICAL
    return [
        IndicatorDef("architectural_style", "Architectural style", c,
                     "dominant style tradition of the facade",
                     allowed_values=("haussman", "neoclassical", "renaissance", "modernism", "others")),
        IndicatorDef("building_type", "Building type", c,
                     "use class judged from the number of units",
                     allowed_values=("single_family_houses", "multiple_family_houses",
                                     "non_residential_buildings")),
        IndicatorDef("relative_location", "Relative location", c,
                     "position of the structure relative to ground level",
                     allowed_values=("on_the_surface", "in_the_air", "underground",
                                     "across_the_surface")),
        IndicatorDef("colour", "Colour", Kind.COLOR,
                     "dominant hue of the facade, e.g. red, grey, light brown"),
        IndicatorDef("floor_to_floor_height", "Floor-to-Floor height", Kind.NUMERIC,
                     "estimated storey height in metres", unit="m"),
        IndicatorDef("num_doors_windows", "Number of Doors and Windows", Kind.COUNT_MULTI,
                     "visible doors and windows on the facade",
                     labels=("doors", "windows")),
        IndicatorDef("num_floors", "Number of Floors", Kind.COUNT,
                     "storey count visible above ground"),
        IndicatorDef("wwr", "Window-to-Wall Ratio", Kind.PERCENT,
                     "fraction of the facade area taken up by windows"),
        IndicatorDef("glazing_type", "Glazing type", c,
                     "number of glass layers in the windows",
                     allowed_values=("single", "double", "triple")),
        IndicatorDef("window_colour", "Window Colour", Kind.COLOR,
                     "hue of the exterior glazing"),
        IndicatorDef("material", "Material", Kind.FREE_TEXT,
                     "facade surface, e.g. stone, glass product, metallic finishes"),
        IndicatorDef("material_classification", "Classification of the building materials", c,
                     "sourcing class of the facade materials",
                     allowed_values=("alternative_materials", "natural_materials",
                                     "secondary_raw_materials")),
        IndicatorDef("num_vertices", "Number of vertices", Kind.COUNT,
                     "corner count of the visible outline"),
        IndicatorDef("vertical_greenery_type", "Vertical greenery type", c,
                     "kind of greenery system mounted on the facade",
                     allowed_values=("panel_type", "mini_planter", "cage_system_box")),
        IndicatorDef("roof_type", "Roof type", c,
                     "roof class from an energy point of view",
                     allowed_values=("lightweight", "green", "photovoltaic", "vents", "rubber")),
        IndicatorDef("num_aircon_units", "Number of air-con units", Kind.COUNT,
                     "outdoor air-conditioning units visible"),
        IndicatorDef("aircon_placement_type", "Air-con placement type", c,
                     "arrangement of the outdoor units",
                     allowed_values=("horizontal", "vertical")),
        IndicatorDef("street_type", "Street type", Kind.FREE_TEXT,
                     "street class in front, e.g. residential street, local street"),
        IndicatorDef("neighbouring_buildings", "Neighbouring buildings", Kind.COUNT_MULTI,
                     "nearby structures, e.g. similar buildings"),
        IndicatorDef("greening_conditions", "Greening conditions", Kind.COUNT_MULTI,
                     "green elements around the site",
                     labels=("trees", "grasslands")),
        IndicatorDef("street_facilities", "Street facilities", Kind.COUNT_MULTI,
                     "street infrastructure in view",
                     labels=("roads", "parking_lots")),
        IndicatorDef("public_transport", "Public transport", Kind.COUNT_MULTI,
                     "transit access in view",
                     labels=("subway_stations", "bus_stops")),
        IndicatorDef("human_perceptual_ratings", "Human perceptual ratings", Kind.SCORE_SET,
                     "impression levels on each listed dimension",
                     score_dimensions=("complex", "original", "ordered", "pleasing", "boring")),
        IndicatorDef("building_style", "Building style", c,
                     "style era judged from a human point of view",
                     allowed_values=("historical", "somewhat_historical", "no_significant_style",
                                     "somewhat_modern", "modern")),
        IndicatorDef("exterior_complexity", "Exterior complexity", c,
                     "visual intricacy of the facade",
                     allowed_values=("complex", "moderate", "simple")),
        IndicatorDef("streetscape_perception_scores", "Streetscape perception scores", Kind.SCORE_SET,
                     "perceived streetscape levels on each listed dimension",
                     score_dimensions=("safer", "wealthier", "livelier", "more_beautiful",
                                       "more_depressing", "more_boring")),
    ]


def schema_to_json(schema: list[IndicatorDef]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "indicators": [
            {
                "key": d.key,
                "display_name": d.display_name,
                "kind": d.kind.value,
                "explanation": d.explanation,
                "allowed_values": list(d.allowed_values) if d.allowed_values else None,
                "unit": d.unit,
                "labels": list(d.labels) if d.labels else None,
                "score_dimensions": list(d.score_dimensions) if d.score_dimensions else None,
            }
            for d in schema
        ],
    }


def schema_from_json(doc: dict) -> list[IndicatorDef]:
    defs = []
    for item in doc["indicators"]:
        defs.append(IndicatorDef(
            key=item["key"],
            display_name=item["display_name"],
            kind=Kind(item["kind"]),
            explanation=item.get("explanation", ""),
            allowed_values=tuple(item["allowed_values"]) if item.get("allowed_values") else None,
            unit=item.get("unit"),
            labels=tuple(item["labels"]) if item.get("labels") else None,
            score_dimensions=(tuple(item["score_dimensions"])
                              if item.get("score_dimensions") else None),
        ))
    return defs


# ---------------------------------------------------------------------------
# Prompt


def _prompt_line(i: int, d: IndicatorDef) -> str:
    bits = [d.explanation] if d.explanation else []
    if d.kind is Kind.CATEGORICAL:
        bits.append("one of: " + ", ".join(d.allowed_values))
    elif d.kind is Kind.NUMERIC and d.unit:
        bits.append(f"a number in {d.unit}")
    elif d.kind is Kind.PERCENT:
        bits.append('a fraction between 0 and 1, or a percentage like "30%"')
    elif d.kind is Kind.COUNT:
        bits.append("a whole number")
    elif d.kind is Kind.COUNT_MULTI and d.labels:
        bits.append("counts as " + "; ".join(f"{lab}=<n>" for lab in d.labels))
    elif d.kind is Kind.COUNT_MULTI:
        bits.append('counts as "<name>=<n>" pairs separated by ";"')
    elif d.kind is Kind.SCORE_SET:
        bits.append("levels (low, medium or high) as "
                    + "; ".join(f"{dim}=<level>" for dim in d.score_dimensions))
    return f"{i}. {d.key} ({d.display_name}): " + "; ".join(bits) + "."


def build_prompt(schema: list[IndicatorDef]) -> str:
    """Deterministic annotation prompt generated from the schema."""
    header = (
        "You are an expert surveyor of building exteriors. Study the attached "
        "street-view photo and report the indicators listed below for the main "
        "building in view.\n"
        "\n"
        "Answer with exactly one line per indicator, in the listed order, "
        "formatted as:\n"
        "<key>: <value>\n"
        "\n"
        "Rules:\n"
        '- Write "unknown" when something cannot be judged from the photo.\n'
        '- Prefix estimated quantities with "approximately".\n'
        '- Keep every answer on a single line with no extra commentary.\n'
        "\n"
        "Indicators:\n"
    )
    body = "\n".join(_prompt_line(i, d) for i, d in enumerate(schema, start=1))
    footer = f"\n\nAnswer format version {PROMPT_FORMAT_VERSION}."
    return header + body + footer


# ---------------------------------------------------------------------------
# Normalization


def _fold(text: str) -> str:
    """Key/category folding: lowercase, whitespace and hyphens to underscores."""
    return re.sub(r"[\s\-]+", "_", text.strip().lower()).strip("_")


def _fold_singular(text: str) -> str:
    folded = _fold(text)
    return folded[:-1] if folded.endswith("s") else folded


def _clean_fragment(text: str) -> str:
    """Strip markdown emphasis and a single trailing period."""
    t = text.strip().strip("`*_").strip()
    if t.endswith(".") and not re.search(r"\d\.$", t):
        t = t[:-1].strip()
    return t


def _is_unknown(text: str) -> bool:
    return text.strip().lower().rstrip(".") in UNKNOWN_TOKENS


def _strip_approx(text: str) -> tuple[str, bool]:
    t = text.strip()
    if t.startswith("~"):
        return t[1:].strip(), True
    lowered = t.lower()
    for word in _APPROX_WORDS:
        if lowered.startswith(word) and (len(t) == len(word) or not t[len(word)].isalnum()):
            return t[len(word):].strip(), True
    return t, False


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


_NUMBER_UNIT_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*([a-zA-Z]+)?$")
_METRE_UNITS = {"m", "meter", "meters", "metre", "metres"}


def normalize_numeric(text: str, kind: Kind) -> IndicatorValue | None:
    """Normalize a numeric-ish fragment; None means unparseable.

    Handles approximation prefixes, unit suffixes, percentages and bare
    ratios, and the fixed list of unknown phrasings.
    """
    if kind not in (Kind.NUMERIC, Kind.PERCENT, Kind.COUNT):
        raise ValueError(f"normalize_numeric cannot handle {kind}")
    t = _clean_fragment(text).lower()
    if not t:
        return None
    if _is_unknown(t):
        return Unknown()
    if t == "none":
        # "none" means an observed zero for counts, not a missing value.
        return Count(0) if kind is Kind.COUNT else Unknown()
    t, approx = _strip_approx(t)

    if kind is Kind.COUNT:
        if re.fullmatch(r"\d+", t):
            return Count(int(t), approx=approx)
        return None

    if kind is Kind.PERCENT:
        fraction = None
        if t.endswith("%"):
            value = _parse_float(t[:-1].strip())
            fraction = None if value is None else value / 100.0
        elif t.endswith("percent"):
            value = _parse_float(t[: -len("percent")].strip())
            fraction = None if value is None else value / 100.0
        else:
            fraction = _parse_float(t)
        if fraction is None or not 0.0 <= fraction <= 1.0:
            return None  # out-of-range ratios are rejected, never clamped
        return Percent(fraction, approx=approx)

    m = _NUMBER_UNIT_RE.match(t)
    if not m:
        return None
    value = _parse_float(m.group(1))
    if value is None:
        return None
    unit = m.group(2)
    if unit:
        unit = "m" if unit.lower() in _METRE_UNITS else unit.lower()
    return Numeric(value, approx=approx, unit=unit)


def _count_token(text: str) -> Count | Unknown | None:
    t = _clean_fragment(text).lower()
    if _is_unknown(t):
        return Unknown()
    if t == "none":
        return Count(0)
    t, approx = _strip_approx(t)
    if re.fullmatch(r"\d+", t):
        return Count(int(t), approx=approx)
    return None


_PAIR_RE = re.compile(r"^([A-Za-z][\w\s\-]*?)\s*[:=]\s*(.+)$")
_PHRASE_COUNT_RE = re.compile(r"^(~\s*)?(?:(approximately|approx\.?|about|around|roughly)\s+)?(\d+)\s+(.+)$",
                              re.IGNORECASE)


def _split_fragments(text: str) -> list[str]:
    parts = re.split(r"[;,]|\band\b", text)
    return [p.strip() for p in parts if p.strip()]


def normalize_count_multi(text: str, labels: tuple[str, ...] | None) -> IndicatorValue | None:
    """Parse labelled counts like "doors=3; windows=~2" or "3 doors and 2 windows"."""
    t = _clean_fragment(text)
    if not t:
        return None
    if _is_unknown(t):
        return Unknown()
    if t.lower() == "none":
        if labels:
            return CountMulti(tuple((lab, Count(0)) for lab in labels))
        return CountMulti(())

    found: dict[str, Count | Unknown] = {}
    declared = {_fold_singular(lab): lab for lab in labels} if labels else None
    for frag in _split_fragments(t):
        pair = _PAIR_RE.match(frag)
        if pair:
            raw_label, raw_value = pair.group(1), pair.group(2)
            value = _count_token(raw_value)
        else:
            phrase = _PHRASE_COUNT_RE.match(frag)
            if not phrase:
                continue
            approx = bool(phrase.group(1) or phrase.group(2))
            value = Count(int(phrase.group(3)), approx=approx)
            raw_label = phrase.group(4)
        if value is None:
            continue
        folded = _fold_singular(raw_label)
        if declared is not None:
            if folded in declared:
                found.setdefault(declared[folded], value)
        else:
            found.setdefault(folded, value)

    if not found:
        return None
    if labels:
        return CountMulti(tuple((lab, found.get(lab, Unknown())) for lab in labels))
    return CountMulti(tuple(found.items()))


def parse_score_set(text: str, dimensions: tuple[str, ...]) -> IndicatorValue | None:
    """Parse "dim=level" fragments; unparseable unless a strict majority
    of the dimensions is present."""
    if not dimensions:
        raise ValueError("score set needs dimensions")
    t = _clean_fragment(text)
    if not t:
        return None
    if _is_unknown(t):
        return Unknown()
    declared = {_fold(dim): dim for dim in dimensions}
    found: dict[str, str] = {}
    for frag in re.split(r"[;,]", t):
        frag = frag.strip()
        m = _PAIR_RE.match(frag)
        if not m:
            continue
        folded = _fold(m.group(1))
        if folded in declared:
            found.setdefault(declared[folded], m.group(2).strip().lower())
    if len(found) * 2 <= len(dimensions):
        return None
    return Scores(tuple((dim, found[dim]) for dim in dimensions if dim in found))


def _normalize_categorical(text: str, allowed: tuple[str, ...]) -> IndicatorValue:
    t = _clean_fragment(text)
    if _is_unknown(t):
        return Unknown()
    folded = _fold(t)
    for value in allowed:
        if folded == _fold(value):
            return Categorical(value)
    logger.warning("category %r not in %s; keeping as text", text.strip(), list(allowed))
    return Text(t)


def normalize_value(text: str, defn: IndicatorDef) -> IndicatorValue | None:
    """Kind dispatch; None means the fragment is unparseable for this kind."""
    if defn.kind in (Kind.NUMERIC, Kind.PERCENT, Kind.COUNT):
        return normalize_numeric(text, defn.kind)
    if defn.kind is Kind.COUNT_MULTI:
        return normalize_count_multi(text, defn.labels)
    if defn.kind is Kind.SCORE_SET:
        return parse_score_set(text, defn.score_dimensions)
    if defn.kind is Kind.CATEGORICAL:
        return _normalize_categorical(text, defn.allowed_values)
    t = _clean_fragment(text)
    if not t:
        return None
    if _is_unknown(t):
        return Unknown()
    return Color(t) if defn.kind is Kind.COLOR else Text(t)


# ---------------------------------------------------------------------------
# Response parsing


_LINE_KV_RE = re.compile(
    r"^(?:\*\*|__|`)?\s*([A-Za-z][A-Za-z0-9_\s\-]{0,80}?)\s*(?:\*\*|__|`)?\s*[:=]\s*(.*)$"
)


def _iter_response_lines(raw: str):
    for line in raw.splitlines():
        s = line.strip()
        s = re.sub(r"^[-*•>]+\s*", "", s)
        s = re.sub(r"^\d{1,3}[.)]\s*", "", s)
        if not s:
            continue
        m = _LINE_KV_RE.match(s)
        if m:
            yield _fold(m.group(1)), m.group(2).strip()


def parse_response(raw: str, schema: list[IndicatorDef]) -> IndicatorSet:
    """Total parse of a model response against the schema.

    Every schema key is present in the result: PARSED when a matching
    line normalized, MISSING when no line matched, UNPARSEABLE (with the
    raw fragment kept as Text) when a line matched but would not
    normalize.
    """
    by_key = {d.key: d for d in schema}
    results: IndicatorSet = {}
    for folded_key, fragment in _iter_response_lines(raw or ""):
        defn = by_key.get(folded_key)
        if defn is None or defn.key in results:
            continue
        value = normalize_value(fragment, defn)
        if value is None:
            results[defn.key] = IndicatorEntry(Text(fragment), ParseStatus.UNPARSEABLE)
        else:
            results[defn.key] = IndicatorEntry(value, ParseStatus.PARSED)
    for d in schema:
        results.setdefault(d.key, IndicatorEntry(Unknown(), ParseStatus.MISSING))
    return {d.key: results[d.key] for d in schema}


# ---------------------------------------------------------------------------
# Rendering and rates


def _format_number(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return str(value)


def canonical_text(value: IndicatorValue) -> str:
    """Canonical single-cell rendering; normalizing it again round-trips."""
    if isinstance(value, Unknown):
        return "unknown"
    if isinstance(value, (Categorical, Color, Text)):
        return value.value
    if isinstance(value, Numeric):
        prefix = "~" if value.approx else ""
        unit = f" {value.unit}" if value.unit else ""
        return f"{prefix}{_format_number(value.value)}{unit}"
    if isinstance(value, Percent):
        prefix = "~" if value.approx else ""
        return f"{prefix}{value.fraction}"
    if isinstance(value, Count):
        prefix = "~" if value.approx else ""
        return f"{prefix}{value.value}"
    if isinstance(value, CountMulti):
        if not value.entries:
            return "none"
        return ";".join(f"{k}={canonical_text(v)}" for k, v in value.entries)
    if isinstance(value, Scores):
        return ";".join(f"{k}={level}" for k, level in value.levels)
    raise TypeError(f"not an indicator value: {value!r}")


def generation_rate(rows: list[IndicatorSet], key: str) -> Fraction:
    """Fraction of rows whose entry for ``key`` has PARSED status."""
    if not rows:
        raise EmptyInput("generation rate over zero rows")
    parsed = sum(1 for row in rows if row[key].status is ParseStatus.PARSED)
    return Fraction(parsed, len(rows))


def format_rate(rate: Fraction) -> str:
    """Exact-rational rate rendered to four decimal places."""
    quantized = (Decimal(rate.numerator) / Decimal(rate.denominator)).quantize(
        Decimal("0.0001"), rounding=ROUND_HALF_UP)
    return str(quantized)
