"""Run configuration: JSON config file plus CLI flag overrides.

Secrets never travel through flags: API keys come from the environment
or a keys file (one key per line).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .annotate import ProviderConfig, ProviderKind
from .errors import ConfigError
from .geo import BoundingBox
from .osm import DEFAULT_NOMINATIM_URL, DEFAULT_OVERPASS_URL
from .streetview import CaptureParams, DEFAULT_IMAGE_URL, DEFAULT_METADATA_URL

KEYS_ENV = "FACADEATLAS_API_KEYS"
KEYS_FILE_ENV = "FACADEATLAS_KEYS_FILE"
STREETVIEW_KEY_ENV = "FACADEATLAS_STREETVIEW_KEY"


@dataclass
class RunConfig:
    city: str | None = None
    bbox: BoundingBox | None = None
    type_filter: list[str] | None = None
    seed: int = 0
    limit_per_type: int | None = None
    radii_m: tuple[float, ...] = (30.0, 40.0, 50.0)
    width: int = 600
    height: int = 300
    pitch_deg: float = 10.0
    fov_deg: float = 90.0
    workers: int = 8
    out_dir: str = "runs/default"
    strict: bool = False
    mock: bool = False
    skip_failed: bool = False
    nominatim_url: str = DEFAULT_NOMINATIM_URL
    overpass_url: str = DEFAULT_OVERPASS_URL
    metadata_url: str = DEFAULT_METADATA_URL
    image_url: str = DEFAULT_IMAGE_URL
    overpass_timeout_s: float = 180.0
    keys_file: str | None = None
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    def capture_params(self) -> CaptureParams:
        return CaptureParams(width=self.width, height=self.height,
                             pitch_deg=self.pitch_deg, fov_deg=self.fov_deg)

    def validate_area(self) -> None:
        """Exactly one of city/bbox; mock mode defaults to the fixture city."""
        if self.city and self.bbox:
            raise ConfigError("give either --city or --bbox, not both")
        if not self.city and not self.bbox:
            if self.mock:
                self.city = "Amsterdam"
            else:
                raise ConfigError("one of --city or --bbox is required")


def parse_bbox(text: str) -> BoundingBox:
    """Parse "S,W,N,E" degrees."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"--bbox wants S,W,N,E, got {text!r}")
    try:
        s, w, n, e = (float(p) for p in parts)
        return BoundingBox(south=s, west=w, north=n, east=e)
    except ValueError as exc:
        raise ConfigError(f"bad --bbox {text!r}: {exc}") from exc


def parse_radii(text: str) -> tuple[float, ...]:
    """Parse "30,40,50" metres, strictly increasing."""
    try:
        radii = tuple(float(p.strip()) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --radii {text!r}: {exc}") from exc
    if not radii or any(r <= 0 for r in radii) \
            or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError(f"--radii must be strictly increasing and positive: {text!r}")
    return radii


def parse_size(text: str) -> tuple[int, int]:
    """Parse "600x300" pixels."""
    m = text.lower().split("x")
    if len(m) != 2:
        raise ConfigError(f"--size wants WxH, got {text!r}")
    try:
        width, height = int(m[0]), int(m[1])
    except ValueError as exc:
        raise ConfigError(f"bad --size {text!r}: {exc}") from exc
    if width <= 0 or height <= 0:
        raise ConfigError(f"--size must be positive: {text!r}")
    return width, height


_PROVIDER_FIELDS = {f.name for f in fields(ProviderConfig)}
_CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return doc


def build_config(file_doc: dict | None = None, **overrides) -> RunConfig:
    """Merge config-file values and CLI overrides into a RunConfig.

    CLI overrides win; None overrides are treated as "flag not given".
    """
    config = RunConfig()
    doc = dict(file_doc or {})

    provider_doc = doc.pop("provider", {})
    if not isinstance(provider_doc, dict):
        raise ConfigError("config 'provider' must be an object")
    for name, value in provider_doc.items():
        if name not in _PROVIDER_FIELDS:
            raise ConfigError(f"unknown provider config field: {name}")
        if name == "provider_kind":
            value = ProviderKind(value)
        setattr(config.provider, name, value)

    if "bbox" in doc and doc["bbox"] is not None:
        doc["bbox"] = parse_bbox(doc["bbox"]) if isinstance(doc["bbox"], str) \
            else BoundingBox(*[float(v) for v in doc["bbox"]])
    if "size" in doc:
        config.width, config.height = parse_size(str(doc.pop("size")))
    if "radii_m" in doc and doc["radii_m"] is not None:
        doc["radii_m"] = tuple(float(r) for r in doc["radii_m"])

    for name, value in doc.items():
        if name not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config field: {name}")
        setattr(config, name, value)

    for name, value in overrides.items():
        if value is None:
            continue
        if name not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown override: {name}")
        setattr(config, name, value)

    if config.mock:
        config.provider.provider_kind = ProviderKind.MOCK_FIXTURE
    return config


def resolve_api_keys(config: RunConfig) -> list[str]:
    """API keys from the environment or a keys file, never from flags."""
    raw = os.environ.get(KEYS_ENV, "")
    keys = [k.strip() for k in raw.replace(",", "\n").splitlines() if k.strip()]
    if keys:
        return keys
    keys_file = config.keys_file or os.environ.get(KEYS_FILE_ENV)
    if keys_file:
        try:
            with open(keys_file, "r", encoding="utf-8") as fh:
                return [line.strip() for line in fh if line.strip()]
        except OSError as exc:
            raise ConfigError(f"cannot read keys file {keys_file}: {exc}") from exc
    return []
