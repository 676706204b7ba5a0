"""Exception types shared across the pipeline."""


class FacadeAtlasError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(FacadeAtlasError):
    """Invalid or incomplete run configuration."""


class IdenticalPoints(FacadeAtlasError):
    """Bearing is undefined between two identical coordinates."""


class DegenerateRing(FacadeAtlasError):
    """Polygon ring has fewer than three distinct vertices."""


class NetworkError(FacadeAtlasError):
    """Remote service unreachable or persistently failing."""


class RateLimited(NetworkError):
    """Remote service asked us to slow down (HTTP 429)."""


class QuotaExceeded(NetworkError):
    """API quota or key budget exhausted."""


class EmptyQuery(FacadeAtlasError):
    """Geocoding query was empty."""


class MalformedResponse(FacadeAtlasError):
    """Remote response did not match the expected envelope."""


class MalformedLine(FacadeAtlasError):
    """A JSONL line could not be parsed.

    Carries the 1-based line number so strict readers can report it.
    """

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DecodeError(FacadeAtlasError):
    """Downloaded payload is not a decodable image."""


class SampleTooLarge(FacadeAtlasError):
    """Requested review sample exceeds the dataset size."""


class LengthMismatch(FacadeAtlasError):
    """Paired metric inputs have different lengths."""


class EmptyInput(FacadeAtlasError):
    """Operation requires at least one element."""


class NoMatchedPairs(FacadeAtlasError):
    """Benchmark and dataset share no usable (building, variable) pairs."""


class EmptyDataset(FacadeAtlasError):
    """Operation requires a non-empty dataset."""
