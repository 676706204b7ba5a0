import threading

import pytest
from hypothesis import HealthCheck, settings

from facadeatlas.indicators import default_schema

settings.register_profile(
    "ci", derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


class VirtualClock:
    """Deterministic clock for rate-limit and backoff tests."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()
        self.sleeps: list[float] = []

    def time(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.sleeps.append(seconds)
            self._now += max(seconds, 0.0)


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture(scope="session")
def schema():
    return default_schema()
