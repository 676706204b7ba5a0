"""Per-key rate limiting and round-robin key leasing.

The limiter keeps a log of recent call times and blocks until the oldest
call leaves the 60 s window, so by construction no more than
``per_minute`` calls ever land in any sliding 60 s window. Clock and
sleep are injectable so tests can drive a virtual clock.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from typing import Callable

WINDOW_S = 60.0


class RateLimiter:
    """Sliding-window limiter; ``per_minute`` of None or 0 disables it."""

    def __init__(
        self,
        per_minute: float | None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._calls: deque[float] = deque()

    def acquire(self) -> None:
        """Block until a call is allowed, then record it."""
        if not self.per_minute:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._calls and self._calls[0] <= now - WINDOW_S:
                    self._calls.popleft()
                if len(self._calls) < self.per_minute:
                    self._calls.append(now)
                    return
                wait = self._calls[0] + WINDOW_S - now
            self._sleep(max(wait, 1e-6))


class KeyPool:
    """Round-robin lease of (key, limiter) pairs.

    Each key gets its own RateLimiter so budgets are enforced per key.
    Leasing is lock-protected, so over N equal-cost leases the per-key
    counts differ by at most one.
    """

    def __init__(
        self,
        keys: list[str],
        per_key_per_minute: float | None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not keys:
            raise ValueError("KeyPool needs at least one key")
        self._keys = list(keys)
        self._limiters = {k: RateLimiter(per_key_per_minute, clock, sleep) for k in keys}
        self._lock = threading.Lock()
        self._next = 0

    def lease(self) -> tuple[str, RateLimiter]:
        with self._lock:
            key = self._keys[self._next % len(self._keys)]
            self._next += 1
        return key, self._limiters[key]

    @property
    def keys(self) -> list[str]:
        return list(self._keys)
