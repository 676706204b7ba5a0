"""Concurrent multimodal-LLM annotation with a crash-safe resume ledger.

Every attempt outcome is appended to a JSONL ledger and flushed, so a
killed job can resume from exactly where it stopped: tasks with an OK
entry are never sent to the provider again.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import requests

from .errors import ConfigError, NetworkError, QuotaExceeded
from .ratelimit import KeyPool

logger = logging.getLogger(__name__)

LEDGER_KEYS = ("building_id", "status", "attempts", "raw_text", "prompt_tokens",
               "completion_tokens", "estimated_cost_usd", "model_id", "ts")


class ProviderKind(str, Enum):
    REMOTE_CHAT = "remote_chat"
    MOCK_FIXTURE = "mock_fixture"


@dataclass
class ProviderConfig:
    provider_kind: ProviderKind = ProviderKind.REMOTE_CHAT
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_id: str = "gpt-4o"
    api_keys: list[str] = field(default_factory=list)
    max_in_flight: int = 8
    per_key_requests_per_minute: float | None = 60.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 60.0
    request_timeout_s: float = 120.0
    # Fallback pricing when the provider does not report usage.
    prompt_price_per_1k_usd: float = 0.0025
    completion_price_per_1k_usd: float = 0.01
    fixture_path: str | None = None

    def validate(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.provider_kind is ProviderKind.REMOTE_CHAT and not self.api_keys:
            raise ConfigError(
                "remote provider needs at least one API key "
                "(set FACADEATLAS_API_KEYS or configure a keys file)")


@dataclass(frozen=True)
class AnnotationTask:
    building_id: str
    image_path: str
    prompt_hash: str


@dataclass(frozen=True)
class RawAnnotation:
    building_id: str
    raw_text: str
    status: str  # "OK" | "FAILED"
    attempts: int
    prompt_tokens: int
    completion_tokens: int
    estimated_cost_usd: float
    model_id: str
    ts: float

    def to_json_obj(self) -> dict:
        return {key: getattr(self, key) for key in LEDGER_KEYS}


def _annotation_from_obj(obj: dict) -> RawAnnotation:
    return RawAnnotation(
        building_id=obj["building_id"],
        raw_text=obj["raw_text"],
        status=obj["status"],
        attempts=int(obj["attempts"]),
        prompt_tokens=int(obj["prompt_tokens"]),
        completion_tokens=int(obj["completion_tokens"]),
        estimated_cost_usd=float(obj["estimated_cost_usd"]),
        model_id=obj["model_id"],
        ts=float(obj["ts"]),
    )


class CheckpointLedger:
    """Append-only JSONL record of annotation attempts.

    Lines are whole JSON objects flushed per entry; a trailing partial
    line left by a crash is skipped on load with a warning.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self.entries: list[RawAnnotation] = []
        self._completed: set[str] = set()
        self._load()

    def _load(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = _annotation_from_obj(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    logger.warning("%s: skipping unreadable ledger line %d: %s",
                                   self.path, line_no, exc)
                    continue
                self.entries.append(entry)
                if entry.status == "OK":
                    self._completed.add(entry.building_id)

    def append(self, entry: RawAnnotation) -> None:
        with self._lock:
            if entry.status == "OK" and entry.building_id in self._completed:
                return  # at most one OK entry per building
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_json_obj(), ensure_ascii=False) + "\n")
                fh.flush()
            self.entries.append(entry)
            if entry.status == "OK":
                self._completed.add(entry.building_id)

    def completed_ids(self) -> set[str]:
        return set(self._completed)

    def failed_ids(self) -> set[str]:
        done = self.completed_ids()
        return {e.building_id for e in self.entries if e.status == "FAILED"} - done

    def ok_entries(self) -> dict[str, RawAnnotation]:
        latest: dict[str, RawAnnotation] = {}
        for e in self.entries:
            if e.status == "OK":
                latest.setdefault(e.building_id, e)
        return latest


@dataclass(frozen=True)
class ProviderResult:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class FixtureProvider:
    """Offline provider mapping building_id to canned response text."""

    def __init__(self, fixtures: dict):
        self._fixtures = fixtures
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "FixtureProvider":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def annotate(self, task: AnnotationTask, prompt: str, key: str) -> ProviderResult:
        with self._lock:
            self.calls += 1
        if task.building_id not in self._fixtures:
            raise NetworkError(f"no fixture response for {task.building_id}")
        entry = self._fixtures[task.building_id]
        if isinstance(entry, str):
            return ProviderResult(entry)
        return ProviderResult(entry["text"], entry.get("prompt_tokens"),
                              entry.get("completion_tokens"))


class RemoteChatProvider:
    """Chat-completions endpoint speaking the OpenAI-style wire format."""

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def annotate(self, task: AnnotationTask, prompt: str, key: str) -> ProviderResult:
        with open(task.image_path, "rb") as fh:
            image_b64 = base64.b64encode(fh.read()).decode("ascii")
        body = {
            "model": self.config.model_id,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url",
                     "image_url": {"url": f"data:image/jpeg;base64,{image_b64}"}},
                ],
            }],
        }
        try:
            resp = self.session.post(self.config.endpoint_url, json=body,
                                     headers={"Authorization": f"Bearer {key}"},
                                     timeout=self.config.request_timeout_s)
        except requests.RequestException as exc:
            raise NetworkError(f"chat endpoint unreachable: {exc}") from exc
        if resp.status_code == 429:
            raise QuotaExceeded("chat endpoint returned HTTP 429")
        if resp.status_code != 200:
            raise NetworkError(f"chat endpoint returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise NetworkError(f"chat response malformed: {exc}") from exc
        usage = payload.get("usage") or {}
        return ProviderResult(text or "", usage.get("prompt_tokens"),
                              usage.get("completion_tokens"))


def make_provider(config: ProviderConfig):
    if config.provider_kind is ProviderKind.MOCK_FIXTURE:
        if not config.fixture_path:
            raise ConfigError("mock provider needs fixture_path")
        return FixtureProvider.from_file(config.fixture_path)
    return RemoteChatProvider(config)


def _estimate_cost(config: ProviderConfig, prompt: str, text: str,
                   result: ProviderResult) -> tuple[int, int, float]:
    # Roughly four characters per token when the provider omits usage.
    pt = result.prompt_tokens if result.prompt_tokens is not None \
        else math.ceil(len(prompt) / 4)
    ct = result.completion_tokens if result.completion_tokens is not None \
        else math.ceil(len(text) / 4)
    cost = (pt / 1000.0) * config.prompt_price_per_1k_usd \
        + (ct / 1000.0) * config.completion_price_per_1k_usd
    return pt, ct, cost


def annotate_one(task: AnnotationTask, prompt: str, provider, config: ProviderConfig,
                 keypool: KeyPool, sleep: Callable[[float], None] = time.sleep,
                 rng: random.Random | None = None,
                 now: Callable[[], float] = time.time) -> RawAnnotation:
    """Annotate one task, retrying with exponential full-jitter backoff.

    Returns a terminal OK or FAILED record; never raises. A FAILED record
    always reflects max_retries + 1 attempts.
    """
    rng = rng or random.Random()
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        key, limiter = keypool.lease()
        limiter.acquire()
        try:
            result = provider.annotate(task, prompt, key)
            if not result.text:
                raise NetworkError("provider returned empty text")
            pt, ct, cost = _estimate_cost(config, prompt, result.text, result)
            return RawAnnotation(task.building_id, result.text, "OK", attempt + 1,
                                 pt, ct, cost, config.model_id, now())
        except Exception as exc:
            last_error = exc
            if attempt < config.max_retries:
                wait = rng.uniform(0.0, min(config.backoff_cap_s,
                                            config.backoff_base_s * 2 ** attempt))
                sleep(wait)
    logger.warning("%s: annotation failed after %d attempts: %s",
                   task.building_id, config.max_retries + 1, last_error)
    return RawAnnotation(task.building_id, "", "FAILED", config.max_retries + 1,
                         0, 0, 0.0, config.model_id, now())


def pending_tasks(ledger: CheckpointLedger, tasks: list[AnnotationTask],
                  skip_failed: bool = False) -> list[AnnotationTask]:
    """Tasks without an OK entry; FAILED ones retried unless skip_failed."""
    done = ledger.completed_ids()
    failed = ledger.failed_ids() if skip_failed else set()
    return [t for t in tasks if t.building_id not in done and t.building_id not in failed]


def run_job(tasks: list[AnnotationTask], prompt: str, config: ProviderConfig,
            ledger_path: str, provider=None, skip_failed: bool = False,
            clock: Callable[[], float] = time.monotonic,
            sleep: Callable[[float], None] = time.sleep,
            now: Callable[[], float] = time.time,
            rng: random.Random | None = None) -> CheckpointLedger:
    """Run all not-yet-OK tasks through a bounded, key-rotating worker pool.

    The ledger gains exactly one terminal entry per executed task;
    individual failures never abort the job.
    """
    config.validate()
    provider = provider if provider is not None else make_provider(config)
    ledger = CheckpointLedger(ledger_path)
    todo = pending_tasks(ledger, tasks, skip_failed=skip_failed)
    if not todo:
        return ledger

    keys = config.api_keys or ["mock"]
    keypool = KeyPool(keys, config.per_key_requests_per_minute, clock=clock, sleep=sleep)
    workers = max(1, min(config.max_in_flight, 8 * len(keys)))

    def worker(task: AnnotationTask) -> None:
        entry = annotate_one(task, prompt, provider, config, keypool,
                             sleep=sleep, rng=rng, now=now)
        ledger.append(entry)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(worker, todo))
    return ledger


def total_cost(ledger: CheckpointLedger) -> float:
    """Sum of estimated cost over every ledger entry."""
    return sum(e.estimated_cost_usd for e in ledger.entries)
