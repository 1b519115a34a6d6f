"""Hosting-platform metadata: popularity and engagement counters.

Metadata comes from a flat JSON fixture or from a small REST contract:
``GET {base}/{repo_id}`` returns a flat object with the count fields; any
field may instead be served as a paginated list at
``GET {base}/{repo_id}/{field}?page=N`` (1-based, empty page ends), in
which case the count is the total number of entries. Rate-limit (HTTP 429)
and transient failures are retried with exponential backoff up to a cap.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import NetworkFailure, RateLimitExceeded, SchemaMismatch

COUNT_FIELDS = (
    "watch",
    "star",
    "fork",
    "issues_open",
    "issues_closed",
    "branches",
    "releases",
    "pull_requests",
)


@dataclass(frozen=True)
class HostingMetadata:
    """Counters a hosting platform reports for one repository."""

    repo_id: str
    watch: int
    star: int
    fork_count: int
    issues_total: int
    issues_open: int
    issues_closed: int
    branches: int
    releases: int
    pull_requests: int
    fetched_at: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "watch": self.watch,
            "star": self.star,
            "fork": self.fork_count,
            "issues_total": self.issues_total,
            "issues_open": self.issues_open,
            "issues_closed": self.issues_closed,
            "branches": self.branches,
            "releases": self.releases,
            "pull_requests": self.pull_requests,
        }


def metadata_from_counts(repo_id: str, counts: dict, fetched_at: int = 0) -> HostingMetadata:
    """Validate raw counters and build a HostingMetadata record."""
    values: dict[str, int] = {}
    for name in COUNT_FIELDS:
        value = counts.get(name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise SchemaMismatch(f"{repo_id}: field {name!r} must be a non-negative integer")
        values[name] = value
    issues_total = counts.get("issues_total")
    derived_total = values["issues_open"] + values["issues_closed"]
    if issues_total is None:
        issues_total = derived_total
    elif issues_total != derived_total:
        raise SchemaMismatch(
            f"{repo_id}: issues_total {issues_total} != open {values['issues_open']}"
            f" + closed {values['issues_closed']}"
        )
    return HostingMetadata(
        repo_id=repo_id,
        watch=values["watch"],
        star=values["star"],
        fork_count=values["fork"],
        issues_total=issues_total,
        issues_open=values["issues_open"],
        issues_closed=values["issues_closed"],
        branches=values["branches"],
        releases=values["releases"],
        pull_requests=values["pull_requests"],
        fetched_at=fetched_at,
    )


ZERO_COUNTS = {name: 0 for name in COUNT_FIELDS}

_endpoint_locks: dict[str, threading.Lock] = {}
_endpoint_locks_guard = threading.Lock()


def _lock_for(endpoint: str) -> threading.Lock:
    with _endpoint_locks_guard:
        return _endpoint_locks.setdefault(endpoint, threading.Lock())


class MetadataClient:
    """Fetches paginated hosting metadata with backoff.

    Requests against the same endpoint are serialized; distinct endpoints
    may be used concurrently.
    """

    def __init__(
        self,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._clock = clock

    def fetch(self, endpoint: str, repo_id: str) -> HostingMetadata:
        with _lock_for(endpoint):
            base = endpoint.rstrip("/")
            doc = self._get_json(f"{base}/{repo_id}")
            if not isinstance(doc, dict):
                raise SchemaMismatch(f"{repo_id}: metadata document must be an object")
            counts = dict(doc)
            for name in COUNT_FIELDS:
                if name not in counts:
                    counts[name] = self._count_pages(f"{base}/{repo_id}/{name}")
            return metadata_from_counts(repo_id, counts, fetched_at=int(self._clock()))

    def _count_pages(self, url: str) -> int:
        total = 0
        page = 1
        while True:
            payload = self._get_json(f"{url}?page={page}")
            if not isinstance(payload, list):
                raise SchemaMismatch(f"paginated resource {url} must return arrays")
            if not payload:
                return total
            total += len(payload)
            page += 1

    def _get_json(self, url: str):
        import requests

        rate_limited = False
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = requests.get(url, timeout=30)
            except requests.RequestException:
                continue
            if resp.status_code == 429:
                rate_limited = True
                continue
            if resp.status_code >= 500:
                continue
            if resp.status_code != 200:
                raise SchemaMismatch(f"unexpected HTTP {resp.status_code} from {url}")
            try:
                return resp.json()
            except ValueError as exc:
                raise SchemaMismatch(f"non-JSON payload from {url}: {exc}") from exc
        if rate_limited:
            raise RateLimitExceeded(f"rate limit persisted after {self.max_retries} retries: {url}")
        raise NetworkFailure(f"request failed after {self.max_retries} retries: {url}")


def fetch_hosting_metadata(
    endpoint: str | Path,
    repo_id: str,
    client: MetadataClient | None = None,
) -> HostingMetadata:
    """Load hosting metadata from a fixture file or a REST endpoint.

    Fixture loads carry ``fetched_at = 0`` so downstream artifacts stay
    reproducible; live fetches record wall-clock time.
    """
    text = str(endpoint)
    if text.startswith("http://") or text.startswith("https://"):
        return (client or MetadataClient()).fetch(text, repo_id)
    path = Path(endpoint)
    if not path.is_file():
        raise SchemaMismatch(f"metadata fixture {text!r} is not a readable file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaMismatch(f"metadata fixture {text!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaMismatch(f"metadata fixture {text!r} must hold a flat object")
    return metadata_from_counts(repo_id, doc, fetched_at=0)
