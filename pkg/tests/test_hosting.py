from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from forkscope.errors import NetworkFailure, RateLimitExceeded, SchemaMismatch
from forkscope.hosting import MetadataClient, fetch_hosting_metadata

FIXTURE = {
    "star": 10,
    "watch": 2,
    "fork": 3,
    "issues_open": 1,
    "issues_closed": 4,
    "branches": 5,
    "releases": 6,
    "pull_requests": 7,
}


class TestFixtureLoads:
    def test_totals_derived(self, tmp_path):
        path = tmp_path / "meta.json"
        path.write_text(json.dumps(FIXTURE))
        meta = fetch_hosting_metadata(path, "demo")
        assert meta.issues_total == 5
        assert meta.star == 10
        assert meta.fork_count == 3
        assert meta.fetched_at == 0

    def test_total_mismatch_rejected(self, tmp_path):
        doc = dict(FIXTURE, issues_open=2, issues_closed=2, issues_total=5)
        path = tmp_path / "meta.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaMismatch):
            fetch_hosting_metadata(path, "demo")

    def test_negative_count_rejected(self, tmp_path):
        doc = dict(FIXTURE, star=-1)
        path = tmp_path / "meta.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaMismatch):
            fetch_hosting_metadata(path, "demo")

    def test_missing_field_rejected(self, tmp_path):
        doc = dict(FIXTURE)
        del doc["branches"]
        path = tmp_path / "meta.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaMismatch):
            fetch_hosting_metadata(path, "demo")


class _Handler(BaseHTTPRequestHandler):
    routes: dict[str, object] = {}
    fail_first: dict[str, int] = {}

    def log_message(self, *args):  # keep test output quiet
        pass

    def do_GET(self):
        parsed = urlparse(self.path)
        key = parsed.path
        page = int(parse_qs(parsed.query).get("page", ["1"])[0])
        remaining = self.fail_first.get(key, 0)
        if remaining > 0:
            self.fail_first[key] = remaining - 1
            self.send_response(429)
            self.end_headers()
            return
        if key not in self.routes:
            self.send_response(404)
            self.end_headers()
            return
        payload = self.routes[key]
        if isinstance(payload, dict) and "pages" in payload:
            pages = payload["pages"]
            body = pages[page - 1] if page <= len(pages) else []
        else:
            body = payload
        data = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    _Handler.routes = {}
    _Handler.fail_first = {}


def _no_sleep_client(retries: int = 3) -> MetadataClient:
    return MetadataClient(max_retries=retries, sleep=lambda _: None)


class TestRestFetch:
    def test_two_page_star_list(self, http_server):
        doc = dict(FIXTURE)
        del doc["star"]
        _Handler.routes = {
            "/demo": doc,
            "/demo/star": {"pages": [[1] * 30, [1] * 12]},
        }
        meta = fetch_hosting_metadata(http_server, "demo", client=_no_sleep_client())
        assert meta.star == 42

    def test_retries_then_succeeds_on_rate_limit(self, http_server):
        _Handler.routes = {"/demo": dict(FIXTURE)}
        _Handler.fail_first = {"/demo": 2}
        meta = fetch_hosting_metadata(http_server, "demo", client=_no_sleep_client())
        assert meta.watch == 2

    def test_rate_limit_cap(self, http_server):
        _Handler.routes = {"/demo": dict(FIXTURE)}
        _Handler.fail_first = {"/demo": 99}
        with pytest.raises(RateLimitExceeded):
            fetch_hosting_metadata(http_server, "demo", client=_no_sleep_client(2))

    def test_network_failure_after_retries(self):
        client = _no_sleep_client(1)
        with pytest.raises(NetworkFailure):
            client.fetch("http://127.0.0.1:1", "demo")

    def test_backoff_is_exponential(self, http_server):
        sleeps: list[float] = []
        _Handler.routes = {"/demo": dict(FIXTURE)}
        _Handler.fail_first = {"/demo": 3}
        client = MetadataClient(max_retries=5, backoff_base=0.5, sleep=sleeps.append)
        client.fetch(http_server, "demo")
        assert sleeps == [0.5, 1.0, 2.0]
