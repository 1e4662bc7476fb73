"""Shared fixtures: scripted HTTP mock endpoints and text strategies.

The mock servers speak the same wire formats as the real endpoints:
POST /completions -> {"choices": [{"text", "finish_reason"}, ...]} and
POST /embeddings -> {"data": [{"embedding": [...]}, ...]}. Embeddings are a
pure deterministic function of the text (hash-seeded), so identical texts
always embed identically and tests never need a model.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np
import pytest
from hypothesis import strategies as st

MARKERS = ("User:", "Assistant:")

# Filled by the acceptance tests; echoed below so every run of the suite
# ends with one visible PASS/FAIL line per acceptance criterion.
_criterion_results: list[str] = []


def record_criterion(line: str) -> None:
    _criterion_results.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_results:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_results:
            terminalreporter.write_line(line)


def marker_free_text(min_size: int = 1, max_size: int = 60) -> st.SearchStrategy[str]:
    """Strip-stable non-empty text containing no role marker anywhere."""
    return (
        st.text(min_size=min_size, max_size=max_size)
        .map(str.strip)
        .filter(lambda s: s and all(m not in s for m in MARKERS))
    )


def deterministic_embedding(text: str, dim: int) -> list[float]:
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim)
    return [float(x) for x in vec]


class MockApp:
    """Holds scripted behavior; thread-safe because the server is threaded."""

    def __init__(self, fail_statuses: list[int] | None = None):
        self.lock = threading.Lock()
        self.fail_statuses = list(fail_statuses or [])
        self.request_count = 0
        self.requests: list[dict] = []

    def handle(self, path: str, body: dict) -> tuple[int, dict]:
        with self.lock:
            self.request_count += 1
            self.requests.append({"path": path, "body": body})
            if self.fail_statuses:
                return self.fail_statuses.pop(0), {"error": "scripted failure"}
        return self.respond(path, body)

    def respond(self, path: str, body: dict) -> tuple[int, dict]:
        raise NotImplementedError


class CompletionApp(MockApp):
    """Scripted completions: text for global index i comes from script(i).

    The client sends seed = base_seed + batch_start, so the global index of
    choice j in a request is (seed - base_seed) + j regardless of arrival
    order. Without a seed, a counter assigns indices in arrival order.
    """

    def __init__(
        self,
        script: Callable[[int], tuple[str, str]],
        *,
        base_seed: int = 0,
        fail_statuses: list[int] | None = None,
    ):
        super().__init__(fail_statuses)
        self.script = script
        self.base_seed = base_seed
        self._counter = 0

    def respond(self, path: str, body: dict) -> tuple[int, dict]:
        if not path.endswith("/completions"):
            return 404, {"error": f"unknown path {path}"}
        n = int(body.get("n", 1))
        if "seed" in body:
            start = int(body["seed"]) - self.base_seed
        else:
            with self.lock:
                start = self._counter
                self._counter += n
        choices = []
        for j in range(n):
            text, finish = self.script(start + j)
            choices.append({"text": text, "finish_reason": finish})
        return 200, {"choices": choices, "model": "mock"}


class EmbeddingApp(MockApp):
    def __init__(self, dim: int = 8, *, fail_statuses: list[int] | None = None):
        super().__init__(fail_statuses)
        self.dim = dim

    def respond(self, path: str, body: dict) -> tuple[int, dict]:
        if not path.endswith("/embeddings"):
            return 404, {"error": f"unknown path {path}"}
        texts = body.get("input", [])
        data = [{"embedding": deterministic_embedding(t, self.dim)} for t in texts]
        return 200, {"data": data}


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 - http.server contract
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            body = {}
        status, payload = self.server.app.handle(self.path, body)  # type: ignore[attr-defined]
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # silence request logging
        pass


class MockServer:
    def __init__(self, app: MockApp):
        self.app = app
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.app = app  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)


@pytest.fixture
def completion_server():
    servers: list[MockServer] = []

    def start(script: Callable[[int], tuple[str, str]], **kwargs) -> MockServer:
        server = MockServer(CompletionApp(script, **kwargs))
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()


@pytest.fixture
def embedding_server():
    servers: list[MockServer] = []

    def start(dim: int = 8, **kwargs) -> MockServer:
        server = MockServer(EmbeddingApp(dim, **kwargs))
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()
