import os

# Pin BLAS to one thread before numpy loads anywhere; the search latency
# budget is specified single-threaded.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

import numpy as np
import pytest

from imloop.corpus import CorpusStore, Passage
from imloop.embed import HashingEmbedder


@dataclass
class MapProvider:
    """Stub provider with hand-picked vectors per exact text."""

    vectors: dict[str, Sequence[float]]
    dim: int = 2
    calls: list[str] = field(default_factory=list)

    def embed_text(self, text: str) -> np.ndarray:
        self.calls.append(text)
        return np.asarray(self.vectors[text], dtype=np.float32)

    def embed_texts(self, texts):
        return [self.embed_text(t) for t in texts]


class StubEndpoint:
    """Local HTTP server whose responses come from a pluggable handler.

    handler(path, payload) -> (status_code, response_object). Collects every
    request payload for assertions.
    """

    def __init__(self, handler: Callable[[str, dict], tuple[int, object]]):
        self.handler = handler
        self.requests: list[dict] = []
        stub = self

        class _Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append(payload)
                status, body = stub.handler(self.path, payload)
                raw = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_endpoint():
    endpoints = []

    def start(handler):
        ep = StubEndpoint(handler)
        endpoints.append(ep)
        return ep

    yield start
    for ep in endpoints:
        ep.close()


def make_store(rows, samples=()) -> CorpusStore:
    return CorpusStore([Passage(*row) for row in rows], samples)


@pytest.fixture
def hash_provider() -> HashingEmbedder:
    return HashingEmbedder()


@pytest.fixture
def tiny_store() -> CorpusStore:
    return make_store(
        [
            ("p1", "Crimson Tide", "the crimson tide mascot is big al the elephant"),
            ("p2", "Big Al", "big al is an elephant costume"),
            ("p3", "Tuscaloosa", "tuscaloosa is a city in alabama"),
        ]
    )


def chat_reply(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}
