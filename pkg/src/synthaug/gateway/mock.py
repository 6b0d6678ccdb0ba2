"""Mock synthesis / transcription / embedding services backed by a toy world."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable

import numpy as np

from ..manifest import Domain, Utterance
from ..toy.world import ToyWorld, asset_ref, parse_asset_ref
from .client import ServiceEndpoint, estimate_duration

log = logging.getLogger(__name__)


@dataclass
class _Asset:
    text: str
    vector: np.ndarray


class MockBackend:
    """In-process implementation of the wire protocol.

    Real recordings are registered up front; synthesized assets are rendered
    on request and cached by reference, which makes ``/synthesize``
    idempotent per utterance id. ``faults`` maps a job id to ``"malformed"``,
    ``"error"`` or ``"flaky:N"`` (fail the first N attempts with a 503).
    """

    def __init__(self, world: ToyWorld, utterances: Iterable[Utterance] = (),
                 corruption_p: float | None = None, faults: dict[str, str] | None = None):
        self.world = world
        self.corruption_p = corruption_p
        self.faults = dict(faults or {})
        self._assets: dict[str, _Asset] = {}
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self.register_utterances(utterances)

    def register_utterances(self, utterances: Iterable[Utterance]) -> None:
        for u in utterances:
            self.register(u.audio_ref, u.text, self.world.resolve(u))

    def register(self, ref: str, text: str, vector: np.ndarray) -> None:
        with self._lock:
            self._assets[ref] = _Asset(text, np.asarray(vector, dtype=float))

    def asset(self, ref: str) -> _Asset:
        with self._lock:
            try:
                return self._assets[ref]
            except KeyError:
                raise LookupError(f"unknown audio_ref {ref!r}") from None

    def _fault(self, job_id: str) -> tuple[int, dict] | None:
        spec = self.faults.get(job_id)
        if spec is None:
            return None
        if spec == "error":
            return 500, {"error": f"synthesis failed for {job_id}"}
        if spec == "malformed":
            return 200, {"unexpected": True}
        if spec.startswith("flaky:"):
            with self._lock:
                self._attempts[job_id] = self._attempts.get(job_id, 0) + 1
                if self._attempts[job_id] <= int(spec.split(":", 1)[1]):
                    return 503, {"error": "temporarily unavailable"}
            return None
        raise ValueError(f"unknown fault {spec!r}")

    def synthesize(self, job_id: str, text: str, prompt_ref: str, model: str) -> tuple[str, float]:
        if model not in self.world.prototypes:
            raise LookupError(f"unknown model {model!r}")
        self.asset(prompt_ref)
        domain, _, voice = parse_asset_ref(prompt_ref)
        if domain is not Domain.REAL:
            raise ValueError("prompt must be a real recording")
        ref = asset_ref(voice, job_id, model)
        vector = self.world.render(voice, text, Domain.SYNTHETIC, model, noise_key=ref)
        self.register(ref, text, vector)
        return ref, estimate_duration(text)

    def transcribe(self, ref: str, key: object = None) -> str:
        a = self.asset(ref)
        return self.world.transcribe(a.vector, a.text, key if key is not None else ref, self.corruption_p)

    def embed(self, ref: str) -> list[float]:
        return [float(v) for v in self.world.embed(self.asset(ref).vector)]

    def handle(self, path: str, payload: dict) -> tuple[int, dict]:
        try:
            if path == "/synthesize":
                fault = self._fault(str(payload.get("id")))
                if fault is not None:
                    return fault
                ref, duration = self.synthesize(payload["id"], payload["text"], payload["prompt_ref"],
                                                payload["model"])
                return 200, {"id": payload["id"], "audio_ref": ref, "duration_s": duration}
            if path == "/transcribe":
                return 200, {"text": self.transcribe(payload["audio_ref"])}
            if path == "/embed":
                return 200, {"embedding": self.embed(payload["audio_ref"])}
            return 404, {"error": f"no such endpoint {path}"}
        except (KeyError, TypeError) as exc:
            return 400, {"error": f"bad request: {exc}"}
        except (LookupError, ValueError) as exc:
            return 422, {"error": str(exc)}


class _Handler(BaseHTTPRequestHandler):
    backend: MockBackend

    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(payload, dict):
                raise ValueError("payload must be an object")
        except ValueError as exc:
            status, body = 400, {"error": f"invalid JSON: {exc}"}
        else:
            status, body = self.backend.handle(self.path, payload)
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        log.debug("mock %s", fmt % args)


class MockServer:
    """HTTP front for a :class:`MockBackend`, serving from a daemon thread."""

    def __init__(self, backend: MockBackend, host: str = "127.0.0.1", port: int = 0):
        handler = type("Handler", (_Handler,), {"backend": backend})
        self.backend = backend
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def endpoint(self, **kwargs) -> ServiceEndpoint:
        return ServiceEndpoint(self.url, **kwargs)

    def start(self) -> "MockServer":
        if not self._thread.is_alive():
            self._thread.start()
        return self

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


def mock_services(world: ToyWorld, utterances: Iterable[Utterance] = (), host: str = "127.0.0.1",
                  port: int = 0, **backend_kwargs) -> MockServer:
    """Start mock ``/synthesize``, ``/transcribe`` and ``/embed`` endpoints on one port."""
    return MockServer(MockBackend(world, utterances, **backend_kwargs), host, port).start()
