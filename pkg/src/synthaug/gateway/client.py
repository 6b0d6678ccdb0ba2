"""Clients for the synthesis, transcription and speaker-embedding services.

Wire protocol (JSON over HTTP POST)::

    /synthesize  {"id", "text", "prompt_ref", "model"} -> {"id", "audio_ref"[, "duration_s"]}
    /transcribe  {"audio_ref"}                         -> {"text"}
    /embed       {"audio_ref"}                         -> {"embedding": [float, ...]}

Errors come back as non-200 responses carrying ``{"error": str}``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests

from ..errors import ServiceUnavailable
from ..manifest import Domain, Utterance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServiceEndpoint:
    base_url: str
    timeout_ms: int = 30_000
    max_parallel: int = 4
    retries: int = 3
    backoff_s: float = 0.05

    def __post_init__(self):
        if self.timeout_ms < 1 or self.max_parallel < 1 or self.retries < 1:
            raise ValueError("timeout_ms, max_parallel and retries must be positive")


class JobError(Exception):
    """A single request failed for a reason other than an unreachable service."""


class Transport(Protocol):
    max_parallel: int

    def call(self, path: str, payload: dict) -> dict: ...


class HttpTransport:
    def __init__(self, endpoint: ServiceEndpoint):
        self.endpoint = endpoint
        self.max_parallel = endpoint.max_parallel

    def call(self, path: str, payload: dict) -> dict:
        ep = self.endpoint
        url = ep.base_url.rstrip("/") + path
        delay = ep.backoff_s
        last: str = ""
        unreachable = True
        for attempt in range(1, ep.retries + 1):
            try:
                resp = requests.post(url, json=payload, timeout=ep.timeout_ms / 1000)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        body = resp.json()
                    except ValueError:
                        raise JobError(f"malformed response body from {path}") from None
                    if not isinstance(body, dict):
                        raise JobError(f"response from {path} is not a JSON object")
                    return body
                unreachable = False
                last = f"HTTP {resp.status_code}: {_error_text(resp)}"
                if resp.status_code < 500:
                    raise JobError(last)
            if attempt < ep.retries:
                log.debug("retrying %s after %s (attempt %d)", url, last, attempt)
                time.sleep(delay)
                delay *= 2
        if unreachable:
            raise ServiceUnavailable(f"{url} unreachable after {ep.retries} attempts: {last}")
        raise JobError(last)


def _error_text(resp) -> str:
    try:
        return str(resp.json().get("error", resp.text))
    except ValueError:
        return resp.text[:200]


class LocalTransport:
    """Routes protocol calls to an in-process backend (see ``MockBackend.handle``)."""

    def __init__(self, backend, max_parallel: int = 1):
        self.backend = backend
        self.max_parallel = max_parallel

    def call(self, path: str, payload: dict) -> dict:
        status, body = self.backend.handle(path, payload)
        if status != 200:
            raise JobError(f"{status}: {body.get('error', '')}")
        return body


def as_transport(service) -> Transport:
    if isinstance(service, ServiceEndpoint):
        return HttpTransport(service)
    if hasattr(service, "call"):
        return service
    if hasattr(service, "handle"):
        return LocalTransport(service)
    raise TypeError(f"cannot talk to {service!r}")


def _parallel_map(fn: Callable, items: Sequence, max_parallel: int) -> list:
    if max_parallel <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SynthJob:
    utterance_id: str
    speaker_id: str
    text: str
    prompt_audio_ref: str
    model_name: str

    def payload(self) -> dict:
        return {"id": self.utterance_id, "text": self.text, "prompt_ref": self.prompt_audio_ref,
                "model": self.model_name}


@dataclass(frozen=True)
class JobFailure:
    utterance_id: str
    reason: str


@dataclass
class SynthesisResult:
    utterances: list[Utterance] = field(default_factory=list)
    failures: list[JobFailure] = field(default_factory=list)


def estimate_duration(text: str) -> float:
    return round(0.4 + 0.32 * len(text.split()), 3)


def synthesize_batch(jobs: Sequence[SynthJob], tts) -> SynthesisResult:
    """Run synthesis jobs concurrently; results and failures are sorted by utterance id.

    Requests are idempotent by utterance id, so re-running the failed subset
    and merging with earlier successes gives the same final set.
    """
    for job in jobs:
        if not job.text.strip():
            raise ValueError(f"job {job.utterance_id!r} has empty text")
    transport = as_transport(tts)

    def run(job: SynthJob):
        try:
            body = transport.call("/synthesize", job.payload())
            if body.get("id") != job.utterance_id or not isinstance(body.get("audio_ref"), str):
                raise JobError("malformed /synthesize response")
            duration = body.get("duration_s", estimate_duration(job.text))
            if isinstance(duration, bool) or not isinstance(duration, (int, float)) or duration < 0:
                raise JobError("malformed duration in /synthesize response")
        except JobError as exc:
            return JobFailure(job.utterance_id, str(exc))
        return Utterance(
            id=job.utterance_id, speaker_id=job.speaker_id, text=job.text, audio_ref=body["audio_ref"],
            duration_s=float(duration), domain=Domain.SYNTHETIC, source_model=job.model_name,
        )

    result = SynthesisResult()
    for out in _parallel_map(run, list(jobs), transport.max_parallel):
        (result.failures if isinstance(out, JobFailure) else result.utterances).append(out)
    result.utterances.sort(key=lambda u: u.id)
    result.failures.sort(key=lambda f: f.utterance_id)
    return result


def transcribe(asr, audio_refs: Sequence[str]) -> list[str]:
    transport = as_transport(asr)

    def run(ref: str) -> str:
        try:
            body = transport.call("/transcribe", {"audio_ref": ref})
        except JobError as exc:
            raise ServiceUnavailable(f"transcription of {ref!r} failed: {exc}") from None
        if not isinstance(body.get("text"), str):
            raise ServiceUnavailable(f"malformed /transcribe response for {ref!r}")
        return body["text"]

    return _parallel_map(run, list(audio_refs), transport.max_parallel)


def embed(service, audio_refs: Sequence[str]) -> list[list[float]]:
    transport = as_transport(service)

    def run(ref: str) -> list[float]:
        try:
            body = transport.call("/embed", {"audio_ref": ref})
        except JobError as exc:
            raise ServiceUnavailable(f"embedding of {ref!r} failed: {exc}") from None
        emb = body.get("embedding")
        if not isinstance(emb, list) or not emb:
            raise ServiceUnavailable(f"malformed /embed response for {ref!r}")
        return [float(v) for v in emb]

    return _parallel_map(run, list(audio_refs), transport.max_parallel)
