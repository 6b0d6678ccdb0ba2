import socket
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthaug.errors import EmptyInput, PoolTooSmall, ServiceUnavailable
from synthaug.gateway.client import (
    LocalTransport,
    ServiceEndpoint,
    SynthJob,
    embed,
    synthesize_batch,
    transcribe,
)
from synthaug.gateway.mock import MockBackend, mock_services
from synthaug.gateway.selection import (
    extra_synth_transcripts,
    filter_hallucinations,
    select_reference_prompt,
    verdict_for,
)
from synthaug.manifest import Domain
from synthaug.metrics import secs
from synthaug.toy.world import WorldConfig, asset_ref, generate_world

from conftest import utt


@pytest.fixture(scope="module")
def backend_and_corpus(small_world, small_corpus):
    return small_world, list(small_corpus)


def jobs_for(corpus, n, model="fish-speech", prefix="syn"):
    prompt = corpus[0]
    return [SynthJob(f"{prefix}_{i:04d}", prompt.speaker_id, f"words number {i} here", prompt.audio_ref, model)
            for i in range(n)]


def dead_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


# prompt selection

def test_prompt_longest_that_fits():
    utts = [utt("a", dur=3.0), utt("b", dur=9.5), utt("c", dur=12.0)]
    assert select_reference_prompt(utts, 10.0).id == "b"


def test_prompt_ties_smallest_id():
    utts = [utt("z", dur=4.0), utt("m", dur=4.0), utt("q", dur=1.0)]
    assert select_reference_prompt(utts, 10.0).id == "m"


def test_prompt_boundary_inclusive():
    assert select_reference_prompt([utt("a", dur=10.0), utt("b", dur=2.0)], 10.0).id == "a"


def test_prompt_fallback_shortest():
    assert select_reference_prompt([utt("a", dur=15.0), utt("b", dur=11.0)], 10.0).id == "b"


def test_prompt_empty():
    with pytest.raises(EmptyInput):
        select_reference_prompt([], 10.0)


# hallucination filter

def test_filter_boundary():
    assert verdict_for("u", 0.049).kept
    assert not verdict_for("u", 0.050).kept
    assert verdict_for("u", 0.0).kept


class FixedASR:
    max_parallel = 1

    def __init__(self, hyps):
        self.hyps = hyps

    def call(self, path, payload):
        return {"text": self.hyps[payload["audio_ref"]]}


def test_filter_keeps_exact_and_rejects_corrupted():
    synth = [utt(f"s{i}", text=" ".join(["word"] * 20), domain=Domain.SYNTHETIC, model="m", ref=f"r{i}")
             for i in range(3)]
    hyps = {"r0": " ".join(["word"] * 20), "r1": " ".join(["word"] * 19 + ["bird"]),
            "r2": " ".join(["word"] * 19)}
    kept, rejected, verdicts = filter_hallucinations(synth, FixedASR(hyps))
    # one error in twenty words is exactly the threshold and therefore rejected
    assert [u.id for u in kept] == ["s0"]
    assert [u.id for u in rejected] == ["s1", "s2"]
    assert [v.measured_wer for v in verdicts] == [0.0, 0.05, 0.05]


def test_filter_threshold_one_keeps_everything_reasonable():
    synth = [utt("s0", text="a b c d", domain=Domain.SYNTHETIC, model="m", ref="r0")]
    kept, _, _ = filter_hallucinations(synth, FixedASR({"r0": "a b x d"}), threshold=1.0)
    assert len(kept) == 1


def test_filter_threshold_range():
    with pytest.raises(ValueError):
        filter_hallucinations([], FixedASR({}), threshold=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=0, max_size=30), st.floats(0.01, 1.0))
def test_filter_partitions(n_bad, threshold):
    synth, hyps = [], {}
    for i, bad in enumerate(n_bad):
        ref = f"r{i}"
        synth.append(utt(f"s{i:03d}", text=" ".join(["w"] * 10), domain=Domain.SYNTHETIC, model="m", ref=ref))
        hyps[ref] = " ".join(["w"] * (10 - min(bad, 10)) + ["x"] * bad)
    kept, rejected, verdicts = filter_hallucinations(synth, FixedASR(hyps), threshold)
    assert len(kept) + len(rejected) == len(synth)
    assert not {u.id for u in kept} & {u.id for u in rejected}
    assert all((v.measured_wer < threshold) == v.kept for v in verdicts)


# extra transcripts

def test_extra_transcripts_distinct_and_deterministic():
    pool = [f"text {i}" for i in range(1000)] + ["text 1", "text 2"]
    a = extra_synth_transcripts(pool, 800, seed=3)
    assert len(a) == len(set(a)) == 800
    assert set(a) <= set(pool)
    assert a == extra_synth_transcripts(list(reversed(pool)), 800, seed=3)


def test_extra_transcripts_whole_pool_and_empty():
    assert sorted(extra_synth_transcripts(["b", "a", "a"], 2)) == ["a", "b"]
    assert extra_synth_transcripts(["a"], 0) == []


def test_extra_transcripts_pool_too_small():
    with pytest.raises(PoolTooSmall):
        extra_synth_transcripts(["a", "a", "b"], 3)


# mock services over HTTP

def test_batch_of_180_over_http(backend_and_corpus):
    world, corpus = backend_and_corpus
    with mock_services(world, corpus) as server:
        res = synthesize_batch(jobs_for(corpus, 180), server.endpoint(max_parallel=8))
    assert len(res.utterances) == 180 and not res.failures
    assert [u.id for u in res.utterances] == sorted(u.id for u in res.utterances)
    assert all(u.domain is Domain.SYNTHETIC and u.source_model == "fish-speech" for u in res.utterances)


def test_empty_batch(backend_and_corpus):
    world, corpus = backend_and_corpus
    res = synthesize_batch([], MockBackend(world, corpus))
    assert res.utterances == [] and res.failures == []


def test_malformed_and_failing_jobs_are_isolated(backend_and_corpus):
    world, corpus = backend_and_corpus
    jobs = jobs_for(corpus, 10)
    faults = {jobs[3].utterance_id: "malformed", jobs[7].utterance_id: "error"}
    with mock_services(world, corpus, faults=faults) as server:
        res = synthesize_batch(jobs, server.endpoint(max_parallel=4, retries=2, backoff_s=0.001))
    assert [f.utterance_id for f in res.failures] == [jobs[3].utterance_id, jobs[7].utterance_id]
    assert len(res.utterances) == 8


def test_flaky_job_succeeds_after_retries(backend_and_corpus):
    world, corpus = backend_and_corpus
    jobs = jobs_for(corpus, 3)
    with mock_services(world, corpus, faults={jobs[1].utterance_id: "flaky:2"}) as server:
        res = synthesize_batch(jobs, server.endpoint(retries=3, backoff_s=0.001))
    assert len(res.utterances) == 3 and not res.failures


def test_flaky_job_exhausts_retries(backend_and_corpus):
    world, corpus = backend_and_corpus
    jobs = jobs_for(corpus, 2)
    with mock_services(world, corpus, faults={jobs[0].utterance_id: "flaky:5"}) as server:
        res = synthesize_batch(jobs, server.endpoint(retries=2, backoff_s=0.001))
    assert [f.utterance_id for f in res.failures] == [jobs[0].utterance_id]
    assert "503" in res.failures[0].reason


def test_unreachable_service():
    ep = ServiceEndpoint(f"http://127.0.0.1:{dead_port()}", timeout_ms=500, retries=2, backoff_s=0.001)
    job = SynthJob("x", "s", "some text", "toy:real/s/x", "fish-speech")
    t0 = time.monotonic()
    with pytest.raises(ServiceUnavailable):
        synthesize_batch([job], ep)
    with pytest.raises(ServiceUnavailable):
        transcribe(ep, ["toy:real/s/x"])
    assert time.monotonic() - t0 < 10


def test_retry_is_idempotent(backend_and_corpus):
    world, corpus = backend_and_corpus
    backend = MockBackend(world, corpus)
    jobs = jobs_for(corpus, 6)
    first = synthesize_batch(jobs, backend)
    again = synthesize_batch(jobs[2:4], backend)
    merged = {u.id: u for u in first.utterances}
    merged.update({u.id: u for u in again.utterances})
    assert sorted(merged.values(), key=lambda u: u.id) == first.utterances
    assert embed(backend, [first.utterances[2].audio_ref]) == embed(backend, [again.utterances[0].audio_ref])


def test_empty_text_rejected(backend_and_corpus):
    world, corpus = backend_and_corpus
    with pytest.raises(ValueError):
        synthesize_batch([SynthJob("x", "s", "  ", corpus[0].audio_ref, "fish-speech")], MockBackend(world, corpus))


def test_unknown_audio_ref_is_reported(backend_and_corpus):
    world, corpus = backend_and_corpus
    with pytest.raises(ServiceUnavailable):
        embed(LocalTransport(MockBackend(world, corpus)), ["toy:real/M01/nope"])


# semantics of the mock backend

def test_real_embedding_matches_reference_without_noise():
    world = generate_world(WorldConfig(feature_dim=24, text_dim=8, ling_dim=8, n_speakers=4, noise_sigma=0.0,
                                       calibration_pairs=64), seed=1)
    u = utt("M01_0000", "M01", text="a quiet river", ref=asset_ref("M01", "M01_0000"))
    [e] = embed(MockBackend(world, [u]), [u.audio_ref])
    assert secs(e, world.speaker_reference("M01")) == pytest.approx(1.0, abs=1e-12)


def test_synthetic_similarity_near_calibration(backend_and_corpus):
    world, corpus = backend_and_corpus
    backend = MockBackend(world, corpus)
    by_spk = {}
    for u in corpus:
        by_spk.setdefault(u.speaker_id, u)
    for model, target in world_targets(world).items():
        jobs = [SynthJob(f"{model}-{sid}-{i}", sid, f"sample sentence {i}", p.audio_ref, model)
                for sid, p in by_spk.items() for i in range(40)]
        res = synthesize_batch(jobs, backend)
        embs = embed(backend, [u.audio_ref for u in res.utterances])
        refs = embed(backend, [by_spk[u.speaker_id].audio_ref for u in res.utterances])
        assert np.mean([secs(a, b) for a, b in zip(embs, refs)]) == pytest.approx(target, abs=0.02)


def world_targets(world):
    return WorldConfig().secs_targets


def test_zero_corruption_transcribes_exactly(backend_and_corpus):
    world, corpus = backend_and_corpus
    backend = MockBackend(world, corpus, corruption_p=0.0)
    refs = [u.audio_ref for u in corpus[:20]]
    assert transcribe(backend, refs) == [u.text for u in corpus[:20]]
