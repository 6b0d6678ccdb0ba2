import numpy as np
import pytest

from synthaug.manifest import Domain, Utterance, build_manifest
from synthaug.toy import WorldConfig, generate_world, make_demo_manifest


def utt(uid, spk="s1", text="the quick brown fox", dur=1.0, domain=Domain.REAL, model=None, ref=None):
    return Utterance(uid, spk, text, ref or f"mem://{uid}", dur, domain, model)


def small_manifest(n_per_speaker=3, genders=None):
    genders = genders or {"A": "M", "B": "F"}
    utts = [utt(f"{s}{i}", s, f"sentence number {s} {i} here") for s in genders for i in range(n_per_speaker)]
    return build_manifest("tiny", genders, utts, seed=7)


@pytest.fixture(scope="session")
def small_world():
    cfg = WorldConfig(feature_dim=24, text_dim=8, ling_dim=8, n_speakers=4, noise_sigma=0.01,
                      calibration_pairs=256)
    return generate_world(cfg, seed=3)


@pytest.fixture(scope="session")
def small_corpus(small_world):
    return make_demo_manifest(small_world, utts_per_speaker=36, seed=3, include_noisy=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` records and prints one PASS/FAIL line for criterion ``n``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
