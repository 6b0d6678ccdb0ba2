"""Deterministic demo corpora for the toy world."""

from __future__ import annotations

from .._seeding import rng_for
from ..gateway.client import estimate_duration
from ..manifest import Domain, Manifest, Utterance, build_manifest
from .world import ToyWorld, asset_ref

_WORDS = """
the a an and but or so of to in on at by for with from into over under after
before about near across through between during while because if when then
there here where what which who this that these those my your his her our their
old new small large long short bright dark quiet loud early late warm cold green
blue red yellow golden silver happy tired careful gentle simple strange sudden
house river garden window morning evening winter summer letter story village
forest mountain station market teacher doctor farmer sailor child mother father
friend stranger captain neighbor kitchen table chair road bridge harbor island
city country valley meadow candle lamp book paper music voice question answer
reason moment journey promise secret picture corner silence thunder weather
walked talked opened closed carried followed watched noticed wondered remembered
answered promised painted gathered crossed reached turned smiled laughed waited
listened traveled returned started finished believed whispered called asked
quickly slowly softly nearly almost never always often rarely perhaps together
again already still only even just once twice very quite rather
""".split()

_NOISY_TRANSCRIPTS = (
    "hi there",
    "[laugh] well that was unexpected",
    "call me at 555 0199 tomorrow",
    "she paid $40 for the old lamp",
    "yes",
)


def make_sentence(rng, min_words: int = 4, max_words: int = 14) -> str:
    n = int(rng.integers(min_words, max_words + 1))
    words = [_WORDS[i] for i in rng.integers(len(_WORDS), size=n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def make_text_pool(n: int, seed: int = 0, tag: str = "pool") -> list[str]:
    """``n`` distinct pseudo-English sentences."""
    rng = rng_for(seed, "text-pool", tag)
    seen: dict[str, None] = {}
    while len(seen) < n:
        seen.setdefault(make_sentence(rng))
    return list(seen)


def make_demo_manifest(world: ToyWorld, utts_per_speaker: int = 240, seed: int = 0,
                       include_noisy: bool = True, corpus_name: str = "toy-demo") -> Manifest:
    """Real recordings for every world speaker, plus a few transcripts the
    transcript filter is expected to drop."""
    rng = rng_for(seed, "demo-durations")
    utterances = []
    for sid in sorted(world.speakers):
        texts = make_text_pool(utts_per_speaker, seed, tag=f"spk-{sid}")
        if include_noisy:
            texts = texts + list(_NOISY_TRANSCRIPTS)
        for i, text in enumerate(texts):
            uid = f"{sid}_{i:04d}"
            jitter = float(rng.uniform(-0.3, 0.3))
            utterances.append(Utterance(
                id=uid, speaker_id=sid, text=text, audio_ref=asset_ref(sid, uid),
                duration_s=round(max(0.5, estimate_duration(text) + jitter), 3), domain=Domain.REAL,
            ))
    genders = {sid: world.genders[sid] for sid in sorted(world.speakers)}
    return build_manifest(corpus_name, genders, utterances, seed)
