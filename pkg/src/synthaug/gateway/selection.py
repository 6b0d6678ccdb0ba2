"""Reference-prompt choice, hallucination filtering and extra-transcript sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .._seeding import rng_for
from ..errors import EmptyInput, PoolTooSmall
from ..manifest import Utterance
from ..metrics import wer
from .client import transcribe

DEFAULT_WER_THRESHOLD = 0.05
DEFAULT_EXTRA_TRANSCRIPTS = 800


def select_reference_prompt(real_utts: Sequence[Utterance], max_prompt_s: float) -> Utterance:
    """Longest utterance no longer than ``max_prompt_s``; ties go to the smallest id.

    When nothing fits, fall back to the shortest utterance so that no speaker
    is skipped.
    """
    if not real_utts:
        raise EmptyInput("no real utterances to choose a prompt from")
    fitting = [u for u in real_utts if u.duration_s <= max_prompt_s]
    if fitting:
        return min(fitting, key=lambda u: (-u.duration_s, u.id))
    return min(real_utts, key=lambda u: (u.duration_s, u.id))


@dataclass(frozen=True)
class FilterVerdict:
    utterance_id: str
    measured_wer: float
    kept: bool
    hypothesis: str = ""

    def to_json(self) -> dict:
        return {"utterance_id": self.utterance_id, "measured_wer": self.measured_wer, "kept": self.kept,
                "hypothesis": self.hypothesis}


def verdict_for(utterance_id: str, measured_wer: float, threshold: float = DEFAULT_WER_THRESHOLD,
                hypothesis: str = "") -> FilterVerdict:
    # strictly below the threshold is kept
    return FilterVerdict(utterance_id, measured_wer, measured_wer < threshold, hypothesis)


def filter_hallucinations(
    synth: Sequence[Utterance], asr, threshold: float = DEFAULT_WER_THRESHOLD
) -> tuple[list[Utterance], list[Utterance], list[FilterVerdict]]:
    """Transcribe each synthetic utterance and keep those with WER below ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    hyps = transcribe(asr, [u.audio_ref for u in synth])
    kept, rejected, verdicts = [], [], []
    for utt, hyp in zip(synth, hyps):
        v = verdict_for(utt.id, wer(utt.text, hyp).rate, threshold, hyp)
        verdicts.append(v)
        (kept if v.kept else rejected).append(utt)
    return kept, rejected, verdicts


def extra_synth_transcripts(pool: Sequence[str], n: int = DEFAULT_EXTRA_TRANSCRIPTS, seed: int = 0) -> list[str]:
    """``n`` distinct texts drawn without replacement from the deduplicated pool."""
    unique = sorted(set(pool))
    if n < 0:
        raise ValueError("n must be non-negative")
    if len(unique) < n:
        raise PoolTooSmall(f"pool has {len(unique)} distinct texts, need {n}")
    picks = rng_for(seed, "extra-transcripts").choice(len(unique), size=n, replace=False)
    return [unique[i] for i in picks]
