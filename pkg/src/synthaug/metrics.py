"""Objective and statistical measures: edit distance, CER/WER, SECS, run
aggregation, the exact two-sided binomial test and MOS intervals."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyReference, TooFewScores, UnbalancedRuns, ZeroVector

SECS_SLACK = 1e-9


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> int:
    """Unit-cost Levenshtein distance between two token sequences."""
    # a shared prefix or suffix never costs an edit
    start, stop = 0, min(len(ref), len(hyp))
    while start < stop and ref[start] == hyp[start]:
        start += 1
    end_r, end_h = len(ref), len(hyp)
    while end_r > start and end_h > start and ref[end_r - 1] == hyp[end_h - 1]:
        end_r -= 1
        end_h -= 1
    ref, hyp = ref[start:end_r], hyp[start:end_h]
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i]
        left = i
        for j, h in enumerate(hyp):
            best = prev[j] + (r != h)
            if prev[j + 1] + 1 < best:
                best = prev[j + 1] + 1
            if left + 1 < best:
                best = left + 1
            left = best
            cur.append(best)
        prev = cur
    return prev[-1]


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation (keeping apostrophes inside words), collapse whitespace."""
    out = []
    for ch in text.lower():
        if ch == "'" or not unicodedata.category(ch).startswith("P"):
            out.append(ch)
        else:
            out.append(" ")
    words = [w.strip("'") for w in "".join(out).split()]
    return " ".join(w for w in words if w)


@dataclass(frozen=True)
class ErrorRate:
    edits: int
    ref_len: int

    def __post_init__(self):
        if self.ref_len < 1:
            raise EmptyReference("reference length must be >= 1")
        if self.edits < 0:
            raise ValueError("edits must be non-negative")

    @property
    def rate(self) -> float:
        return self.edits / self.ref_len

    def __add__(self, other: "ErrorRate") -> "ErrorRate":
        return ErrorRate(self.edits + other.edits, self.ref_len + other.ref_len)


def wer(ref: str, hyp: str) -> ErrorRate:
    ref_words = normalize_text(ref).split()
    if not ref_words:
        raise EmptyReference(f"reference {ref!r} is empty after normalization")
    return ErrorRate(edit_distance(ref_words, normalize_text(hyp).split()), len(ref_words))


def cer(ref: str, hyp: str) -> ErrorRate:
    # spaces count as characters (after whitespace collapse)
    ref_chars = normalize_text(ref)
    if not ref_chars:
        raise EmptyReference(f"reference {ref!r} is empty after normalization")
    return ErrorRate(edit_distance(ref_chars, normalize_text(hyp)), len(ref_chars))


def secs(e1, e2) -> float:
    """Cosine similarity between two speaker embeddings."""
    a = np.asarray(e1, dtype=float).ravel()
    b = np.asarray(e2, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding sizes differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cannot score a zero embedding")
    value = float(a @ b / (na * nb))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class MetricReport:
    speaker_id: str
    seed: int
    config_tag: str
    secs: float
    cer: ErrorRate
    wer: ErrorRate

    def __post_init__(self):
        if abs(self.secs) > 1 + SECS_SLACK:
            raise ValueError(f"SECS {self.secs} outside [-1, 1]")


CSV_FIELDS = ("config_tag", "speaker_id", "seed", "secs", "cer_pct", "wer_pct",
              "cer_edits", "cer_ref_len", "wer_edits", "wer_ref_len")


def reports_to_csv(reports: Iterable[MetricReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in reports:
        writer.writerow([
            r.config_tag, r.speaker_id, r.seed, f"{r.secs:.6f}",
            f"{100 * r.cer.rate:.4f}", f"{100 * r.wer.rate:.4f}",
            r.cer.edits, r.cer.ref_len, r.wer.edits, r.wer.ref_len,
        ])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[MetricReport]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        MetricReport(
            speaker_id=row["speaker_id"],
            seed=int(row["seed"]),
            config_tag=row["config_tag"],
            secs=float(row["secs"]),
            cer=ErrorRate(int(row["cer_edits"]), int(row["cer_ref_len"])),
            wer=ErrorRate(int(row["wer_edits"]), int(row["wer_ref_len"])),
        )
        for row in rows
    ]


@dataclass(frozen=True)
class ConfigSummary:
    config_tag: str
    secs: float
    cer: float
    wer: float
    n_speakers: int
    n_seeds: int
    per_speaker: dict

    def to_json(self) -> dict:
        return {
            "config": self.config_tag,
            "SECS": round(self.secs, 6),
            "CER": round(100 * self.cer, 4),
            "WER": round(100 * self.wer, 4),
            "n_speakers": self.n_speakers,
            "n_seeds": self.n_seeds,
            "per_speaker": {
                k: {"SECS": round(v["secs"], 6), "CER": round(100 * v["cer"], 4), "WER": round(100 * v["wer"], 4)}
                for k, v in self.per_speaker.items()
            },
        }


def _mean(values: Iterable[float]) -> float:
    values = sorted(values)
    return math.fsum(values) / len(values)


def aggregate_runs(reports: Iterable[MetricReport]) -> dict[str, ConfigSummary]:
    """Mean over seeds within each speaker, then unweighted mean over speakers.

    Sums are taken over sorted values with ``math.fsum`` so the result does not
    depend on report order.
    """
    cells: dict[str, dict[str, list[MetricReport]]] = defaultdict(lambda: defaultdict(list))
    for r in reports:
        cells[r.config_tag][r.speaker_id].append(r)

    out: dict[str, ConfigSummary] = {}
    for tag in sorted(cells):
        by_speaker = cells[tag]
        seed_sets = {sid: sorted(r.seed for r in rs) for sid, rs in by_speaker.items()}
        counts = {len(s) for s in seed_sets.values()}
        if len(counts) != 1:
            raise UnbalancedRuns(f"config {tag!r} has unequal seed counts per speaker: {seed_sets}")
        for sid, seeds in seed_sets.items():
            if len(set(seeds)) != len(seeds):
                raise UnbalancedRuns(f"config {tag!r}, speaker {sid!r} repeats a seed: {seeds}")
        per_speaker = {
            sid: {
                "secs": _mean(r.secs for r in rs),
                "cer": _mean(r.cer.rate for r in rs),
                "wer": _mean(r.wer.rate for r in rs),
            }
            for sid, rs in sorted(by_speaker.items())
        }
        out[tag] = ConfigSummary(
            config_tag=tag,
            secs=_mean(v["secs"] for v in per_speaker.values()),
            cer=_mean(v["cer"] for v in per_speaker.values()),
            wer=_mean(v["wer"] for v in per_speaker.values()),
            n_speakers=len(per_speaker),
            n_seeds=counts.pop(),
            per_speaker=per_speaker,
        )
    return out


def summary_to_json(summary: dict[str, ConfigSummary]) -> str:
    return json.dumps([s.to_json() for s in summary.values()], indent=2)


def binomial_two_sided(k: int, n: int) -> float:
    """Exact two-sided p-value for ``k`` successes in ``n`` fair trials.

    Sums the probabilities of every outcome no more likely than the observed
    one. Under p = 1/2 all probabilities share the denominator 2**n, so the
    comparison is done on integer binomial coefficients.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    observed = math.comb(n, k)
    tail = sum(c for c in (math.comb(n, i) for i in range(n + 1)) if c <= observed)
    return float(min(Fraction(1), Fraction(tail, 2 ** n)))


def mos_ci(scores: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean opinion score and the half-width of its normal-approximation 95% CI."""
    if len(scores) < 2:
        raise TooFewScores(f"need at least 2 scores, got {len(scores)}")
    for s in scores:
        if not 1 <= s <= 5:
            raise ValueError(f"score {s} outside [1, 5]")
    mean = statistics.fmean(scores)
    return mean, z * statistics.stdev(scores) / math.sqrt(len(scores))


def abx_preference(wins: int, trials: int) -> dict:
    """Preference percentage for system A and its two-sided binomial p-value."""
    p = binomial_two_sided(wins, trials)
    return {"wins": wins, "trials": trials, "preference_pct": 100 * wins / trials,
            "p_value": p, "significant": p < 0.05}
