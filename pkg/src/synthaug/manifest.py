"""Corpus data model and the JSON-lines manifest format.

A manifest file is a header line describing the speakers, one JSON object per
utterance, and an optional ``{"sha256": ...}`` trailer covering every byte
before it. ``write_manifest`` always emits the trailer.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ParseError, ValidationError


class Domain(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


class Gender(str, enum.Enum):
    M = "M"
    F = "F"


RECORDING = "recording"
_ZS_PREFIX = "zs-tts:"


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker_id: str
    text: str
    audio_ref: str
    duration_s: float
    domain: Domain = Domain.REAL
    # None for recordings, otherwise the name of the zero-shot model that rendered it
    source_model: str | None = None

    @property
    def source(self) -> str:
        return RECORDING if self.source_model is None else _ZS_PREFIX + self.source_model

    @property
    def word_count(self) -> int:
        return len(self.text.split())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "speaker_id": self.speaker_id,
            "text": self.text,
            "audio_ref": self.audio_ref,
            "duration_s": self.duration_s,
            "domain": self.domain.value,
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Utterance":
        source = obj["source"]
        if not isinstance(source, str):
            raise TypeError("source must be a string")
        if source == RECORDING:
            model = None
        elif source.startswith(_ZS_PREFIX) and len(source) > len(_ZS_PREFIX):
            model = source[len(_ZS_PREFIX):]
        else:
            raise ValueError(f"unknown source {source!r}")
        for key in ("id", "speaker_id", "text", "audio_ref"):
            if not isinstance(obj[key], str):
                raise TypeError(f"{key} must be a string")
        duration = obj["duration_s"]
        if isinstance(duration, bool) or not isinstance(duration, (int, float)):
            raise TypeError("duration_s must be a number")
        return cls(
            id=obj["id"],
            speaker_id=obj["speaker_id"],
            text=obj["text"],
            audio_ref=obj["audio_ref"],
            duration_s=float(duration),
            domain=Domain(obj["domain"]),
            source_model=model,
        )


@dataclass(frozen=True)
class SpeakerRecord:
    speaker_id: str
    gender: Gender
    utterances: tuple[Utterance, ...] = ()

    @property
    def ids(self) -> list[str]:
        return [u.id for u in self.utterances]


@dataclass(frozen=True)
class Manifest:
    corpus_name: str
    speakers: tuple[SpeakerRecord, ...]
    created_with_seed: int | None = None

    def __iter__(self) -> Iterator[Utterance]:
        for spk in self.speakers:
            yield from spk.utterances

    def __len__(self) -> int:
        return sum(len(s.utterances) for s in self.speakers)

    def speaker(self, speaker_id: str) -> SpeakerRecord:
        for spk in self.speakers:
            if spk.speaker_id == speaker_id:
                return spk
        raise KeyError(speaker_id)

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self}


def build_manifest(
    corpus_name: str,
    genders: Mapping[str, Gender | str],
    utterances: Iterable[Utterance],
    seed: int | None = None,
) -> Manifest:
    """Group a flat utterance list under the declared speakers (in declaration order)."""
    grouped: dict[str, list[Utterance]] = {sid: [] for sid in genders}
    for utt in utterances:
        if utt.speaker_id not in grouped:
            raise ValidationError(f"utterance {utt.id!r} has undeclared speaker {utt.speaker_id!r}")
        grouped[utt.speaker_id].append(utt)
    speakers = tuple(
        SpeakerRecord(sid, Gender(genders[sid]), tuple(utts)) for sid, utts in grouped.items()
    )
    return Manifest(corpus_name, speakers, seed)


def validate_manifest(m: Manifest) -> None:
    if not m.speakers:
        raise ValidationError("manifest has no speakers")
    seen_speakers: set[str] = set()
    seen_ids: set[str] = set()
    for spk in m.speakers:
        if spk.speaker_id in seen_speakers:
            raise ValidationError(f"duplicate speaker id {spk.speaker_id!r}")
        seen_speakers.add(spk.speaker_id)
        if not isinstance(spk.gender, Gender):
            raise ValidationError(f"speaker {spk.speaker_id!r} has no valid gender")
        for utt in spk.utterances:
            if utt.id in seen_ids:
                raise ValidationError(f"duplicate utterance id {utt.id!r}")
            seen_ids.add(utt.id)
            validate_utterance(utt)
            if utt.speaker_id != spk.speaker_id:
                raise ValidationError(
                    f"utterance {utt.id!r} filed under {spk.speaker_id!r} "
                    f"but belongs to {utt.speaker_id!r}"
                )
    if not seen_ids:
        raise ValidationError("manifest contains no utterances")


def validate_utterance(utt: Utterance) -> None:
    if not utt.text.strip():
        raise ValidationError(f"utterance {utt.id!r} has empty text")
    if not utt.duration_s >= 0:
        raise ValidationError(f"utterance {utt.id!r} has negative duration {utt.duration_s}")
    if (utt.domain is Domain.SYNTHETIC) != (utt.source_model is not None):
        raise ValidationError(f"utterance {utt.id!r}: domain {utt.domain.value} contradicts source {utt.source}")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def manifest_bytes(m: Manifest) -> bytes:
    validate_manifest(m)
    header = {
        "corpus": m.corpus_name,
        "speakers": [{"id": s.speaker_id, "gender": s.gender.value} for s in m.speakers],
    }
    if m.created_with_seed is not None:
        header["seed"] = m.created_with_seed
    lines = [_dumps(header)] + [_dumps(u.to_json()) for u in m]
    body = ("\n".join(lines) + "\n").encode("utf-8")
    trailer = _dumps({"sha256": hashlib.sha256(body).hexdigest()}) + "\n"
    return body + trailer.encode("utf-8")


def write_manifest(m: Manifest, path: str | Path) -> None:
    Path(path).write_bytes(manifest_bytes(m))


def load_manifest(path: str | Path) -> Manifest:
    return parse_manifest(Path(path).read_bytes())


def parse_manifest(raw: bytes) -> Manifest:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        raise ParseError("invalid UTF-8", line) from None

    # split on "\n" only: str.splitlines would also break on U+2028 inside strings
    lines = [line + "\n" for line in text.split("\n")]
    lines[-1] = lines[-1][:-1]
    records: list[tuple[int, dict]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno)
        records.append((lineno, obj))
    if not records:
        raise ParseError("empty manifest", 1)

    last_lineno, last = records[-1]
    if set(last) == {"sha256"}:
        body = "".join(lines[: last_lineno - 1]).encode("utf-8")
        if hashlib.sha256(body).hexdigest() != last["sha256"]:
            raise ParseError("checksum mismatch", last_lineno)
        records.pop()
        if not records:
            raise ParseError("manifest has no header", last_lineno)

    header_lineno, header = records[0]
    try:
        corpus = header["corpus"]
        speaker_meta = header["speakers"]
        seed = header.get("seed")
        if not isinstance(corpus, str) or not isinstance(speaker_meta, list):
            raise TypeError("bad header types")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise TypeError("seed must be an integer")
        genders: dict[str, str] = {}
        for entry in speaker_meta:
            sid = entry["id"]
            if not isinstance(sid, str):
                raise TypeError("speaker id must be a string")
            if sid in genders:
                raise ValidationError(f"duplicate speaker id {sid!r}")
            genders[sid] = entry["gender"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad header: {exc}", header_lineno) from None
    for sid, g in genders.items():
        if g not in ("M", "F"):
            raise ValidationError(f"speaker {sid!r} has invalid gender {g!r}")

    utterances = []
    for lineno, obj in records[1:]:
        try:
            utterances.append(Utterance.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad utterance record: {exc}", lineno) from None
    m = build_manifest(corpus, genders, utterances, seed)
    validate_manifest(m)
    return m


# Banned-token classes for transcript filtering. "symbols" allows letters,
# digits (left to the "digits" class), apostrophe, hyphen, whitespace and
# ordinary sentence punctuation.
BANNED_TOKEN_CLASSES: dict[str, re.Pattern] = {
    "digits": re.compile(r"\d"),
    "bracketed": re.compile(r"[\[\(<{][^\]\)>}]*[\]\)>}]"),
    "symbols": re.compile(r"[^\w\s'\-.,;:!?\"]|_"),
}
DEFAULT_BANNED = frozenset(BANNED_TOKEN_CLASSES)


def has_banned_tokens(text: str, banned: Iterable[str] = DEFAULT_BANNED) -> bool:
    for name in banned:
        try:
            pattern = BANNED_TOKEN_CLASSES[name]
        except KeyError:
            raise ValueError(f"unknown banned token class {name!r}") from None
        if pattern.search(text):
            return True
    return False


def filter_transcripts(
    m: Manifest, min_words: int = 3, banned_token_classes: Iterable[str] = DEFAULT_BANNED
) -> Manifest:
    """Drop utterances shorter than ``min_words`` or containing banned tokens."""
    if min_words < 1:
        raise ValueError("min_words must be >= 1")
    banned = frozenset(banned_token_classes)

    def keep(u: Utterance) -> bool:
        return u.word_count >= min_words and not has_banned_tokens(u.text, banned)

    speakers = tuple(
        replace(spk, utterances=tuple(u for u in spk.utterances if keep(u))) for spk in m.speakers
    )
    return replace(m, speakers=speakers)
