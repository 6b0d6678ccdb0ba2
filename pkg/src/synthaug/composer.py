"""Splits, low-resource subsets and domain-labelled training compositions.

Every seeded shuffle runs over lexicographically sorted ids, so results depend
only on the id *set* and the seed, never on manifest order.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._seeding import rng_for
from .errors import InsufficientSpeakers, OverlapError, TooFewUtterances
from .manifest import Domain, SpeakerRecord

DEFAULT_RATIO = (10, 1, 1)
DEFAULT_REAL_FRACTION = 0.10
DEFAULT_OS_FACTOR = 3


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitAssignment:
    speaker_id: str
    train_ids: tuple[str, ...]
    valid_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int

    def to_json(self) -> dict:
        return {
            "speaker_id": self.speaker_id,
            "seed": self.seed,
            "train": list(self.train_ids),
            "valid": list(self.valid_ids),
            "test": list(self.test_ids),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        return cls(obj["speaker_id"], tuple(obj["train"]), tuple(obj["valid"]), tuple(obj["test"]), obj["seed"])


def split_sizes(n: int, ratio: Sequence[int] = DEFAULT_RATIO) -> tuple[int, int, int]:
    """Valid and test sizes are rounded half-up; train takes the remainder."""
    total = sum(ratio)
    valid = round_half_up(n * ratio[1] / total)
    test = round_half_up(n * ratio[2] / total)
    return n - valid - test, valid, test


def split_speaker(rec: SpeakerRecord, ratio: Sequence[int] = DEFAULT_RATIO, seed: int = 0) -> SplitAssignment:
    if len(ratio) != 3 or any(r < 1 for r in ratio):
        raise ValueError(f"ratio must be three positive integers, got {ratio!r}")
    ids = sorted(rec.ids)
    if len(ids) < sum(ratio):
        raise TooFewUtterances(
            f"speaker {rec.speaker_id!r} has {len(ids)} utterances, need at least {sum(ratio)}"
        )
    n_train, n_valid, _ = split_sizes(len(ids), ratio)
    order = rng_for(seed, "split", rec.speaker_id).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return SplitAssignment(
        speaker_id=rec.speaker_id,
        train_ids=tuple(sorted(shuffled[:n_train])),
        valid_ids=tuple(sorted(shuffled[n_train:n_train + n_valid])),
        test_ids=tuple(sorted(shuffled[n_train + n_valid:])),
        seed=seed,
    )


def real_subset_size(n: int, fraction: float) -> int:
    if n == 0:
        return 0
    return min(n, max(1, round_half_up(fraction * n)))


def sample_real_subset(
    train_ids: Sequence[str], fraction: float = DEFAULT_REAL_FRACTION, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Return ``(real_ids, to_synthesize_ids)``, both in the order of ``train_ids``."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    ordered = sorted(train_ids)
    k = real_subset_size(len(ordered), fraction)
    picked = rng_for(seed, "real-subset", "\x1e".join(ordered)).choice(len(ordered), size=k, replace=False)
    chosen = {ordered[i] for i in picked}
    real = [i for i in train_ids if i in chosen]
    rest = [i for i in train_ids if i not in chosen]
    return real, rest


@dataclass(frozen=True)
class PlanEntry:
    utterance_id: str
    domain_label: Domain
    multiplicity: int


@dataclass(frozen=True)
class CompositionPlan:
    entries: tuple[PlanEntry, ...]
    dc_enabled: bool
    os_factor: int
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def effective_size(self) -> int:
        return sum(e.multiplicity for e in self.entries)

    @property
    def domain_labels_used(self) -> bool:
        # labels are always recorded; without DC the trainer ignores them
        return self.dc_enabled

    def expanded_ids(self) -> list[str]:
        """Utterance ids with each entry repeated ``multiplicity`` times, in entry order."""
        return [e.utterance_id for e in self.entries for _ in range(e.multiplicity)]

    def to_json(self) -> dict:
        return {
            "dc_enabled": self.dc_enabled,
            "domain_labels_used": self.domain_labels_used,
            "os_factor": self.os_factor,
            "seed": self.seed,
            "effective_size": self.effective_size,
            "meta": self.meta,
            "entries": [
                {"utterance_id": e.utterance_id, "domain": e.domain_label.value, "multiplicity": e.multiplicity}
                for e in self.entries
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CompositionPlan":
        entries = tuple(
            PlanEntry(e["utterance_id"], Domain(e["domain"]), int(e["multiplicity"])) for e in obj["entries"]
        )
        return cls(entries, bool(obj["dc_enabled"]), int(obj["os_factor"]), int(obj.get("seed", 0)),
                   dict(obj.get("meta", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def compose_training_set(
    real: Sequence[str],
    synth: Sequence[str],
    os_factor: int = DEFAULT_OS_FACTOR,
    dc_enabled: bool = True,
    seed: int = 0,
    meta: dict | None = None,
) -> CompositionPlan:
    """Real entries get multiplicity ``os_factor`` (total occurrences), synthetic ones 1."""
    if os_factor < 1:
        raise ValueError("os_factor must be >= 1")
    overlap = sorted(set(real) & set(synth))
    if overlap:
        raise OverlapError(f"ids in both real and synthetic lists: {overlap[:5]}")
    entries = [PlanEntry(i, Domain.REAL, os_factor) for i in real]
    entries += [PlanEntry(i, Domain.SYNTHETIC, 1) for i in synth]
    return CompositionPlan(tuple(entries), dc_enabled, os_factor, seed, dict(meta or {}))


def random_derangement(items: Sequence[str], rng) -> dict[str, str]:
    if len(items) < 2:
        raise InsufficientSpeakers(f"cannot derange {len(items)} item(s)")
    while True:
        perm = rng.permutation(len(items))
        if all(perm[i] != i for i in range(len(items))):
            return {items[i]: items[perm[i]] for i in range(len(items))}


def pair_mismatched(speakers: Iterable[SpeakerRecord], seed: int = 0) -> dict[str, str]:
    """Map each target speaker to a different donor speaker of the same gender."""
    groups: dict[str, list[str]] = defaultdict(list)
    for spk in speakers:
        groups[spk.gender.value].append(spk.speaker_id)
    if not groups:
        raise InsufficientSpeakers("no speakers given")
    pairing: dict[str, str] = {}
    for gender in sorted(groups):
        ids = sorted(groups[gender])
        if len(ids) < 2:
            raise InsufficientSpeakers(f"gender {gender} has {len(ids)} speaker(s); need at least 2")
        pairing.update(random_derangement(ids, rng_for(seed, "mismatch", gender)))
    return dict(sorted(pairing.items()))
