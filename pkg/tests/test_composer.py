import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthaug.composer import (
    CompositionPlan,
    compose_training_set,
    pair_mismatched,
    real_subset_size,
    round_half_up,
    sample_real_subset,
    split_sizes,
    split_speaker,
)
from synthaug.errors import InsufficientSpeakers, OverlapError, TooFewUtterances
from synthaug.manifest import Domain, Gender, SpeakerRecord

from conftest import utt


def speaker(n, sid="s1", gender="F"):
    return SpeakerRecord(sid, Gender(gender), tuple(utt(f"{sid}_{i:04d}", sid) for i in range(n)))


def _oracle_sizes(n):
    # independent restatement: nearest integer to n/12, halves rounded up
    q, r = divmod(n, 12)
    v = q + (1 if 2 * r >= 12 else 0)
    return n - 2 * v, v, v


def test_split_240_is_200_20_20():
    a = split_speaker(speaker(240), seed=0)
    assert (len(a.train_ids), len(a.valid_ids), len(a.test_ids)) == (200, 20, 20)


def test_split_12_is_10_1_1():
    a = split_speaker(speaker(12))
    assert (len(a.train_ids), len(a.valid_ids), len(a.test_ids)) == (10, 1, 1)


def test_split_too_few():
    with pytest.raises(TooFewUtterances):
        split_speaker(speaker(11))


def test_split_seeds_differ_but_sizes_match():
    rec = speaker(240)
    a, b = split_speaker(rec, seed=1), split_speaker(rec, seed=2)
    assert a.train_ids != b.train_ids
    assert len(a.train_ids) == len(b.train_ids)


def test_split_ignores_input_order():
    rec = speaker(60)
    shuffled = SpeakerRecord(rec.speaker_id, rec.gender, tuple(reversed(rec.utterances)))
    assert split_speaker(rec, seed=5) == split_speaker(shuffled, seed=5)


def test_split_partitions_and_roundtrips():
    rec = speaker(97)
    a = split_speaker(rec, seed=3)
    parts = [set(a.train_ids), set(a.valid_ids), set(a.test_ids)]
    assert sum(map(len, parts)) == 97 and set().union(*parts) == set(rec.ids)
    assert type(a).from_json(json.loads(json.dumps(a.to_json()))) == a


def test_ratio_law_for_multiples_of_12():
    for k in range(1, 40):
        n = 12 * k
        assert split_sizes(n) == (10 * k, k, k)


def test_split_sizes_against_oracle_random_pairs():
    rng = np.random.default_rng(0)
    for n in rng.integers(12, 5000, size=10_000):
        assert split_sizes(int(n)) == _oracle_sizes(int(n))


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49, 0.0)] == [1, 2, 3, 2, 0]


@pytest.mark.parametrize("n,frac,k", [(200, 0.10, 20), (5, 0.10, 1), (10, 0.5, 5), (15, 0.10, 2), (24, 0.10, 2)])
def test_real_subset_sizes(n, frac, k):
    ids = [f"u{i:03d}" for i in range(n)]
    real, rest = sample_real_subset(ids, frac, seed=1)
    assert len(real) == k == real_subset_size(n, frac)
    assert sorted(real + rest) == ids and not set(real) & set(rest)


def test_real_subset_deterministic_and_order_insensitive():
    ids = [f"u{i:03d}" for i in range(50)]
    a = sample_real_subset(ids, 0.1, seed=4)
    b = sample_real_subset(list(reversed(ids)), 0.1, seed=4)
    assert a == sample_real_subset(ids, 0.1, seed=4)
    assert set(a[0]) == set(b[0])


@pytest.mark.parametrize("frac", [0, 1, -0.1, 1.5])
def test_real_subset_fraction_bounds(frac):
    with pytest.raises(ValueError):
        sample_real_subset(["a", "b"], frac)


def test_compose_20_real_180_synth():
    real = [f"r{i}" for i in range(20)]
    synth = [f"s{i}" for i in range(180)]
    plan = compose_training_set(real, synth, os_factor=3)
    assert plan.effective_size == 240
    assert sum(e.multiplicity for e in plan.entries if e.domain_label is Domain.REAL) == 60
    assert all(e.multiplicity == 1 for e in plan.entries if e.domain_label is Domain.SYNTHETIC)


def test_compose_os1_is_naive_mixing():
    plan = compose_training_set(["a"], ["b", "c"], os_factor=1, dc_enabled=False)
    assert plan.expanded_ids() == ["a", "b", "c"]
    assert not plan.domain_labels_used
    assert [e.domain_label for e in plan.entries] == [Domain.REAL, Domain.SYNTHETIC, Domain.SYNTHETIC]


def test_compose_real_only():
    plan = compose_training_set([f"r{i}" for i in range(20)], [], os_factor=3)
    assert plan.effective_size == 60
    assert {e.domain_label for e in plan.entries} == {Domain.REAL}


def test_compose_overlap():
    with pytest.raises(OverlapError):
        compose_training_set(["a", "b"], ["b"])


def test_plan_json_round_trip():
    plan = compose_training_set(["a", "b"], ["c"], 3, True, seed=9, meta={"config": "x"})
    again = CompositionPlan.from_json(json.loads(plan.dumps()))
    assert again == plan and again.meta == plan.meta


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 30), st.integers(0, 60), st.integers(1, 5))
def test_multiplicity_law(n_real, n_synth, k):
    real = [f"r{i}" for i in range(n_real)]
    synth = [f"s{i}" for i in range(n_synth)]
    plan = compose_training_set(real, synth, os_factor=k)
    assert plan.effective_size == k * n_real + n_synth
    assert sum(e.multiplicity for e in plan.entries if e.domain_label is Domain.REAL) == k * n_real


def _speakers(pairs):
    return [SpeakerRecord(sid, Gender(g)) for sid, g in pairs]


def test_pairing_two_per_gender_is_forced():
    p = pair_mismatched(_speakers([("M1", "M"), ("M2", "M"), ("F1", "F"), ("F2", "F")]), seed=11)
    assert p == {"F1": "F2", "F2": "F1", "M1": "M2", "M2": "M1"}


def test_pairing_single_speaker_gender():
    with pytest.raises(InsufficientSpeakers):
        pair_mismatched(_speakers([("M1", "M"), ("F1", "F"), ("F2", "F")]))


def test_pairing_three_is_a_three_cycle():
    ids = ["A", "B", "C"]
    derangements = [dict(zip(ids, p)) for p in itertools.permutations(ids) if all(a != b for a, b in zip(ids, p))]
    assert len(derangements) == 2
    seen = set()
    for seed in range(20):
        p = pair_mismatched(_speakers([(i, "F") for i in ids]), seed)
        assert p in derangements
        seen.add(tuple(sorted(p.items())))
    assert len(seen) == 2


def test_pairing_keeps_gender_and_is_deterministic():
    spk = _speakers([(f"M{i}", "M") for i in range(5)] + [(f"F{i}", "F") for i in range(4)])
    gender = {s.speaker_id: s.gender for s in spk}
    for seed in range(10):
        p = pair_mismatched(spk, seed)
        assert p == pair_mismatched(list(reversed(spk)), seed)
        assert all(t != d and gender[t] == gender[d] for t, d in p.items())
