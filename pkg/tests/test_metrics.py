import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthaug.errors import DimensionMismatch, EmptyReference, TooFewScores, UnbalancedRuns, ZeroVector
from synthaug.metrics import (
    ErrorRate,
    MetricReport,
    abx_preference,
    aggregate_runs,
    binomial_two_sided,
    cer,
    edit_distance,
    mos_ci,
    normalize_text,
    reports_from_csv,
    reports_to_csv,
    secs,
    wer,
)


def dp_oracle(a, b):
    # textbook full-table recurrence, kept separate from the rolling-row version
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


def test_kitten_sitting():
    assert edit_distance("kitten", "sitting") == 3


def test_edit_distance_exhaustive_small():
    alphabet = "abc"
    strings = ["".join(p) for n in range(5) for p in itertools.product(alphabet, repeat=n)]
    for a in strings:
        for b in strings[::7]:
            assert edit_distance(a, b) == dp_oracle(a, b)


def test_edit_distance_random_length_six():
    rnd = random.Random(0)
    for _ in range(3000):
        a = "".join(rnd.choice("abc") for _ in range(rnd.randint(0, 6)))
        b = "".join(rnd.choice("abc") for _ in range(rnd.randint(0, 6)))
        assert edit_distance(a, b) == dp_oracle(a, b) == edit_distance(b, a)


@settings(max_examples=200)
@given(st.text("xyz", max_size=8), st.text("xyz", max_size=8), st.text("xyz", max_size=8))
def test_edit_distance_metric_axioms(a, b, c):
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert abs(len(a) - len(b)) <= edit_distance(a, b) <= max(len(a), len(b))


def test_wer_examples():
    assert wer("the cat sat", "the cat sit").rate == pytest.approx(1 / 3)
    assert wer("a b", "x y z w").rate == 2.0
    assert wer("Hello, World!", "hello world").edits == 0


def test_cer_counts_spaces():
    r = cer("ab cd", "abcd")
    assert (r.edits, r.ref_len) == (1, 5)


def test_empty_reference():
    with pytest.raises(EmptyReference):
        wer("", "anything")
    with pytest.raises(EmptyReference):
        cer(" ... ", "x")


def test_normalize_keeps_inner_apostrophe():
    assert normalize_text("  Don't STOP -- 'now'. ") == "don't stop now"


def test_error_rate_pools_edits():
    total = ErrorRate(1, 3) + ErrorRate(2, 7)
    assert (total.edits, total.ref_len) == (3, 10)


def test_secs_examples():
    assert secs([1, 0], [1, 0]) == 1.0
    assert secs([1, 0], [0, 1]) == 0.0
    assert secs([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2))
    assert secs([1, 2], [-1, -2]) == pytest.approx(-1.0)


def test_secs_errors():
    with pytest.raises(DimensionMismatch):
        secs([1, 2], [1, 2, 3])
    with pytest.raises(ZeroVector):
        secs([0, 0], [1, 0])


@settings(max_examples=200)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0.01, 100))
def test_secs_scale_invariant_and_bounded(v, c):
    a = np.array(v)
    b = np.array([0.3, -1.0, 2.0])
    if np.linalg.norm(a) < 1e-3:
        return
    s = secs(a, b)
    assert -1 <= s <= 1
    assert secs(c * a, b) == pytest.approx(s, abs=1e-12)


def rep(spk, seed, tag="x", s=0.5, ce=(1, 10), we=(1, 4)):
    return MetricReport(spk, seed, tag, s, ErrorRate(*ce), ErrorRate(*we))


def test_aggregate_means_over_seeds_then_speakers():
    reports = [rep("A", 0, s=0.8), rep("A", 1, s=0.6), rep("B", 0, s=0.2), rep("B", 1, s=0.4)]
    out = aggregate_runs(reports)["x"]
    assert out.secs == pytest.approx(0.5)
    assert out.per_speaker["A"]["secs"] == pytest.approx(0.7)
    assert (out.n_speakers, out.n_seeds) == (2, 2)
    assert out.wer == pytest.approx(0.25)


def test_aggregate_speakers_weighted_equally():
    # A has long references, B short ones; rates are averaged per speaker, not pooled
    reports = [rep("A", 0, we=(0, 100)), rep("B", 0, we=(1, 1))]
    assert aggregate_runs(reports)["x"].wer == pytest.approx(0.5)


def test_aggregate_unbalanced():
    with pytest.raises(UnbalancedRuns):
        aggregate_runs([rep("A", 0), rep("A", 1), rep("B", 0)])
    with pytest.raises(UnbalancedRuns):
        aggregate_runs([rep("A", 0), rep("A", 0)])


def test_aggregate_permutation_invariant():
    rnd = random.Random(3)
    reports = [rep(s, k, tag=t, s=rnd.uniform(-1, 1), ce=(rnd.randint(0, 9), 10), we=(rnd.randint(0, 5), 5))
               for t in ("p", "q") for s in "ABC" for k in range(4)]
    base = aggregate_runs(reports)
    for _ in range(20):
        rnd.shuffle(reports)
        assert aggregate_runs(reports) == base


def test_csv_round_trip():
    reports = [rep("A", 0, tag="dc", s=0.912345), rep("B", 2, tag="naive", s=-0.5, ce=(3, 17), we=(2, 9))]
    assert reports_from_csv(reports_to_csv(reports)) == reports


def test_binomial_reference_value():
    assert binomial_two_sided(15, 20) == pytest.approx(2 * 21700 / 1048576, rel=1e-12)


def test_binomial_symmetry_and_centre():
    for n in range(1, 30):
        for k in range(n + 1):
            assert binomial_two_sided(k, n) == binomial_two_sided(n - k, n)
        if n % 2 == 0:
            assert binomial_two_sided(n // 2, n) == 1.0


def test_binomial_bad_input():
    with pytest.raises(ValueError):
        binomial_two_sided(5, 4)


def test_abx_preference():
    out = abx_preference(15, 20)
    assert out["preference_pct"] == 75.0 and out["significant"]


def test_mos_examples():
    assert mos_ci([4] * 6) == (4.0, 0.0)
    m, h = mos_ci([3, 5])
    assert (m, h) == (pytest.approx(4.0), pytest.approx(1.96))
    m, h = mos_ci([4, 4, 4, 5])
    assert (m, h) == (pytest.approx(4.25), pytest.approx(0.49))


def test_mos_errors():
    with pytest.raises(TooFewScores):
        mos_ci([4])
    with pytest.raises(ValueError):
        mos_ci([0, 3])
