import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthaug.errors import ParseError, ValidationError
from synthaug.manifest import (
    Domain,
    Manifest,
    filter_transcripts,
    load_manifest,
    manifest_bytes,
    parse_manifest,
    write_manifest,
    build_manifest,
)

from conftest import small_manifest, utt


def test_load_counts_two_speakers_three_each(tmp_path):
    m = small_manifest(3)
    path = tmp_path / "m.jsonl"
    write_manifest(m, path)
    loaded = load_manifest(path)
    assert len(loaded) == 6
    assert [s.speaker_id for s in loaded.speakers] == ["A", "B"]


def test_round_trip_is_identity(tmp_path):
    m = small_manifest(4)
    write_manifest(m, tmp_path / "m.jsonl")
    assert load_manifest(tmp_path / "m.jsonl") == m


def _raw_lines(records):
    return ("\n".join(json.dumps(r) for r in records) + "\n").encode()


HEADER = {"corpus": "c", "speakers": [{"id": "s1", "gender": "F"}]}


def _rec(uid, **kw):
    base = {"id": uid, "speaker_id": "s1", "text": "hello there world", "audio_ref": "r", "duration_s": 1.0,
            "domain": "real", "source": "recording"}
    base.update(kw)
    return base


def test_duplicate_id_names_it():
    raw = _raw_lines([HEADER, _rec("u1"), _rec("u1")])
    with pytest.raises(ValidationError, match="u1"):
        parse_manifest(raw)


def test_negative_duration_rejected():
    with pytest.raises(ValidationError):
        parse_manifest(_raw_lines([HEADER, _rec("u1", duration_s=-1)]))


def test_empty_text_rejected():
    with pytest.raises(ValidationError):
        parse_manifest(_raw_lines([HEADER, _rec("u1", text="   ")]))


def test_domain_must_agree_with_source():
    with pytest.raises(ValidationError):
        parse_manifest(_raw_lines([HEADER, _rec("u1", domain="synthetic")]))
    m = parse_manifest(_raw_lines([HEADER, _rec("u1", domain="synthetic", source="zs-tts:fish-speech")]))
    u = next(iter(m))
    assert u.domain is Domain.SYNTHETIC and u.source_model == "fish-speech"


def test_malformed_line_reports_line_number():
    raw = _raw_lines([HEADER, _rec("u1")]) + b"{not json\n"
    with pytest.raises(ParseError) as exc:
        parse_manifest(raw)
    assert exc.value.line == 3


def test_empty_speakers_rejected_on_write(tmp_path):
    with pytest.raises(ValidationError):
        write_manifest(Manifest("empty", ()), tmp_path / "x.jsonl")
    assert not (tmp_path / "x.jsonl").exists()


def test_every_single_byte_corruption_is_detected():
    raw = manifest_bytes(small_manifest(2))
    for i in range(len(raw)):
        for flip in (0x01, 0x20):
            bad = bytearray(raw)
            bad[i] ^= flip
            with pytest.raises(ParseError):
                parse_manifest(bytes(bad))


def test_unicode_line_separator_inside_text_survives(tmp_path):
    m = build_manifest("u", {"s1": "M"}, [utt("a", text="one\u2028two three")])
    write_manifest(m, tmp_path / "m.jsonl")
    assert load_manifest(tmp_path / "m.jsonl") == m


# -- filter_transcripts --

def _one(text):
    return build_manifest("t", {"s1": "F"}, [utt("x", text=text)])


@pytest.mark.parametrize("text,kept", [
    ("hi there", False),
    ("the quick brown fox", True),
    ("exactly three words", True),
    ("call me at 555 0199", False),
    ("[laugh] that was funny", False),
    ("she paid $40 today", False),
    ("it's a well-known fact.", True),
])
def test_filter_examples(text, kept):
    assert (len(filter_transcripts(_one(text))) == 1) is kept


def test_filter_preserves_order_and_fields():
    texts = ["keep this one please", "no", "and keep this too", "[noise] drop me now", "last kept line here"]
    m = build_manifest("t", {"s1": "F"}, [utt(f"u{i}", text=t) for i, t in enumerate(texts)])
    out = filter_transcripts(m)
    assert [u.id for u in out] == ["u0", "u2", "u4"]
    original = m.by_id()
    assert all(u == original[u.id] for u in out)


def test_filter_min_words_must_be_positive():
    with pytest.raises(ValueError):
        filter_transcripts(_one("a b c"), min_words=0)


def test_filter_banned_classes_are_configurable():
    assert len(filter_transcripts(_one("room 101 is open"), banned_token_classes=())) == 1
    assert len(filter_transcripts(_one("room 101 is open"), banned_token_classes={"digits"})) == 0


words = st.text(alphabet="abc [1$", min_size=0, max_size=20)


@settings(max_examples=200, deadline=None)
@given(st.lists(words.filter(lambda t: t.strip()), min_size=1, max_size=8), st.integers(1, 4))
def test_filter_is_idempotent_and_exact(texts, k):
    m = build_manifest("t", {"s1": "M"}, [utt(f"u{i}", text=t) for i, t in enumerate(texts)])
    once = filter_transcripts(m, k)
    assert filter_transcripts(once, k) == once
    from synthaug.manifest import has_banned_tokens
    expected = [u.id for u in m if len(u.text.split()) >= k and not has_banned_tokens(u.text)]
    assert [u.id for u in once] == expected
