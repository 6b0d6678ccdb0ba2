from dataclasses import replace

import numpy as np
import pytest

from synthaug.errors import CalibrationFailure, ConfigError, UnknownSpeaker
from synthaug.manifest import Domain
from synthaug.metrics import secs
from synthaug.toy.corpus import make_demo_manifest, make_text_pool
from synthaug.toy.world import (
    WorldConfig,
    asset_ref,
    generate_world,
    measure_synthetic_secs,
    parse_asset_ref,
    speaker_ids,
    text_features,
)


@pytest.fixture(scope="module")
def world():
    return generate_world(WorldConfig(n_speakers=4), seed=0)


def test_unit_voices(world):
    for v in list(world.speakers.values()) + list(world.prototypes.values()):
        assert np.linalg.norm(v) == pytest.approx(1.0)


def test_calibration_hits_targets(world):
    for model, target in WorldConfig().secs_targets.items():
        assert 0 < world.shift[model] < 1
        assert measure_synthetic_secs(world, model, 512, seed=0) == pytest.approx(target, abs=1e-6)


def test_calibration_holds_on_rendered_utterances(world):
    # independent sample: real and synthetic renderings of fresh texts
    texts = make_text_pool(60, seed=9, tag="calibration-check")
    for model, target in WorldConfig().secs_targets.items():
        scores = [secs(world.embed(world.render(s, t, Domain.SYNTHETIC, model)),
                       world.embed(world.render(s, t + " ", Domain.REAL)))
                  for s in world.speakers for t in texts]
        assert np.mean(scores) == pytest.approx(target, abs=0.02)


def test_zero_shift_is_real(world):
    quiet = replace(world, noise_sigma=0.0, shift={m: 0.0 for m in world.models})
    for model in world.models:
        assert measure_synthetic_secs(quiet, model, 256) == pytest.approx(1.0)
        # noise alone keeps real-vs-real similarity a little below 1
        assert 0.95 < measure_synthetic_secs(world, model, 256, alpha=0.0) < 1.0
    y_real = quiet.render("M01", "a quiet house")
    y_syn = quiet.render("M01", "a quiet house", Domain.SYNTHETIC, "fish-speech")
    np.testing.assert_allclose(y_real, y_syn)


def test_noiseless_render_identities(world):
    w = replace(world, noise_sigma=0.0, mixing=np.zeros_like(world.mixing))
    np.testing.assert_allclose(w.render("F01", "any text"), w.speakers["F01"])
    full = replace(w, shift={m: 1.0 for m in w.models})
    np.testing.assert_allclose(full.render("F01", "any text", Domain.SYNTHETIC, "cosyvoice2"),
                               w.prototypes["cosyvoice2"], atol=1e-15)


def test_render_deterministic(world):
    a = world.render("M02", "the old bridge", Domain.SYNTHETIC, "fish-speech", noise_key="k")
    b = world.render("M02", "the old bridge", Domain.SYNTHETIC, "fish-speech", noise_key="k")
    c = world.render("M02", "the old bridge", Domain.SYNTHETIC, "fish-speech", noise_key="other")
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_same_seed_same_world():
    cfg = WorldConfig(feature_dim=16, text_dim=4, ling_dim=4, n_speakers=2, calibration_pairs=64)
    a, b = generate_world(cfg, seed=5), generate_world(cfg, seed=5)
    assert np.array_equal(a.mixing, b.mixing) and a.shift == b.shift
    assert not np.array_equal(a.mixing, generate_world(cfg, seed=6).mixing)


def test_unknown_speaker(world):
    with pytest.raises(UnknownSpeaker):
        world.render("nobody", "text")


def test_unreachable_target():
    with pytest.raises(CalibrationFailure):
        generate_world(WorldConfig(noise_sigma=0.5, secs_targets={"m": 0.99}, calibration_pairs=64))


def test_bad_dimensions():
    with pytest.raises(ConfigError):
        generate_world(WorldConfig(feature_dim=3))
    with pytest.raises(ConfigError):
        generate_world(WorldConfig(feature_dim=8, ling_dim=7))


def test_embedder_ignores_content(world):
    for t in make_text_pool(5, seed=1):
        assert np.linalg.norm(world.embed(world.mixing @ world.phi(t))) < 1e-12


def test_text_features_unit_and_normalized():
    v = text_features("Hello, world!", 16)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    np.testing.assert_array_equal(v, text_features("hello world", 16))


def test_speaker_ids_balanced():
    ids, genders = speaker_ids(5)
    assert ids == ["M01", "F01", "M02", "F02", "M03"]
    assert sorted(genders.values()).count("M") == 3


def test_asset_refs_round_trip():
    assert parse_asset_ref(asset_ref("F01", "u1")) == (Domain.REAL, None, "F01")
    assert parse_asset_ref(asset_ref("F01", "u1", "cosyvoice2")) == (Domain.SYNTHETIC, "cosyvoice2", "F01")
    with pytest.raises(ValueError):
        parse_asset_ref("file:///x.wav")


def test_demo_manifest(small_world):
    m = make_demo_manifest(small_world, 24, seed=1)
    assert len(m) == 4 * (24 + 5)
    assert {s.speaker_id: s.gender.value for s in m.speakers} == small_world.genders
