"""A parametric speech-feature world.

Feature space R^D is split by a random orthonormal basis into a linguistic
subspace (dimension ``ling_dim``, the range of the text mixing matrix) and a
speaker subspace (the rest). An utterance renders as::

    y = A phi(text) + v_s + [synthetic] * alpha_m * (v_m - v_s) + noise

where ``v_s`` is the speaker's voice, ``v_m`` the prototype voice of zero-shot
model ``m`` and ``alpha_m`` its shift strength. The speaker embedder projects
onto the speaker subspace, so embeddings ignore linguistic content.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .._seeding import rng_for, stable_hash
from ..errors import CalibrationFailure, ConfigError, UnknownSpeaker
from ..manifest import Domain, Utterance
from ..metrics import normalize_text

# Calibration targets: mean SECS of synthetic vs. real speech per zero-shot model.
DEFAULT_SECS_TARGETS = {"fish-speech": 0.763, "cosyvoice2": 0.794}

REAL_REF_PREFIX = "toy:real/"
_REF_PREFIX = "toy:"


@dataclass(frozen=True)
class WorldConfig:
    feature_dim: int = 128
    text_dim: int = 24
    ling_dim: int = 32
    n_speakers: int = 8
    within_gender_cos: float = 0.4
    noise_sigma: float = 0.022
    # synthetic speech is less variable than recordings
    synth_noise_scale: float = 0.6
    secs_targets: dict = field(default_factory=lambda: dict(DEFAULT_SECS_TARGETS))
    calibration_pairs: int = 512
    asr_corruption_p: float = 0.02
    asr_sensitivity: float = 10.0

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**d)


@lru_cache(maxsize=65536)
def _trigram_hash(text: str, k: int) -> tuple:
    vec = np.zeros(k)
    padded = f" {normalize_text(text)} "
    for i in range(len(padded) - 2):
        h = stable_hash("tri", padded[i:i + 3])
        vec[h % k] += 1.0 if (h >> 32) & 1 else -1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return tuple(vec)


def text_features(text: str, k: int) -> np.ndarray:
    """Signed character-trigram hash of the normalized text, unit L2 norm."""
    return np.array(_trigram_hash(text, k))


@dataclass
class ToyWorld:
    feature_dim: int
    text_dim: int
    mixing: np.ndarray                 # A, D x K
    ling_basis: np.ndarray             # D x L, orthonormal columns spanning range(A)
    embedder: np.ndarray               # M, E x D, orthonormal rows
    speakers: dict[str, np.ndarray]    # unit voices v_s
    prototypes: dict[str, np.ndarray]  # unit voices v_m per zero-shot model
    shift: dict[str, float]            # alpha_m
    noise_sigma: float = 0.0
    synth_noise_scale: float = 1.0
    genders: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    asr_corruption_p: float = 0.0
    asr_sensitivity: float = 0.0

    @property
    def models(self) -> list[str]:
        return list(self.prototypes)

    def phi(self, text: str) -> np.ndarray:
        return text_features(text, self.text_dim)

    def voice(self, speaker: str) -> np.ndarray:
        try:
            return self.speakers[speaker]
        except KeyError:
            raise UnknownSpeaker(f"speaker {speaker!r} is not in the world") from None

    def render(
        self,
        speaker: str,
        text: str,
        domain: Domain = Domain.REAL,
        model: str | None = None,
        noise_key: object = None,
    ) -> np.ndarray:
        v = self.voice(speaker)
        y = self.mixing @ self.phi(text) + v
        sigma = self.noise_sigma
        if domain is Domain.SYNTHETIC:
            model = model or self.models[0]
            y = y + self.shift[model] * (self.prototypes[model] - v)
            sigma *= self.synth_noise_scale
        if sigma > 0:
            key = noise_key if noise_key is not None else (speaker, text, domain.value, model)
            y = y + sigma * rng_for(self.seed, "noise", key).standard_normal(self.feature_dim)
        return y

    def resolve(self, utt: Utterance) -> np.ndarray:
        """Feature vector behind an asset reference (see :func:`asset_ref`)."""
        domain, model, voice = parse_asset_ref(utt.audio_ref)
        return self.render(voice, utt.text, domain, model, noise_key=utt.audio_ref)

    def embed(self, y: np.ndarray) -> np.ndarray:
        return self.embedder @ y

    def speaker_reference(self, speaker: str) -> np.ndarray:
        return self.embed(self.voice(speaker))

    def linguistic_error(self, y: np.ndarray, text: str) -> float:
        target = self.mixing @ self.phi(text)
        err = self.ling_basis.T @ (y - target)
        return float(np.linalg.norm(err) / max(np.linalg.norm(target), 1e-12))

    def transcribe(self, y: np.ndarray, text: str, key: object, corruption_p: float | None = None) -> str:
        """Mock ASR: returns ``text`` with words corrupted at a rate that grows
        with the linguistic rendering error of ``y``."""
        base = self.asr_corruption_p if corruption_p is None else corruption_p
        if base <= 0:
            return text
        p = min(1.0, base * (1.0 + self.asr_sensitivity * self.linguistic_error(y, text)))
        rng = rng_for(self.seed, "asr", key)
        out = []
        for word in text.split():
            if rng.random() >= p:
                out.append(word)
                continue
            action = rng.integers(3)
            if action == 0:
                out.append(word[::-1] + "x")  # substitution
            elif action == 2:
                out.extend([word, "uh"])      # insertion
            # action 1: deletion
        return " ".join(out)


def asset_ref(speaker_voice: str, utterance_id: str, model: str | None = None) -> str:
    """``toy:real/<voice>/<id>`` for recordings, ``toy:<model>/<voice>/<id>`` for synthesis."""
    kind = "real" if model is None else model
    return f"{_REF_PREFIX}{kind}/{speaker_voice}/{utterance_id}"


def parse_asset_ref(ref: str) -> tuple[Domain, str | None, str]:
    if not ref.startswith(_REF_PREFIX):
        raise ValueError(f"not a toy asset reference: {ref!r}")
    parts = ref[len(_REF_PREFIX):].split("/", 2)
    if len(parts) != 3:
        raise ValueError(f"malformed toy asset reference: {ref!r}")
    kind, voice, _ = parts
    if kind == "real":
        return Domain.REAL, None, voice
    return Domain.SYNTHETIC, kind, voice


def _random_unit(rng, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _orthonormal(rng, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def speaker_ids(n: int) -> tuple[list[str], dict[str, str]]:
    """Gender-balanced speaker ids: M01, F01, M02, F02, ..."""
    ids, genders = [], {}
    for i in range(n):
        g = "M" if i % 2 == 0 else "F"
        sid = f"{g}{i // 2 + 1:02d}"
        ids.append(sid)
        genders[sid] = g
    return ids, genders


def measure_synthetic_secs(world: ToyWorld, model: str, pairs: int, seed: int = 0,
                           alpha: float | None = None) -> float:
    """Mean SECS between synthetic and real renderings of the same speakers.

    Works in speaker-subspace coordinates, where the embedder is the identity.
    """
    a = world.shift[model] if alpha is None else alpha
    return _secs_curve(world, model, pairs, seed)(a)


def _secs_curve(world: ToyWorld, model: str, pairs: int, seed: int):
    M = world.embedder
    sids = sorted(world.speakers)
    rng = rng_for(seed, "calibration", model)
    voices = np.stack([M @ world.speakers[s] for s in sids])
    proto = M @ world.prototypes[model]
    idx = rng.integers(len(sids), size=pairs)
    v = voices[idx]
    # common random numbers keep the curve smooth and monotone in alpha
    z_real = world.noise_sigma * rng.standard_normal(v.shape)
    z_syn = world.noise_sigma * world.synth_noise_scale * rng.standard_normal(v.shape)
    real = v + z_real

    def curve(alpha: float) -> float:
        syn = v + alpha * (proto - v) + z_syn
        num = np.sum(syn * real, axis=1)
        den = np.linalg.norm(syn, axis=1) * np.linalg.norm(real, axis=1)
        return float(np.mean(num / den))

    return curve


def calibrate_shift(world: ToyWorld, model: str, target: float, pairs: int, seed: int = 0) -> float:
    """Bisect for the shift strength whose mean synthetic-vs-real SECS hits ``target``."""
    curve = _secs_curve(world, model, pairs, seed)
    lo, hi = 0.0, 1.0
    f_lo, f_hi = curve(lo) - target, curve(hi) - target
    if f_lo < 0:
        raise CalibrationFailure(
            f"{model}: target SECS {target} exceeds the unshifted similarity {f_lo + target:.4f}; lower noise_sigma"
        )
    if f_hi > 0:
        raise CalibrationFailure(f"{model}: target SECS {target} unreachable even at full shift")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if curve(mid) - target > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_world(cfg: WorldConfig = WorldConfig(), seed: int = 0) -> ToyWorld:
    D, K, L = cfg.feature_dim, cfg.text_dim, cfg.ling_dim
    if D < 4 or K < 1:
        raise ConfigError("need feature_dim >= 4 and text_dim >= 1")
    if not 1 <= L <= D - 2:
        raise ConfigError("ling_dim must leave at least two speaker dimensions")
    if cfg.n_speakers < 1 or not cfg.secs_targets:
        raise ConfigError("need at least one speaker and one zero-shot model")
    rng = rng_for(seed, "world")
    basis = _orthonormal(rng, D)
    ling, spk = basis[:, :L], basis[:, L:]
    E = D - L
    mixing = ling @ (rng.standard_normal((L, K)) / np.sqrt(L))

    ids, genders = speaker_ids(cfg.n_speakers)
    centroids = {g: _random_unit(rng, E) for g in ("M", "F")}
    rho = cfg.within_gender_cos
    speakers = {}
    for sid in ids:
        u = np.sqrt(rho) * centroids[genders[sid]] + np.sqrt(1 - rho) * _random_unit(rng, E)
        speakers[sid] = spk @ (u / np.linalg.norm(u))
    prototypes = {m: spk @ _random_unit(rng, E) for m in cfg.secs_targets}

    world = ToyWorld(
        feature_dim=D,
        text_dim=K,
        mixing=mixing,
        ling_basis=ling,
        embedder=spk.T.copy(),
        speakers=speakers,
        prototypes=prototypes,
        shift={m: 0.0 for m in prototypes},
        noise_sigma=cfg.noise_sigma,
        synth_noise_scale=cfg.synth_noise_scale,
        genders=genders,
        seed=seed,
        asr_corruption_p=cfg.asr_corruption_p,
        asr_sensitivity=cfg.asr_sensitivity,
    )
    for m, target in cfg.secs_targets.items():
        world.shift[m] = calibrate_shift(world, m, target, cfg.calibration_pairs, seed)
    return world


def render_utterance(world: ToyWorld, speaker: str, text: str, domain: Domain = Domain.REAL,
                     model: str | None = None, noise_key: object = None) -> np.ndarray:
    return world.render(speaker, text, domain, model, noise_key)
