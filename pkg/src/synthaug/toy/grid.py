"""Experiment grid over training compositions, run end to end in the toy world."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .._seeding import rng_for
from ..composer import (
    DEFAULT_OS_FACTOR,
    DEFAULT_RATIO,
    DEFAULT_REAL_FRACTION,
    CompositionPlan,
    compose_training_set,
    pair_mismatched,
    sample_real_subset,
    split_speaker,
)
from ..errors import ConfigError
from ..gateway.client import SynthJob, synthesize_batch
from ..gateway.selection import extra_synth_transcripts, filter_hallucinations, select_reference_prompt
from ..manifest import Manifest, Utterance
from ..metrics import ErrorRate, MetricReport, aggregate_runs, cer, secs, wer
from .corpus import make_text_pool
from .model import ToyModel, TrainConfig, infer_text, train_model
from .world import ToyWorld

if TYPE_CHECKING:
    from ..gateway.mock import MockBackend

log = logging.getLogger(__name__)

REAL_ONLY = "real-only"
REAL_ONLY_CONFIGS = ("real10", "real100")
SYNTH_CONFIGS = ("naive", "os", "dc", "dc_os", "dc_os_extra", "mismatched")
ALL_CONFIGS = REAL_ONLY_CONFIGS + SYNTH_CONFIGS

# (uses synthetic data, oversampling factor applies, domain conditioning)
CONFIG_FLAGS = {
    "real10": (False, False, False),
    "real100": (False, False, False),
    "naive": (True, False, False),
    "os": (True, True, False),
    "dc": (True, False, True),
    "dc_os": (True, True, True),
    "dc_os_extra": (True, True, True),
    "mismatched": (True, False, True),
}


@dataclass(frozen=True)
class GridConfig:
    models: tuple[str, ...] = ("fish-speech",)
    configs: tuple[str, ...] = ALL_CONFIGS
    seeds: tuple[int, ...] = (0, 1, 2)
    ratio: tuple[int, int, int] = DEFAULT_RATIO
    real_fraction: float = DEFAULT_REAL_FRACTION
    os_factor: int = DEFAULT_OS_FACTOR
    max_prompt_s: dict = field(default_factory=dict)
    default_max_prompt_s: float = 10.0
    extra_n: int = 800
    extra_pool_size: int = 1000
    filter_threshold: float = 0.05
    filter_base: bool = False
    eval_texts: int = 100
    speakers: tuple[str, ...] | None = None

    def __post_init__(self):
        unknown = set(self.configs) - set(ALL_CONFIGS)
        if unknown:
            raise ConfigError(f"unknown grid configs: {sorted(unknown)}")
        if not self.configs or not self.seeds:
            raise ConfigError("grid needs at least one config and one seed")
        if any(c in SYNTH_CONFIGS for c in self.configs) and not self.models:
            raise ConfigError("synthetic configs need at least one source model")

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown grid config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("models", "configs", "seeds", "ratio", "speakers"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def prompt_cap(self, model: str) -> float:
        return float(self.max_prompt_s.get(model, self.default_max_prompt_s))


def config_tag(model: str | None, config: str) -> str:
    return f"{REAL_ONLY}/{config}" if config in REAL_ONLY_CONFIGS else f"{model}/{config}"


@dataclass
class SpeakerData:
    """Everything one seed produces for one target speaker."""

    speaker_id: str
    train: list[str]
    test: list[str]
    real: list[str]
    to_synth: list[str]
    synth: dict[str, list[str]] = field(default_factory=dict)        # model -> ids
    mismatched: dict[str, list[str]] = field(default_factory=dict)   # model -> ids
    extra: dict[str, list[str]] = field(default_factory=dict)        # model -> kept ids
    prompts: dict[str, str] = field(default_factory=dict)            # model -> utterance id


def synth_id(model: str, seed: int, uid: str, kind: str = "base") -> str:
    return f"{model}/s{seed}/{kind}/{uid}"


class ToyExperiment:
    """Prepares the per-seed data (splits, synthesis, filtering) of a grid run."""

    def __init__(self, world: ToyWorld, corpus: Manifest, grid: GridConfig, backend: MockBackend | None = None):
        self.world = world
        self.corpus = corpus
        self.grid = grid
        if backend is None:
            from ..gateway.mock import MockBackend  # gateway.mock imports this package
            backend = MockBackend(world, corpus)
        self.backend = backend
        self.utterances: dict[str, Utterance] = corpus.by_id()
        wanted = grid.speakers
        self.speakers = [s for s in corpus.speakers if wanted is None or s.speaker_id in wanted]
        if not self.speakers:
            raise ConfigError("no speakers selected for the grid")
        self.eval_texts = make_text_pool(grid.eval_texts, 0, tag="eval") if grid.eval_texts else []
        self._extra_pool: list[str] | None = None

    @property
    def extra_pool(self) -> list[str]:
        if self._extra_pool is None:
            self._extra_pool = make_text_pool(self.grid.extra_pool_size, 0, tag="extra")
        return self._extra_pool

    def _synthesize(self, jobs: list[SynthJob]) -> list[str]:
        result = synthesize_batch(jobs, self.backend)
        if result.failures:
            raise RuntimeError(f"{len(result.failures)} synthesis jobs failed: {result.failures[:3]}")
        for u in result.utterances:
            self.utterances[u.id] = u
        return [u.id for u in result.utterances]

    def _filter(self, ids: list[str]) -> list[str]:
        kept, _, _ = filter_hallucinations([self.utterances[i] for i in ids], self.backend,
                                           self.grid.filter_threshold)
        return [u.id for u in kept]

    def prepare(self, seed: int) -> dict[str, SpeakerData]:
        g = self.grid
        data: dict[str, SpeakerData] = {}
        for rec in self.speakers:
            split = split_speaker(rec, g.ratio, seed)
            real, rest = sample_real_subset(list(split.train_ids), g.real_fraction, seed)
            data[rec.speaker_id] = SpeakerData(rec.speaker_id, list(split.train_ids), list(split.test_ids), real, rest)
        needs_synth = any(c in SYNTH_CONFIGS for c in g.configs)
        if not needs_synth:
            return data
        pairing = pair_mismatched(self.speakers, seed) if "mismatched" in g.configs else {}
        extra_texts = extra_synth_transcripts(self.extra_pool, g.extra_n, seed) if "dc_os_extra" in g.configs else []
        for model in g.models:
            for sd in data.values():
                prompt = select_reference_prompt([self.utterances[i] for i in sd.real], g.prompt_cap(model))
                sd.prompts[model] = prompt.id
            for sd in data.values():
                prompt_ref = self.utterances[sd.prompts[model]].audio_ref
                jobs = [SynthJob(synth_id(model, seed, uid), sd.speaker_id, self.utterances[uid].text, prompt_ref, model)
                        for uid in sd.to_synth]
                ids = self._synthesize(jobs)
                sd.synth[model] = self._filter(ids) if g.filter_base else ids
                if pairing:
                    donor = data[pairing[sd.speaker_id]] if pairing[sd.speaker_id] in data else None
                    donor_prompt = (self.utterances[donor.prompts[model]] if donor else
                                    self._donor_prompt(pairing[sd.speaker_id], seed, model))
                    jobs = [SynthJob(synth_id(model, seed, uid, "mm"), sd.speaker_id, self.utterances[uid].text,
                                     donor_prompt.audio_ref, model) for uid in sd.to_synth]
                    sd.mismatched[model] = self._synthesize(jobs)
                if extra_texts:
                    jobs = [SynthJob(synth_id(model, seed, f"{sd.speaker_id}-{i:04d}", "extra"), sd.speaker_id,
                                     text, prompt_ref, model) for i, text in enumerate(extra_texts)]
                    sd.extra[model] = self._filter(self._synthesize(jobs))
        return data

    def _donor_prompt(self, donor: str, seed: int, model: str) -> Utterance:
        rec = self.corpus.speaker(donor)
        split = split_speaker(rec, self.grid.ratio, seed)
        real, _ = sample_real_subset(list(split.train_ids), self.grid.real_fraction, seed)
        return select_reference_prompt([self.utterances[i] for i in real], self.grid.prompt_cap(model))

    def plan(self, sd: SpeakerData, model: str | None, config: str, seed: int) -> CompositionPlan:
        g = self.grid
        meta = {"speaker_id": sd.speaker_id, "config": config_tag(model, config)}
        if config == "real10":
            return compose_training_set(sd.real, [], 1, False, seed, meta)
        if config == "real100":
            return compose_training_set(sd.train, [], 1, False, seed, meta)
        _, oversample, dc = CONFIG_FLAGS[config]
        synth = sd.mismatched[model] if config == "mismatched" else list(sd.synth[model])
        if config == "dc_os_extra":
            synth = synth + sd.extra[model]
        return compose_training_set(sd.real, synth, g.os_factor if oversample else 1, dc, seed, meta)

    def cells(self, seed: int, data: dict[str, SpeakerData]) -> Iterable[tuple[str, SpeakerData, CompositionPlan]]:
        for config in self.grid.configs:
            models = [None] if config in REAL_ONLY_CONFIGS else list(self.grid.models)
            for model in models:
                for sid in sorted(data):
                    yield config_tag(model, config), data[sid], self.plan(data[sid], model, config, seed)


def evaluate_model(world: ToyWorld, model: ToyModel, test_utts: Sequence[Utterance], eval_texts: Sequence[str],
                   key: str) -> tuple[float, ErrorRate, ErrorRate]:
    """SECS against the real test recordings; CER/WER over test and extra evaluation texts."""
    scores = []
    c_err = w_err = None
    items = [(u.id, u.text) for u in test_utts] + [(f"eval{i:04d}", t) for i, t in enumerate(eval_texts)]
    outputs = {uid: infer_text(model, world, text) for uid, text in items}
    for u in test_utts:
        scores.append(secs(world.embed(outputs[u.id]), world.embed(world.resolve(u))))
    for uid, text in items:
        hyp = world.transcribe(outputs[uid], text, key=f"{key}/{uid}")
        c, w = cer(text, hyp), wer(text, hyp)
        c_err = c if c_err is None else c_err + c
        w_err = w if w_err is None else w_err + w
    return float(np.mean(scores)), c_err, w_err


def run_experiment_grid(world: ToyWorld, corpus: Manifest, grid: GridConfig = GridConfig(),
                        train: TrainConfig = TrainConfig(), backend: MockBackend | None = None) -> list[MetricReport]:
    """Compose, train and score every (config, model, speaker, seed) cell."""
    exp = ToyExperiment(world, corpus, grid, backend)
    reports = []
    for seed in grid.seeds:
        data = exp.prepare(seed)
        cfg = replace(train, seed=seed)
        for tag, sd, plan in exp.cells(seed, data):
            model = train_model(plan, world, cfg, exp.utterances)
            test = [exp.utterances[i] for i in sd.test]
            s, c, w = evaluate_model(world, model, test, exp.eval_texts, key=f"{tag}/s{seed}")
            reports.append(MetricReport(sd.speaker_id, seed, tag, s, c, w))
            log.info("%s seed=%d %s SECS=%.4f WER=%.4f", tag, seed, sd.speaker_id, s, w.rate)
    return reports


def ablate_embedding_size(world: ToyWorld, corpus: Manifest, sizes: Sequence[int] = (16, 64, 256),
                          grid: GridConfig = GridConfig(), train: TrainConfig = TrainConfig()) -> list[dict]:
    """DC without oversampling, one grid run per domain-embedding size."""
    for size in sizes:
        if not 1 <= size <= world.feature_dim:
            raise ConfigError(f"embedding size {size} must lie in [1, {world.feature_dim}]")
    rows = []
    for size in sizes:
        g = replace(grid, configs=("dc",), models=grid.models[:1])
        reports = run_experiment_grid(world, corpus, g, replace(train, d_emb=size))
        summary = next(iter(aggregate_runs(reports).values()))
        rows.append({"emb_size": size, "SECS": round(summary.secs, 6), "CER": round(100 * summary.cer, 4),
                     "WER": round(100 * summary.wer, 4)})
    return rows


def utterance_frames(world: ToyWorld, model: ToyModel, utt: Utterance, frame_rate: float = 10.0) -> np.ndarray:
    """Frame-level latents: the residual ``y - W phi(x)`` plus per-frame jitter."""
    residual = world.resolve(utt) - model.W @ world.phi(utt.text)
    n = max(1, int(round(utt.duration_s * frame_rate)))
    jitter = 2 * world.noise_sigma * rng_for(world.seed, "frames", utt.audio_ref).standard_normal((n, residual.size))
    return residual + jitter
