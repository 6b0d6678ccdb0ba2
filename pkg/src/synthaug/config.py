"""Pipeline configuration: one JSON file with per-stage sections.

Overrides use dotted keys (``grid.filter_threshold=1.0``); values are parsed
as JSON when possible and kept as strings otherwise.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import ConfigError
from .gateway.client import ServiceEndpoint
from .toy.grid import GridConfig
from .toy.model import TrainConfig
from .toy.world import WorldConfig

ENV_SERVICE_URL = "SYNTHAUG_SERVICE_URL"
ENV_URLS = {"tts": "SYNTHAUG_TTS_URL", "asr": "SYNTHAUG_ASR_URL", "embed": "SYNTHAUG_EMBED_URL"}


def _check_keys(cls, d: Mapping, section: str) -> None:
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")


@dataclass(frozen=True)
class CorpusConfig:
    manifest: str | None = None      # None: generate the toy demo corpus
    utts_per_speaker: int = 240
    include_noisy: bool = True
    min_words: int = 3


@dataclass(frozen=True)
class ServicesConfig:
    tts_url: str | None = None
    asr_url: str | None = None
    embed_url: str | None = None
    timeout_ms: int = 30_000
    max_parallel: int = 4
    retries: int = 3

    def url(self, service: str) -> str | None:
        """Configured URL, else the per-service variable, else the shared one."""
        return (getattr(self, f"{service}_url") or os.environ.get(ENV_URLS[service])
                or os.environ.get(ENV_SERVICE_URL) or None)

    def endpoint(self, service: str) -> ServiceEndpoint | None:
        url = self.url(service)
        if url is None:
            return None
        return ServiceEndpoint(url, self.timeout_ms, self.max_parallel, self.retries)


@dataclass(frozen=True)
class ProjectConfig:
    method: str = "tsne"              # or "pca"
    config: str = "dc"                # which trained model supplies the latents
    speaker: str | None = None        # default: first speaker
    seed: int | None = None           # default: first run seed
    perplexity: float | None = None
    iters: int = 1000
    frame_rate: float = 10.0
    max_points: int = 200

    def __post_init__(self):
        if self.method not in ("tsne", "pca"):
            raise ConfigError(f"unknown projection method {self.method!r}")


@dataclass(frozen=True)
class AblationConfig:
    sizes: tuple[int, ...] = (16, 64, 256)
    # the ablation needs feature_dim >= max(sizes), so it gets its own world
    world: dict = field(default_factory=lambda: {"feature_dim": 512, "noise_sigma": 0.009})
    n_speakers: int = 4
    utts_per_speaker: int = 120


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = "runs/demo"
    seeds: tuple[int, ...] = (0, 1, 2)
    world_seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    services: ServicesConfig = field(default_factory=ServicesConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    project: ProjectConfig = field(default_factory=ProjectConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    listening: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.corpus.manifest is not None and not Path(self.corpus.manifest).is_file():
            raise ConfigError(f"manifest not found: {self.corpus.manifest}")
        # run seeds drive the grid
        if tuple(self.grid.seeds) != tuple(self.seeds):
            object.__setattr__(self, "grid", replace(self.grid, seeds=tuple(self.seeds)))

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"].pop("seeds", None)
        return d


_SECTIONS = {
    "world": WorldConfig,
    "corpus": CorpusConfig,
    "services": ServicesConfig,
    "grid": GridConfig,
    "train": TrainConfig,
    "project": ProjectConfig,
    "ablation": AblationConfig,
}


def parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_override(d: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-section")
    node[parts[-1]] = value


def parse_overrides(items: Sequence[str]) -> list[tuple[str, Any]]:
    out = []
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        out.append((key.strip(), parse_value(raw)))
    return out


def config_from_dict(raw: Mapping) -> PipelineConfig:
    raw = copy.deepcopy(dict(raw))
    top = set(PipelineConfig.__dataclass_fields__)
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in raw.items():
        cls = _SECTIONS.get(name)
        if cls is None:
            kwargs[name] = value
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section [{name}] must be an object")
        _check_keys(cls, value, name)
        if hasattr(cls, "from_dict"):
            kwargs[name] = cls.from_dict(value)
        else:
            if "sizes" in value:
                value["sizes"] = tuple(value["sizes"])
            kwargs[name] = cls(**value)
    if "seeds" in kwargs:
        seeds = kwargs["seeds"]
        if not isinstance(seeds, (list, tuple)) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds must be a list of integers")
        kwargs["seeds"] = tuple(seeds)
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None = None, overrides: Sequence[str] = (),
                seeds: Sequence[int] | None = None, out_dir: str | None = None) -> PipelineConfig:
    """File values, then ``--override`` pairs, then the dedicated flags."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, value in parse_overrides(overrides):
        apply_override(raw, key, value)
    if seeds:
        raw["seeds"] = list(seeds)
    if out_dir is not None:
        raw["out_dir"] = out_dir
    return config_from_dict(raw)


# A small configuration for quick end-to-end runs.
DEMO_CONFIG = {
    "out_dir": "runs/demo",
    "seeds": [0, 1, 2],
    "world": {"n_speakers": 4},
    "corpus": {"utts_per_speaker": 240},
    "grid": {"models": ["fish-speech"], "eval_texts": 20, "extra_n": 200, "extra_pool_size": 300},
    "project": {"max_points": 120, "iters": 500},
}
