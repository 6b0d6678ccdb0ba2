"""Stage-by-stage pipeline with on-disk artifacts and a content-hash run ledger.

Layout under the output directory::

    corpus.jsonl            filtered real-speech manifest
    splits.json             per seed and speaker: train/valid/test, real subset
    synth/<model>.jsonl     synthetic manifest (all seeds)
    synth/index.json        prompts, pairings and id lists per seed and speaker
    verdicts/<model>.json   hallucination-filter verdicts
    plans.json              composition plans for every grid cell
    models/s<seed>.npz      trained parameters
    metrics.csv             one row per (config, speaker, seed)
    summary.json            aggregated tables
    figures/                SVG figures with CSV companions
    ledger.json             content hashes of everything above
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import zipfile
from dataclasses import asdict, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .composer import compose_training_set, pair_mismatched, sample_real_subset, split_speaker
from .config import PipelineConfig
from .errors import ConfigError, StaleUpstream
from .gateway.client import LocalTransport, SynthJob, as_transport, synthesize_batch
from .gateway.mock import MockBackend
from .gateway.selection import extra_synth_transcripts, filter_hallucinations, select_reference_prompt
from .manifest import Manifest, Utterance, build_manifest, filter_transcripts, load_manifest, manifest_bytes
from .metrics import MetricReport, abx_preference, aggregate_runs, mos_ci, reports_from_csv, reports_to_csv
from .plotting import emit_metric_bars, emit_scatter
from .projection import EmbeddedPoint, PointLabel, mean_pool, pca_2d, run_tsne
from .toy.corpus import make_demo_manifest, make_text_pool
from .toy.grid import (
    CONFIG_FLAGS,
    REAL_ONLY,
    REAL_ONLY_CONFIGS,
    SYNTH_CONFIGS,
    ablate_embedding_size,
    config_tag,
    evaluate_model,
    synth_id,
    utterance_frames,
)
from .toy.model import ToyModel, domain_map, train_model
from .toy.world import ToyWorld, WorldConfig, generate_world

log = logging.getLogger(__name__)

STAGES = ("split", "synthesize", "filter", "compose", "train", "evaluate", "project", "report")

TABLE_ROWS = (
    ("naive", "Real 10% + Synth 90%"),
    ("os", "Real 10% + Synth 90%"),
    ("dc", "Real 10% + Synth 90%"),
    ("dc_os", "Real 10% + Synth 90%"),
    ("dc_os_extra", "Real 10% + Synth 90% (+Extra Synth)"),
)
REAL_ROWS = (("real10", "Real 10%"), ("real100", "Real 100%"))

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


# -- deterministic file output -------------------------------------------------

def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def save_npz(path: Path, arrays: Mapping[str, np.ndarray]) -> Path:
    """Like ``np.savez_compressed`` but with fixed zip timestamps, so equal arrays give equal bytes."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            member = io.BytesIO()
            np.lib.format.write_array(member, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, member.getvalue())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue())
    return path


# -- run ledger ----------------------------------------------------------------

class RunLedger:
    """Records, per stage, the hashes of the artifacts it read and wrote.

    A stage may run only when every upstream artifact it needs still has the
    hash its producer recorded, and the producers' own inputs are unchanged.
    """

    def __init__(self, root: Path):
        self.root = root
        self.path = root / "ledger.json"
        self.stages: dict[str, dict] = {}
        if self.path.exists():
            self.stages = json.loads(self.path.read_text()).get("stages", {})

    def _rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    def producer_of(self, rel: str) -> str | None:
        for stage, entry in self.stages.items():
            if rel in entry["outputs"]:
                return stage
        return None

    def _check_stage(self, stage: str, seen: set[str]) -> None:
        if stage in seen:
            return
        seen.add(stage)
        entry = self.stages[stage]
        for rel, digest in sorted({**entry["inputs"], **entry["outputs"]}.items()):
            path = self.root / rel
            if not path.exists():
                raise StaleUpstream(f"artifact {rel} (from stage {stage!r}) is missing")
            if sha256_file(path) != digest:
                raise StaleUpstream(f"artifact {rel} changed since stage {stage!r} ran; re-run it")
        for rel in entry["inputs"]:
            producer = self.producer_of(rel)
            if producer is not None and producer != stage:
                self._check_stage(producer, seen)

    def require(self, stage: str, artifacts: Iterable[Path]) -> None:
        seen: set[str] = set()
        for path in artifacts:
            rel = self._rel(path)
            producer = self.producer_of(rel)
            if producer is None:
                raise StaleUpstream(f"stage {stage!r} needs {rel}, which no recorded stage produced")
            self._check_stage(producer, seen)

    def record(self, stage: str, inputs: Iterable[Path], outputs: Iterable[Path]) -> None:
        # a re-run stage supersedes any earlier claim on the same outputs
        outs = {self._rel(p): sha256_file(p) for p in outputs}
        for other, entry in list(self.stages.items()):
            if other != stage and set(entry["outputs"]) & set(outs):
                del self.stages[other]
        self.stages[stage] = {
            "inputs": {self._rel(p): sha256_file(p) for p in inputs},
            "outputs": outs,
        }
        write_text(self.path, dump_json({"stages": self.stages}))


# -- pipeline ------------------------------------------------------------------

class Pipeline:
    def __init__(self, cfg: PipelineConfig, world: ToyWorld | None = None):
        self.cfg = cfg
        self.out = cfg.out
        self.out.mkdir(parents=True, exist_ok=True)
        self.ledger = RunLedger(self.out)
        self._world = world

    # paths
    @property
    def corpus_path(self) -> Path:
        return self.out / "corpus.jsonl"

    @property
    def splits_path(self) -> Path:
        return self.out / "splits.json"

    def synth_path(self, model: str) -> Path:
        return self.out / "synth" / f"{model}.jsonl"

    @property
    def synth_index_path(self) -> Path:
        return self.out / "synth" / "index.json"

    def verdicts_path(self, model: str) -> Path:
        return self.out / "verdicts" / f"{model}.json"

    @property
    def plans_path(self) -> Path:
        return self.out / "plans.json"

    def model_path(self, seed: int) -> Path:
        return self.out / "models" / f"s{seed}.npz"

    @property
    def metrics_path(self) -> Path:
        return self.out / "metrics.csv"

    @property
    def summary_path(self) -> Path:
        return self.out / "summary.json"

    @property
    def figures(self) -> Path:
        return self.out / "figures"

    # shared state
    @property
    def world(self) -> ToyWorld:
        if self._world is None:
            self._world = generate_world(self.cfg.world, self.cfg.world_seed)
        return self._world

    @property
    def grid(self):
        return self.cfg.grid

    @property
    def uses_synth(self) -> bool:
        return any(c in SYNTH_CONFIGS for c in self.grid.configs)

    def synth_files(self) -> list[Path]:
        if not self.uses_synth:
            return []
        return [self.synth_path(m) for m in self.grid.models] + [self.synth_index_path]

    def load_corpus(self) -> Manifest:
        return load_manifest(self.corpus_path)

    def load_synth(self) -> list[Utterance]:
        utts = []
        for m in (self.grid.models if self.uses_synth else ()):
            utts.extend(load_manifest(self.synth_path(m)))
        return utts

    def all_utterances(self) -> dict[str, Utterance]:
        utts = self.load_corpus().by_id()
        utts.update({u.id: u for u in self.load_synth()})
        return utts

    def selected_speakers(self, corpus: Manifest):
        wanted = self.grid.speakers
        recs = [s for s in corpus.speakers if wanted is None or s.speaker_id in wanted]
        if not recs:
            raise ConfigError("no speakers selected")
        return recs

    def service(self, name: str, utterances: Iterable[Utterance] = ()):
        """HTTP endpoint when a URL is configured, else an in-process mock."""
        endpoint = self.cfg.services.endpoint(name)
        if endpoint is not None:
            return as_transport(endpoint)
        return LocalTransport(MockBackend(self.world, utterances))

    # stages
    def split(self) -> list[Path]:
        cfg, g = self.cfg, self.grid
        if cfg.corpus.manifest:
            raw = load_manifest(cfg.corpus.manifest)
        else:
            raw = make_demo_manifest(self.world, cfg.corpus.utts_per_speaker, cfg.world_seed,
                                     cfg.corpus.include_noisy)
        corpus = filter_transcripts(raw, cfg.corpus.min_words)
        dropped = len(raw) - len(corpus)
        if dropped:
            log.info("transcript filter dropped %d utterances", dropped)
        splits: dict[str, dict] = {}
        for seed in cfg.seeds:
            per = {}
            for rec in self.selected_speakers(corpus):
                a = split_speaker(rec, g.ratio, seed)
                real, rest = sample_real_subset(list(a.train_ids), g.real_fraction, seed)
                per[rec.speaker_id] = {**a.to_json(), "real": real, "to_synth": rest}
            splits[str(seed)] = per
        self.corpus_path.write_bytes(manifest_bytes(corpus))
        write_text(self.splits_path, dump_json(splits))
        outputs = [self.corpus_path, self.splits_path]
        self.ledger.record("split", [], outputs)
        return outputs

    def load_splits(self) -> dict:
        return json.loads(self.splits_path.read_text())

    def synthesize(self) -> list[Path]:
        self.ledger.require("synthesize", [self.corpus_path, self.splits_path])
        g = self.grid
        corpus = self.load_corpus()
        utts = corpus.by_id()
        splits = self.load_splits()
        recs = self.selected_speakers(corpus)
        genders = {r.speaker_id: r.gender for r in recs}
        tts = self.service("tts", corpus)
        index: dict = {"models": {}}
        outputs = []
        for model in (g.models if self.uses_synth else ()):
            produced: list[Utterance] = []
            failures: list[dict] = []

            def run(jobs: list[SynthJob]) -> list[str]:
                res = synthesize_batch(jobs, tts)
                produced.extend(res.utterances)
                failures.extend({"utterance_id": f.utterance_id, "reason": f.reason} for f in res.failures)
                return [u.id for u in res.utterances]

            per_seed = {}
            for seed in self.cfg.seeds:
                sp = splits[str(seed)]
                pairing = pair_mismatched(recs, seed) if "mismatched" in g.configs else {}
                extra = (extra_synth_transcripts(make_text_pool(g.extra_pool_size, 0, tag="extra"), g.extra_n, seed)
                         if "dc_os_extra" in g.configs else [])
                prompts = {sid: select_reference_prompt([utts[i] for i in s["real"]], g.prompt_cap(model)).id
                           for sid, s in sp.items()}
                entry = {}
                for sid in sorted(sp):
                    s = sp[sid]
                    prompt_ref = utts[prompts[sid]].audio_ref
                    rec = {"prompt": prompts[sid]}
                    rec["base"] = run([SynthJob(synth_id(model, seed, uid), sid, utts[uid].text, prompt_ref, model)
                                       for uid in s["to_synth"]])
                    if pairing:
                        donor = pairing[sid]
                        rec["donor"] = donor
                        donor_ref = utts[prompts[donor]].audio_ref
                        rec["mismatched"] = run([SynthJob(synth_id(model, seed, uid, "mm"), sid, utts[uid].text,
                                                          donor_ref, model) for uid in s["to_synth"]])
                    if extra:
                        rec["extra"] = run([SynthJob(synth_id(model, seed, f"{sid}-{i:04d}", "extra"), sid, text,
                                                     prompt_ref, model) for i, text in enumerate(extra)])
                    entry[sid] = rec
                per_seed[str(seed)] = entry
            if failures:
                log.warning("%s: %d synthesis jobs failed", model, len(failures))
            index["models"][model] = {"seeds": per_seed, "failures": sorted(failures, key=lambda f: f["utterance_id"])}
            path = self.synth_path(model)
            path.parent.mkdir(parents=True, exist_ok=True)
            produced.sort(key=lambda u: u.id)
            path.write_bytes(manifest_bytes(build_manifest(f"synth-{model}", genders, produced, 0)))
            outputs.append(path)
        if outputs:
            write_text(self.synth_index_path, dump_json(index))
            outputs.append(self.synth_index_path)
        self.ledger.record("synthesize", [self.corpus_path, self.splits_path], outputs)
        return outputs

    def filter(self) -> list[Path]:
        inputs = [self.corpus_path] + self.synth_files()
        self.ledger.require("filter", inputs)
        threshold = self.grid.filter_threshold
        outputs = []
        if self.uses_synth:
            corpus = self.load_corpus()
            synth = self.load_synth()
            asr = self.service("asr", list(corpus) + synth)
            for model in self.grid.models:
                utts = [u for u in synth if u.source_model == model]
                kept, _, verdicts = filter_hallucinations(utts, asr, threshold)
                log.info("%s: kept %d of %d synthetic utterances", model, len(kept), len(utts))
                doc = {"threshold": threshold, "kept": len(kept), "total": len(utts),
                       "verdicts": [v.to_json() for v in verdicts]}
                outputs.append(write_text(self.verdicts_path(model), dump_json(doc)))
        self.ledger.record("filter", inputs, outputs)
        return outputs

    def compose(self) -> list[Path]:
        verdict_files = [self.verdicts_path(m) for m in self.grid.models] if self.uses_synth else []
        inputs = [self.splits_path] + self.synth_files() + verdict_files
        self.ledger.require("compose", inputs)
        g = self.grid
        splits = self.load_splits()
        index = json.loads(self.synth_index_path.read_text())["models"] if self.uses_synth else {}
        kept = {}
        for m in (g.models if self.uses_synth else ()):
            doc = json.loads(self.verdicts_path(m).read_text())
            kept[m] = {v["utterance_id"] for v in doc["verdicts"] if v["kept"]}
        plans = []
        for seed in self.cfg.seeds:
            sp = splits[str(seed)]
            for config in g.configs:
                models = [None] if config in REAL_ONLY_CONFIGS else list(g.models)
                for model in models:
                    for sid in sorted(sp):
                        plan = self._plan(config, model, seed, sid, sp[sid], index, kept)
                        plans.append(plan.to_json())
        write_text(self.plans_path, dump_json({"plans": plans}))
        self.ledger.record("compose", inputs, [self.plans_path])
        return [self.plans_path]

    def _plan(self, config, model, seed, sid, s, index, kept):
        g = self.grid
        meta = {"speaker_id": sid, "config": config_tag(model, config), "seed": seed}
        if config == "real10":
            return compose_training_set(s["real"], [], 1, False, seed, meta)
        if config == "real100":
            return compose_training_set(s["train"], [], 1, False, seed, meta)
        _, oversample, dc = CONFIG_FLAGS[config]
        rec = index[model]["seeds"][str(seed)][sid]
        base = rec["base"]
        if g.filter_base:
            base = [i for i in base if i in kept[model]]
        synth = rec["mismatched"] if config == "mismatched" else list(base)
        if config == "dc_os_extra":
            synth = synth + [i for i in rec["extra"] if i in kept[model]]
        return compose_training_set(s["real"], synth, g.os_factor if oversample else 1, dc, seed, meta)

    def load_plans(self):
        from .composer import CompositionPlan
        return [CompositionPlan.from_json(p) for p in json.loads(self.plans_path.read_text())["plans"]]

    @staticmethod
    def _model_key(plan) -> str:
        return f"{plan.meta['config']}|{plan.meta['speaker_id']}|"

    def train(self) -> list[Path]:
        inputs = [self.corpus_path, self.plans_path] + self.synth_files()
        self.ledger.require("train", inputs)
        utts = self.all_utterances()
        by_seed: dict[int, dict[str, np.ndarray]] = {s: {} for s in self.cfg.seeds}
        for plan in self.load_plans():
            cfg = replace(self.cfg.train, seed=plan.seed)
            model = train_model(plan, self.world, cfg, utts)
            by_seed[plan.seed].update(model.to_arrays(self._model_key(plan)))
            log.info("trained %s seed=%d final loss %.3e", self._model_key(plan), plan.seed, model.loss_history[-1])
        outputs = [save_npz(self.model_path(seed), arrays) for seed, arrays in sorted(by_seed.items())]
        self.ledger.record("train", inputs, outputs)
        return outputs

    def load_model(self, plan, arrays: Mapping[str, np.ndarray]) -> ToyModel:
        P = domain_map(self.world.feature_dim, self.cfg.train.d_emb, self.cfg.train.map_seed)
        return ToyModel.from_arrays(arrays, P, self._model_key(plan))

    def model_files(self) -> list[Path]:
        return [self.model_path(s) for s in self.cfg.seeds]

    def evaluate(self) -> list[Path]:
        inputs = [self.corpus_path, self.splits_path, self.plans_path] + self.model_files()
        self.ledger.require("evaluate", inputs)
        utts = self.load_corpus().by_id()
        splits = self.load_splits()
        eval_texts = make_text_pool(self.grid.eval_texts, 0, tag="eval") if self.grid.eval_texts else []
        reports = []
        loaded = {s: dict(np.load(self.model_path(s))) for s in self.cfg.seeds}
        for plan in self.load_plans():
            sid, tag = plan.meta["speaker_id"], plan.meta["config"]
            model = self.load_model(plan, loaded[plan.seed])
            test = [utts[i] for i in splits[str(plan.seed)][sid]["test"]]
            s, c, w = evaluate_model(self.world, model, test, eval_texts, key=f"{tag}/s{plan.seed}")
            reports.append(MetricReport(sid, plan.seed, tag, s, c, w))
        write_text(self.metrics_path, reports_to_csv(reports))
        self.ledger.record("evaluate", inputs, [self.metrics_path])
        return [self.metrics_path]

    def project(self) -> list[Path]:
        pc = self.cfg.project
        inputs = [self.corpus_path, self.splits_path, self.plans_path] + self.synth_files() + self.model_files()
        self.ledger.require("project", inputs)
        if not self.uses_synth:
            raise ConfigError("projection needs a synthetic config in the grid")
        seed = pc.seed if pc.seed is not None else self.cfg.seeds[0]
        if seed not in self.cfg.seeds:
            raise ConfigError(f"projection seed {seed} is not a run seed")
        splits = self.load_splits()[str(seed)]
        sid = pc.speaker or sorted(splits)[0]
        if sid not in splits:
            raise ConfigError(f"unknown projection speaker {sid!r}")
        model_name = self.grid.models[0]
        utts = self.all_utterances()
        index = json.loads(self.synth_index_path.read_text())["models"][model_name]["seeds"][str(seed)][sid]
        plans = {(p.meta["config"], p.meta["speaker_id"], p.seed): p for p in self.load_plans()}
        arrays = dict(np.load(self.model_path(seed)))

        panels = [("matched", pc.config, index["base"], PointLabel.SYNTHETIC_MATCHED)]
        if "mismatched" in index and "mismatched" in self.grid.configs:
            panels.append(("mismatched", "mismatched", index["mismatched"], PointLabel.SYNTHETIC_MISMATCHED))
        real_ids = sorted(splits[sid]["train"])[:pc.max_points]
        outputs, stats = [], {}
        for name, config, synth_ids, label in panels:
            plan = plans.get((config_tag(model_name, config), sid, seed))
            if plan is None:
                raise ConfigError(f"no trained {config!r} model for speaker {sid}")
            model = self.load_model(plan, arrays)
            ids = real_ids + sorted(synth_ids)[:pc.max_points]
            X = np.stack([mean_pool(utterance_frames(self.world, model, utts[i], pc.frame_rate)) for i in ids])
            labels = [PointLabel.REAL] * len(real_ids) + [label] * (len(ids) - len(real_ids))
            if pc.method == "tsne":
                res = run_tsne(X, pc.perplexity, pc.iters, seed)
                Y = res.embedding
                stats[name] = {"kl_initial": round(res.kl_initial, 6), "kl_final": round(res.kl_final, 6),
                               "perplexity": res.perplexity}
            else:
                Y = pca_2d(X)
                stats[name] = {}
            stats[name].update(n_points=len(ids), speaker=sid, seed=seed, model=model_name, config=config,
                               separation=round(_separation(Y, len(real_ids)), 6))
            points = [EmbeddedPoint(i, (float(x), float(y)), lab) for i, (x, y), lab in zip(ids, Y, labels)]
            svg, csv_file = emit_scatter(points, self.figures / f"latents_{name}.svg",
                                         title=f"{sid}: speaker-{name} ({pc.method})")
            outputs += [svg, csv_file]
        outputs.append(write_text(self.figures / "projection.json", dump_json(stats)))
        self.ledger.record("project", inputs, outputs)
        return outputs

    def report(self) -> list[Path]:
        self.ledger.require("report", [self.metrics_path])
        reports = reports_from_csv(self.metrics_path.read_text())
        summary = build_summary(reports, self.grid.models, self.cfg.listening)
        outputs = [write_text(self.summary_path, dump_json(summary))]
        for metric in ("SECS", "WER"):
            rows = [r for r in summary["configs"]]
            ref = next((r[metric] for r in rows if r["config"] == f"{REAL_ONLY}/real10"), None)
            outputs.append(emit_metric_bars(rows, metric, self.figures / f"{metric.lower()}_by_config.svg",
                                            ylabel=metric if metric == "SECS" else "WER (%)", reference=ref))
        self.ledger.record("report", [self.metrics_path], outputs)
        return outputs

    def run(self, stages: Sequence[str] = STAGES) -> dict[str, list[Path]]:
        done = {}
        for stage in stages:
            if stage == "project" and not self.uses_synth:
                continue
            log.info("stage %s", stage)
            done[stage] = getattr(self, stage)()
        return done

    def ablate(self) -> list[Path]:
        ab = self.cfg.ablation
        wcfg = WorldConfig.from_dict({**asdict(self.cfg.world), **ab.world, "n_speakers": ab.n_speakers})
        world = generate_world(wcfg, self.cfg.world_seed)
        corpus = filter_transcripts(make_demo_manifest(world, ab.utts_per_speaker, self.cfg.world_seed),
                                    self.cfg.corpus.min_words)
        rows = ablate_embedding_size(world, corpus, ab.sizes, self.grid, self.cfg.train)
        header = "emb_size,SECS,CER,WER\n"
        body = "".join(f"{r['emb_size']},{r['SECS']:.6f},{r['CER']:.4f},{r['WER']:.4f}\n" for r in rows)
        outputs = [
            write_text(self.out / "ablation.json", dump_json({"model": self.grid.models[0], "rows": rows})),
            write_text(self.out / "ablation.csv", header + body),
            emit_metric_bars(rows, "SECS", self.figures / "ablation_secs.svg", label_key="emb_size"),
        ]
        return outputs


def _separation(Y: np.ndarray, n_first: int) -> float:
    """Centroid distance between the first ``n_first`` rows and the rest, over mean intra-group spread."""
    a, b = Y[:n_first], Y[n_first:]
    if len(a) == 0 or len(b) == 0:
        return 0.0
    intra = 0.5 * (np.linalg.norm(a - a.mean(0), axis=1).mean() + np.linalg.norm(b - b.mean(0), axis=1).mean())
    return float(np.linalg.norm(a.mean(0) - b.mean(0)) / max(intra, 1e-12))


def build_summary(reports: Sequence[MetricReport], models: Sequence[str], listening: Mapping | None = None) -> dict:
    """Aggregated tables: real-only rows, the five-row block per source model,
    speaker-matched vs mismatched, and optional listening-test statistics."""
    agg = aggregate_runs(reports)

    def row(tag: str, label: str, dc: bool, os_: bool) -> dict:
        s = agg[tag].to_json()
        return {"config": tag, "training_data": label, "DC": dc, "OS": os_, "SECS": s["SECS"], "CER": s["CER"],
                "WER": s["WER"], "n_speakers": s["n_speakers"], "n_seeds": s["n_seeds"]}

    table: dict[str, list] = {}
    real_rows = [row(f"{REAL_ONLY}/{c}", label, False, False) for c, label in REAL_ROWS if f"{REAL_ONLY}/{c}" in agg]
    if real_rows:
        table[REAL_ONLY] = real_rows
    match: dict[str, list] = {}
    for m in models:
        block = []
        for c, label in TABLE_ROWS:
            tag = config_tag(m, c)
            if tag in agg:
                _, os_, dc = CONFIG_FLAGS[c]
                block.append(row(tag, label, dc, os_))
        if block:
            table[m] = block
        pair = [(c, kind) for c, kind in (("dc", "matched"), ("mismatched", "mismatched")) if config_tag(m, c) in agg]
        if len(pair) == 2:
            match[m] = [{**row(config_tag(m, c), "Real 10% + Synth 90%", True, False), "speaker": kind}
                        for c, kind in pair]
    summary = {"table": table, "speaker_match": match, "configs": [s.to_json() for s in agg.values()]}
    if listening:
        summary["listening"] = listening_stats(listening)
    return summary


def listening_stats(listening: Mapping) -> dict:
    """``{"abx": {name: [wins, trials]}, "mos": {name: [scores]}}`` -> preference and MOS with 95% CI."""
    out: dict = {}
    for name, (wins, trials) in sorted(listening.get("abx", {}).items()):
        out.setdefault("abx", {})[name] = abx_preference(int(wins), int(trials))
    for name, scores in sorted(listening.get("mos", {}).items()):
        mean, half = mos_ci(scores)
        out.setdefault("mos", {})[name] = {"mean": round(mean, 4), "ci95": round(half, 4), "n": len(scores)}
    unknown = set(listening) - {"abx", "mos"}
    if unknown:
        raise ConfigError(f"unknown listening sections: {sorted(unknown)}")
    return out


def run_stage(cfg: PipelineConfig, stage: str) -> list[Path]:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    return getattr(Pipeline(cfg), stage)()
