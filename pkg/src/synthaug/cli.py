"""Command-line entry point: ``synthaug <stage> [--config PATH] [--seed N] [--out DIR] [--override K=V]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import DEMO_CONFIG, apply_override, config_from_dict, load_config, parse_overrides
from .errors import SynthAugError
from .gateway.mock import MockBackend, MockServer
from .manifest import load_manifest
from .pipeline import STAGES, Pipeline

log = logging.getLogger("synthaug")

COMMANDS = STAGES + ("run", "demo", "ablate", "serve-mocks")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, action="append", dest="seeds", metavar="N",
                        help="run seed (repeatable; replaces the configured seeds)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. grid.filter_threshold=1.0")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="synthaug", description="Synthetic-speech augmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "split": "filter transcripts and split every speaker 10:1:1",
        "synthesize": "choose prompts and synthesize the non-real training texts",
        "filter": "transcribe synthetic speech and mark hallucinations",
        "compose": "build composition plans for every grid cell",
        "train": "train one model per plan",
        "evaluate": "score every model, write metrics.csv",
        "project": "2-D latent scatter plots",
        "report": "aggregate metrics into summary.json and figures",
        "run": "all stages in order",
        "demo": "all stages on the small bundled demo config",
        "ablate": "domain-embedding-size sweep",
        "serve-mocks": "serve mock synthesis/ASR/embedding endpoints",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "serve-mocks":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8765)
            p.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    return parser


def _config(args):
    if args.command == "demo" and args.config is None:
        raw = json.loads(json.dumps(DEMO_CONFIG))
        for key, value in parse_overrides(args.override):
            apply_override(raw, key, value)
        if args.seeds:
            raw["seeds"] = args.seeds
        if args.out:
            raw["out_dir"] = args.out
        return config_from_dict(raw)
    return load_config(args.config, args.override, args.seeds, args.out)


def serve_mocks(cfg, host: str, port: int, duration: float | None) -> None:
    pipe = Pipeline(cfg)
    utts = []
    if pipe.corpus_path.exists():
        utts.extend(pipe.load_corpus())
        for m in cfg.grid.models:
            if pipe.synth_path(m).exists():
                utts.extend(load_manifest(pipe.synth_path(m)))
    backend = MockBackend(pipe.world, utts)
    with MockServer(backend, host, port) as server:
        print(json.dumps({"url": server.url}), flush=True)
        try:
            if duration is None:
                while True:
                    time.sleep(3600)
            time.sleep(duration)
        except KeyboardInterrupt:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "serve-mocks":
            serve_mocks(cfg, args.host, args.port, args.duration)
            return 0
        pipe = Pipeline(cfg)
        if args.command in ("run", "demo"):
            done = pipe.run()
            written = [str(p) for paths in done.values() for p in paths]
        elif args.command == "ablate":
            written = [str(p) for p in pipe.ablate()]
        else:
            written = [str(p) for p in getattr(pipe, args.command)()]
    except SynthAugError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "artifacts": written}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
