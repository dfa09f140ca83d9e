"""Command-line entry point: ``vidctx answer|evaluate|ablate|cache``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .aggregate import AggregationSpec
from .backend import BackendKind
from .cache import CacheStore
from .core import QAItem, VideoRef
from .datasets import DatasetDescriptor, DatasetKind, load_dataset
from .errors import ConfigError, DatasetError, InvalidArgument, VidCtxError
from .pipeline import ContextKind, ContextStrategy, Pipeline, PipelineConfig
from .prompts import CaptionMode, option_token_set
from .runner import (
    MANIFEST_NAME,
    RunManifest,
    ablate,
    ablation_dict,
    ablation_table,
    evaluate,
    question_record,
    report_from_manifest,
    run_timestamp,
    sweep_variants,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
AGG_CHOICES = ["l1max", "softmaxmax", "softmaxmean", "mean", "max", "vote"]

log = logging.getLogger("vidctx")


def _config_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", help="JSON config mirroring PipelineConfig fields")
    g.add_argument("--frames", type=int, help="frames sampled per video")
    g.add_argument("--context", help="none, current, distant or concat:K")
    g.add_argument("--captions", choices=["qaware", "static"])
    g.add_argument("--agg", choices=AGG_CHOICES)
    g.add_argument("--captions-only", action="store_true")
    g.add_argument("--concurrency", type=int, help="parallel backend calls per question")
    g.add_argument("--backend", choices=["remote", "mock"])
    g.add_argument("--endpoint")
    g.add_argument("--model")
    g.add_argument("--cache-dir")


def _dataset_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", help="JSON dataset descriptor")
    g.add_argument("--kind", choices=[k.value for k in DatasetKind])
    g.add_argument("--annotations")
    g.add_argument("--video-root")
    g.add_argument("--limit", type=int)


def build_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.frames is not None:
        changes["n_frames"] = args.frames
    if args.context:
        changes["context_strategy"] = ContextStrategy.parse(args.context)
    if args.captions:
        changes["caption_mode"] = CaptionMode(args.captions)
    if args.agg:
        changes["aggregation"] = AggregationSpec.parse(args.agg)
    if args.concurrency is not None:
        changes["concurrency_limit"] = args.concurrency
    if args.cache_dir:
        changes["cache_dir"] = args.cache_dir
    if args.captions_only:
        changes["captions_only"] = True
        ctx = changes.get("context_strategy", cfg.context_strategy)
        if ctx.kind is not ContextKind.CONCAT:
            changes["context_strategy"] = ContextStrategy(
                ContextKind.CONCAT, changes.get("n_frames", cfg.n_frames)
            )
    backend = {}
    if args.backend:
        backend["kind"] = BackendKind(args.backend)
    if args.endpoint:
        backend["endpoint"] = args.endpoint
    if args.model:
        backend["model_id"] = args.model
    if backend:
        changes["backend"] = dataclasses.replace(cfg.backend, **backend)
    return cfg.replace(**changes) if changes else cfg


def build_dataset(args) -> DatasetDescriptor:
    if args.dataset:
        path = Path(args.dataset)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"dataset descriptor not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read dataset descriptor {path}: {exc}") from exc
        for key in ("annotation_path", "video_root"):
            if key in data and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
        return DatasetDescriptor.from_dict(data)
    if not (args.kind and args.annotations and args.video_root):
        raise ConfigError("give --dataset or all of --kind, --annotations, --video-root")
    return DatasetDescriptor(DatasetKind(args.kind), args.annotations, args.video_root)


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def cmd_answer(args) -> int:
    cfg = build_config(args)
    option_token_set(len(args.option))
    source = Path(args.video)
    video = VideoRef(source.stem or source.name, str(source))
    item = QAItem(video, args.question, tuple(args.option), qid="cli")
    decision = Pipeline(cfg).run(item)
    letter = decision.winning_letter
    print(f"Answer: {letter}) {item.options[decision.answer_index]}")
    print(f"Aggregation: {decision.spec.name}  Context: {cfg.context_strategy}")
    print("Per-frame evidence:")
    for f in decision.per_frame:
        scores = {k: v for k, v in f.normalized.items() if k != decision.abstention_letter}
        top = max(sorted(scores), key=lambda k: scores[k])
        where = f"frame {f.frame_index}" if f.frame_index is not None else "text-only"
        line = f"  seg {f.segment_index:3d} {where:>12}  top {top} {scores[top]:+.4f}"
        if f.context:
            head = f.context.replace("\n", " | ")
            head = head if len(head) <= 70 else head[:67] + "..."
            line += f"  [{f.specifier or 'context'}] {head}"
        print(line)
    if args.manifest:
        manifest = RunManifest(cfg.to_dict(), None, run_timestamp(), [question_record(item, decision)])
        manifest.complete = True
        manifest.write(args.manifest)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    desc = build_dataset(args)
    items = load_dataset(desc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = evaluate(
        items, Pipeline(cfg), desc, out / MANIFEST_NAME, limit=args.limit, concurrency=args.jobs
    )
    report = report_from_manifest(manifest)
    (out / "report.txt").write_text(report.to_text())
    _write_json(out / "report.json", report.to_dict())
    print(report.to_text(), end="")
    return EXIT_OK


def load_sweep(args) -> dict:
    sweep: dict = {}
    if args.sweep:
        try:
            sweep = json.loads(Path(args.sweep).read_text())
        except FileNotFoundError:
            raise ConfigError(f"sweep file not found: {args.sweep}") from None
    if args.sweep_agg:
        sweep["aggregation"] = args.sweep_agg.split(",")
    if args.sweep_frames:
        sweep["frames"] = [int(n) for n in args.sweep_frames.split(",")]
    if args.sweep_context:
        sweep["context"] = args.sweep_context.split(",")
    return sweep


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    variants = sweep_variants(load_sweep(args))
    desc = build_dataset(args)
    items = load_dataset(desc)
    rows = ablate(items, Pipeline(cfg), variants, limit=args.limit)
    text = ablation_table(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.txt").write_text(text)
        _write_json(out / "ablation.json", ablation_dict(rows))
    print(text, end="")
    return EXIT_OK


def cmd_cache(args) -> int:
    cache_dir = args.cache_dir
    if not cache_dir and args.config:
        cache_dir = PipelineConfig.from_json(args.config).cache_dir
    if not cache_dir:
        raise ConfigError("no cache directory: give --cache-dir or a config with cache_dir")
    store = CacheStore(cache_dir)
    if args.action == "clear":
        store.clear()
        print(f"cleared {cache_dir}")
    else:
        for kind, count in store.counts().items():
            print(f"{kind:10s} {count:8d}  {store.path(kind)}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidctx", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("answer", help="answer one question about one video")
    p.add_argument("video", help="video file or directory of numbered frames")
    p.add_argument("--question", "-q", required=True)
    p.add_argument("--option", "-o", action="append", required=True, help="repeat per option")
    p.add_argument("--manifest", help="also write a one-question manifest here")
    _config_args(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("evaluate", help="run a dataset and report accuracy")
    _dataset_args(p)
    _config_args(p)
    p.add_argument("--out", required=True, help="directory for manifest and reports")
    p.add_argument("--jobs", type=int, default=1, help="questions processed in parallel")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare pipeline variants on a dataset")
    _dataset_args(p)
    _config_args(p)
    p.add_argument("--sweep", help="JSON sweep spec with aggregation/frames/context lists")
    p.add_argument("--sweep-agg")
    p.add_argument("--sweep-frames")
    p.add_argument("--sweep-context")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("cache", help="inspect or clear the cache")
    p.add_argument("action", choices=["inspect", "clear"])
    p.add_argument("--cache-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, DatasetError, InvalidArgument) as exc:
        print(f"vidctx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VidCtxError as exc:
        print(f"vidctx: error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
