"""Dataset-scale runs: manifests, accuracy reports and ablation sweeps."""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .aggregate import AggregationSpec, VideoDecision, redecide
from .core import QAItem, VideoRef
from .datasets import AccuracyReport, DatasetDescriptor, EvalRecord, score_report
from .errors import InvalidArgument
from .pipeline import ContextStrategy, Pipeline

MANIFEST_NAME = "manifest.json"


def run_timestamp() -> str:
    """UTC run time, pinned by ``SOURCE_DATE_EPOCH`` for reproducible manifests."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(timezone.utc).replace(microsecond=0)
    )
    return moment.isoformat()


def question_record(item: QAItem, decision: VideoDecision) -> dict[str, Any]:
    return {
        "qid": item.qid,
        "video_id": item.video.id,
        "question": item.question,
        "options": list(item.options),
        "category": item.category,
        "answer_index": item.answer_index,
        "predicted_index": decision.answer_index,
        "correct": decision.answer_index == item.answer_index,
        "decision": decision.to_dict(),
    }


def _item_from_record(rec: Mapping[str, Any]) -> QAItem:
    return QAItem(
        video=VideoRef(rec["video_id"], ""),
        question=rec["question"],
        options=tuple(rec["options"]),
        answer_index=rec["answer_index"],
        category=rec["category"],
        qid=rec["qid"],
    )


@dataclass
class RunManifest:
    config: dict[str, Any]
    dataset: Optional[dict[str, Any]]
    timestamp: str
    records: list[dict[str, Any]] = field(default_factory=list)
    report: Optional[dict[str, Any]] = None
    complete: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "dataset": self.dataset,
            "timestamp": self.timestamp,
            "complete": self.complete,
            "records": self.records,
            "report": self.report,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def write(self, path: str | os.PathLike):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def read(cls, path: str | os.PathLike) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def eval_records(self) -> list[EvalRecord]:
        return [EvalRecord(_item_from_record(r), r["predicted_index"]) for r in self.records]

    def decisions(self) -> list[VideoDecision]:
        return [VideoDecision.from_dict(r["decision"]) for r in self.records]


def report_from_manifest(manifest: RunManifest) -> AccuracyReport:
    return score_report(manifest.eval_records())


def evaluate(
    items: Sequence[QAItem],
    pipeline: Pipeline,
    dataset: Optional[DatasetDescriptor] = None,
    manifest_path: Optional[str | os.PathLike] = None,
    limit: Optional[int] = None,
    concurrency: int = 1,
) -> RunManifest:
    """Answer every question and build the run manifest.

    The manifest is rewritten after each finished question so an
    interrupted run leaves its progress on disk; a rerun recomputes
    finished questions from the cache without contacting the backend.
    """
    if limit is not None:
        items = items[:limit]
    if not items:
        raise InvalidArgument("no questions to evaluate")
    manifest = RunManifest(
        config=pipeline.config.to_dict(),
        dataset=dataset.to_dict() if dataset else None,
        timestamp=run_timestamp(),
    )
    done: dict[int, dict[str, Any]] = {}
    lock = threading.Lock()

    def flush():
        manifest.records = [done[k] for k in sorted(done)]
        if manifest_path is not None:
            manifest.write(manifest_path)

    def finish(pos: int, decision: VideoDecision):
        with lock:
            done[pos] = question_record(items[pos], decision)
            flush()

    try:
        if concurrency <= 1:
            for pos, item in enumerate(items):
                finish(pos, pipeline.run(item))
        else:
            with ThreadPoolExecutor(max_workers=concurrency) as ex:
                futures = {ex.submit(pipeline.run, item): pos for pos, item in enumerate(items)}
                try:
                    for fut in as_completed(futures):
                        finish(futures[fut], fut.result())
                except BaseException:
                    for fut in futures:
                        fut.cancel()
                    raise
    finally:
        with lock:
            flush()

    manifest.report = report_from_manifest(manifest).to_dict()
    manifest.complete = True
    flush()
    return manifest


@dataclass(frozen=True)
class Variant:
    name: str
    aggregation: Optional[AggregationSpec] = None
    n_frames: Optional[int] = None
    context: Optional[ContextStrategy] = None


def sweep_variants(sweep: Mapping[str, Sequence]) -> list[Variant]:
    """Expand a sweep spec into one-factor-at-a-time variants.

    Recognized axes: ``aggregation`` (preset names), ``frames`` (counts),
    ``context`` (strategy strings).
    """
    unknown = set(sweep) - {"aggregation", "frames", "context"}
    if unknown:
        raise InvalidArgument(f"unknown sweep axes: {sorted(unknown)}")
    variants = [Variant(f"agg={a}", aggregation=AggregationSpec.parse(a)) for a in sweep.get("aggregation", ())]
    variants += [Variant(f"frames={int(n)}", n_frames=int(n)) for n in sweep.get("frames", ())]
    variants += [
        Variant(f"context={c}", context=ContextStrategy.parse(c)) for c in sweep.get("context", ())
    ]
    if not variants:
        raise InvalidArgument("empty sweep: give at least one aggregation, frame count or context")
    return variants


@dataclass
class AblationRow:
    name: str
    report: AccuracyReport


def ablate(
    items: Sequence[QAItem],
    pipeline: Pipeline,
    variants: Sequence[Variant],
    limit: Optional[int] = None,
) -> list[AblationRow]:
    """Accuracy of each variant.

    Aggregation variants re-pool the stored raw scores of one base run and
    never reach the backend; frame and context variants rerun the
    pipeline, reusing cached captions and scores where prompts coincide.
    """
    if not variants:
        raise InvalidArgument("empty sweep")
    if limit is not None:
        items = items[:limit]
    base: Optional[list[VideoDecision]] = None
    rows = []
    for variant in variants:
        if variant.aggregation is not None:
            if base is None:
                base = [pipeline.run(item) for item in items]
            decisions = [redecide(d, variant.aggregation) for d in base]
        else:
            changes: dict[str, Any] = {}
            if variant.n_frames is not None:
                changes["n_frames"] = variant.n_frames
            if variant.context is not None:
                changes["context_strategy"] = variant.context
            runner = pipeline.with_config(pipeline.config.replace(**changes))
            decisions = [runner.run(item) for item in items]
        records = [EvalRecord(item, d.answer_index) for item, d in zip(items, decisions)]
        rows.append(AblationRow(variant.name, score_report(records)))
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> str:
    table = [("Variant", "Correct", "Total", "Top-1 (%)")]
    for row in rows:
        o = row.report.overall
        table.append((row.name, str(o.correct), str(o.total), f"{o.accuracy:.1f}"))
    widths = [max(len(r[k]) for r in table) for k in range(4)]
    lines = []
    for n, r in enumerate(table):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def ablation_dict(rows: Sequence[AblationRow]) -> list[dict[str, Any]]:
    return [{"variant": r.name, **r.report.to_dict()} for r in rows]

