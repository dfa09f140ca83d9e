"""Multiple-choice video QA annotations, frame extraction and accuracy reports.

Two annotation layouts are understood:

``nextqa``
    A delimiter-separated table with one question per row (NExT-QA and
    IntentQA ship this way).  Default columns are ``video``, ``question``,
    ``a0``..``a4``, ``answer``, ``qid``, ``type`` and the optional
    ``frame_count``; any of them can be renamed through
    ``DatasetDescriptor.columns``.
``star``
    A JSON list (or JSON-lines file) of records with ``question_id``,
    ``question``, ``video_id``, four ``choices`` and the answer given as text
    (``answer``) or index (``answer_index``).  The category is the prefix
    of ``question_id`` (``Interaction_T1_13`` -> ``Interaction``).

Frames come from ``<video_root>/<video_id>/`` holding numbered images, or
from a video file decoded with an ``ffmpeg`` subprocess.
"""

from __future__ import annotations

import csv
import enum
import json
import os
import re
import shutil
import subprocess
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .core import FrameSample, QAItem, VideoRef
from .errors import (
    DatasetError,
    DecodeFailure,
    DecoderNotFound,
    InvalidArgument,
    MissingFrameFile,
    SchemaError,
)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".webp")
VIDEO_SUFFIXES = (".mp4", ".webm", ".mkv", ".avi", ".mov")
DECODER_ENV = "VIDCTX_FFMPEG"

NEXTQA_COLUMNS = {
    "video": "video",
    "question": "question",
    "options": ["a0", "a1", "a2", "a3", "a4"],
    "answer": "answer",
    "qid": "qid",
    "category": "type",
    "frame_count": "frame_count",
}


class DatasetKind(enum.Enum):
    NEXTQA = "nextqa"
    STAR = "star"


@dataclass(frozen=True)
class DatasetDescriptor:
    kind: DatasetKind
    annotation_path: str
    video_root: str
    category_field_name: Optional[str] = None
    columns: Mapping[str, Any] = field(default_factory=dict)
    delimiter: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "annotation_path": self.annotation_path,
            "video_root": self.video_root,
            "category_field_name": self.category_field_name,
            "columns": dict(self.columns),
            "delimiter": self.delimiter,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DatasetDescriptor":
        kwargs = dict(data)
        kwargs["kind"] = DatasetKind(kwargs["kind"])
        return cls(**kwargs)


@dataclass(frozen=True)
class EvalRecord:
    item: QAItem
    predicted_index: int

    @property
    def correct(self) -> bool:
        return self.predicted_index == self.item.answer_index


def resolve_video_source(video_root: str | os.PathLike, video_id: str) -> str:
    root = Path(video_root)
    frame_dir = root / video_id
    if frame_dir.is_dir():
        return str(frame_dir)
    for suffix in VIDEO_SUFFIXES:
        candidate = root / f"{video_id}{suffix}"
        if candidate.is_file():
            return str(candidate)
    return str(frame_dir)


def load_dataset(desc: DatasetDescriptor) -> list[QAItem]:
    path = Path(desc.annotation_path)
    if not path.is_file():
        raise DatasetError(f"annotation file not found: {path}")
    if not Path(desc.video_root).is_dir():
        raise DatasetError(f"video root not found: {desc.video_root}")
    if desc.kind is DatasetKind.NEXTQA:
        return _load_nextqa(path, desc)
    return _load_star(path, desc)


def _load_nextqa(path: Path, desc: DatasetDescriptor) -> list[QAItem]:
    cols = {**NEXTQA_COLUMNS, **desc.columns}
    if desc.category_field_name:
        cols["category"] = desc.category_field_name
    delimiter = desc.delimiter or ("\t" if path.suffix in (".tsv", ".tab") else ",")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        required = [cols["video"], cols["question"], cols["answer"], *cols["options"]]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        items = []
        for row in reader:
            line = reader.line_num
            video_id = (row.get(cols["video"]) or "").strip()
            question = (row.get(cols["question"]) or "").strip()
            options = [(row.get(c) or "").strip() for c in cols["options"]]
            if not video_id or not question:
                raise SchemaError(f"{path}: line {line}: empty video id or question")
            if not all(options):
                raise SchemaError(f"{path}: line {line}: empty answer option")
            try:
                answer = int(row[cols["answer"]])
            except (TypeError, ValueError):
                raise SchemaError(
                    f"{path}: line {line}: answer {row.get(cols['answer'])!r} is not an integer"
                ) from None
            if not 0 <= answer < len(options):
                raise SchemaError(
                    f"{path}: line {line}: answer index {answer} outside [0, {len(options)})"
                )
            frames = 0
            raw_count = (row.get(cols["frame_count"]) or "").strip()
            if raw_count:
                try:
                    frames = int(raw_count)
                except ValueError:
                    raise SchemaError(
                        f"{path}: line {line}: frame count {raw_count!r} is not an integer"
                    ) from None
            video = VideoRef(video_id, resolve_video_source(desc.video_root, video_id), frames)
            items.append(
                QAItem(
                    video=video,
                    question=question,
                    options=tuple(options),
                    answer_index=answer,
                    category=(row.get(cols["category"]) or "").strip(),
                    qid=(row.get(cols["qid"]) or "").strip() or f"{video_id}_{line}",
                )
            )
    return items


def _read_records(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".jsonl":
            return [json.loads(line) for line in text.splitlines() if line.strip()]
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a list of question records")
    return data


def _load_star(path: Path, desc: DatasetDescriptor) -> list[QAItem]:
    category_field = desc.category_field_name or "question_id"
    items = []
    for n, rec in enumerate(_read_records(path), start=1):
        where = f"{path}: record {n}"
        for key in ("question_id", "question", "video_id", "choices"):
            if key not in rec:
                raise SchemaError(f"{where}: missing field {key!r}")
        choices = [c["choice"] if isinstance(c, dict) else c for c in rec["choices"]]
        if len(choices) != 4:
            raise SchemaError(f"{where}: expected 4 choices, got {len(choices)}")
        if "answer_index" in rec:
            answer = rec["answer_index"]
            if not isinstance(answer, int) or not 0 <= answer < 4:
                raise SchemaError(f"{where}: answer index {answer!r} outside [0, 4)")
        elif "answer" in rec:
            if rec["answer"] not in choices:
                raise SchemaError(f"{where}: answer {rec['answer']!r} is not one of the choices")
            answer = choices.index(rec["answer"])
        else:
            raise SchemaError(f"{where}: missing field 'answer'")
        if category_field not in rec:
            raise SchemaError(f"{where}: missing field {category_field!r}")
        video_id = str(rec["video_id"])
        video = VideoRef(
            video_id,
            resolve_video_source(desc.video_root, video_id),
            int(rec.get("frame_count", 0) or 0),
        )
        items.append(
            QAItem(
                video=video,
                question=rec["question"],
                options=tuple(choices),
                answer_index=answer,
                category=str(rec[category_field]).split("_")[0],
                qid=str(rec["question_id"]),
            )
        )
    return items


# --- frames -----------------------------------------------------------------


def _numeric_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else -1, path.name)


def frame_files(directory: str | os.PathLike) -> list[Path]:
    """Image files of a pre-extracted frame directory, in frame order."""
    files = [p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=_numeric_key)


def find_decoder(decoder: Optional[str] = None) -> str:
    """Locate an ffmpeg binary.

    Tries the explicit argument, ``$VIDCTX_FFMPEG``, ``ffmpeg`` on ``PATH``
    and finally the binary bundled with ``imageio-ffmpeg`` if installed.
    """
    for candidate in (decoder, os.environ.get(DECODER_ENV), "ffmpeg"):
        if candidate and shutil.which(candidate):
            return shutil.which(candidate)
    try:
        import imageio_ffmpeg
    except ImportError:
        pass
    else:
        try:
            return imageio_ffmpeg.get_ffmpeg_exe()
        except RuntimeError:
            pass
    raise DecoderNotFound("-", "no ffmpeg binary found; set VIDCTX_FFMPEG or install ffmpeg")


def count_frames(video: VideoRef, decoder: Optional[str] = None) -> int:
    source = Path(video.source)
    if source.is_dir():
        return len(frame_files(source))
    if not source.is_file():
        raise MissingFrameFile(video.id, f"no frame directory or video file at {source}")
    try:
        exe = find_decoder(decoder)
    except DecoderNotFound as exc:
        raise DecoderNotFound(video.id, str(exc.args[0]).split(": ", 1)[-1]) from None
    cmd = [exe, "-nostdin", "-v", "error", "-i", str(source), "-map", "0:v:0",
           "-f", "null", "-progress", "pipe:1", "-nostats", "-"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise DecodeFailure(video.id, proc.stderr.strip() or f"ffmpeg exited {proc.returncode}")
    counts = re.findall(r"^frame=(\d+)", proc.stdout, flags=re.M)
    if not counts:
        raise DecodeFailure(video.id, "ffmpeg reported no frame count")
    return int(counts[-1])


def extract_frames(
    video: VideoRef, indices: Sequence[int], decoder: Optional[str] = None
) -> list[FrameSample]:
    """Image bytes for each requested frame, in request order.

    ``segment_index`` of each sample is its position in ``indices``.
    Repeated indices are decoded once and shared.
    """
    if not indices:
        return []
    if any(i < 0 for i in indices):
        raise InvalidArgument(f"negative frame index in {list(indices)}")
    source = Path(video.source)
    if source.is_dir():
        files = frame_files(source)
        payloads = {}
        for i in sorted(set(indices)):
            if i >= len(files):
                raise MissingFrameFile(
                    video.id, f"frame {i} requested but {source} holds {len(files)} images"
                )
            payloads[i] = files[i].read_bytes()
    elif source.is_file():
        payloads = _decode_frames(video, sorted(set(indices)), decoder)
    else:
        raise MissingFrameFile(video.id, f"no frame directory or video file at {source}")
    for i, data in payloads.items():
        if not data:
            raise MissingFrameFile(video.id, f"frame {i} is empty")
    return [FrameSample(j, i, payloads[i]) for j, i in enumerate(indices)]


def _decode_frames(video: VideoRef, unique: list[int], decoder: Optional[str]) -> dict[int, bytes]:
    try:
        exe = find_decoder(decoder)
    except DecoderNotFound as exc:
        raise DecoderNotFound(video.id, str(exc.args[0]).split(": ", 1)[-1]) from None
    select = "+".join(f"eq(n\\,{i})" for i in unique)
    with tempfile.TemporaryDirectory(prefix="vidctx-frames-") as tmp:
        cmd = [exe, "-nostdin", "-v", "error", "-i", video.source,
               "-vf", f"select='{select}'", "-fps_mode", "passthrough",
               "-q:v", "2", os.path.join(tmp, "%06d.jpg")]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise DecodeFailure(video.id, proc.stderr.strip() or f"ffmpeg exited {proc.returncode}")
        out = frame_files(tmp)
        if len(out) != len(unique):
            raise DecodeFailure(
                video.id, f"decoder produced {len(out)} of {len(unique)} requested frames"
            )
        return {i: p.read_bytes() for i, p in zip(unique, out)}


# --- reporting --------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyRow:
    label: str
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return float(f"{100.0 * self.correct / self.total:.1f}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.label,
            "correct": self.correct,
            "total": self.total,
            "accuracy": self.accuracy,
        }


@dataclass(frozen=True)
class AccuracyReport:
    rows: tuple[AccuracyRow, ...]
    overall: AccuracyRow

    def to_dict(self) -> dict[str, Any]:
        return {"categories": [r.to_dict() for r in self.rows], "overall": self.overall.to_dict()}

    def to_text(self) -> str:
        table = [("Category", "Correct", "Total", "Top-1 (%)")]
        for row in (*self.rows, self.overall):
            table.append((row.label, str(row.correct), str(row.total), f"{row.accuracy:.1f}"))
        widths = [max(len(r[k]) for r in table) for k in range(4)]
        lines = []
        for n, r in enumerate(table):
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if n == 0 or n == len(table) - 2:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def score_report(records: Sequence[EvalRecord], category_field: str = "category") -> AccuracyReport:
    """Top-1 accuracy overall and per category (categories sorted by name)."""
    if not records:
        raise InvalidArgument("cannot report on zero records")
    tally: dict[str, list[int]] = OrderedDict()
    for rec in records:
        label = str(getattr(rec.item, category_field)) or "(none)"
        counts = tally.setdefault(label, [0, 0])
        counts[0] += rec.correct
        counts[1] += 1
    rows = tuple(AccuracyRow(k, c, t) for k, (c, t) in sorted(tally.items()))
    overall = AccuracyRow("All", sum(r.correct for r in rows), sum(r.total for r in rows))
    return AccuracyReport(rows, overall)
