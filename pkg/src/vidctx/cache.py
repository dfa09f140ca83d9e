"""Append-only, content-addressed store for captions and option scores.

Each record type lives in its own JSON-lines file under the cache
directory.  Every line is ``{"key": <hex digest>, "record": {...}}``.  The
files are loaded once when the store opens; writes go through a single
lock and are flushed line by line, so an interrupted run loses at most
the line being written.  A truncated trailing line is skipped on load.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Iterable, Optional

from .errors import CacheIOError

log = logging.getLogger(__name__)

RECORD_TYPES = ("captions", "scores")


def cache_key(
    kind: str,
    video_id: str,
    frame_index: Optional[int],
    prompt: str,
    model_id: str,
    extra: Any,
) -> str:
    """Digest of everything that determines one backend answer.

    ``extra`` is the caption token budget for captions and the letter list
    for scores.
    """
    payload = json.dumps(
        [kind, video_id, frame_index, prompt, model_id, extra],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CacheStore:
    def __init__(self, cache_dir: str | os.PathLike):
        self.root = Path(cache_dir)
        self._lock = threading.Lock()
        self._data: dict[str, dict[str, dict]] = {kind: {} for kind in RECORD_TYPES}
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CacheIOError(f"cannot create cache dir {self.root}: {exc}") from exc
        for kind in RECORD_TYPES:
            self._load(kind)

    def path(self, kind: str) -> Path:
        return self.root / f"{kind}.jsonl"

    def _load(self, kind: str):
        path = self.path(kind)
        if not path.exists():
            return
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise CacheIOError(f"cannot read {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                self._data[kind][entry["key"]] = entry["record"]
            except (json.JSONDecodeError, KeyError, TypeError):
                log.warning("skipping corrupt cache line %s:%d", path, lineno)

    def get(self, kind: str, key: str) -> Optional[dict]:
        return self._data[kind].get(key)

    def put(self, kind: str, key: str, record: dict):
        line = json.dumps({"key": key, "record": record}, ensure_ascii=False, sort_keys=True)
        with self._lock:
            if key in self._data[kind]:
                return
            try:
                with open(self.path(kind), "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
            except OSError as exc:
                raise CacheIOError(f"cannot append to {self.path(kind)}: {exc}") from exc
            self._data[kind][key] = record

    def __len__(self):
        return sum(len(v) for v in self._data.values())

    def counts(self) -> dict[str, int]:
        return {kind: len(records) for kind, records in self._data.items()}

    def records(self, kind: str) -> Iterable[tuple[str, dict]]:
        return list(self._data[kind].items())

    def clear(self):
        with self._lock:
            for kind in RECORD_TYPES:
                try:
                    self.path(kind).unlink(missing_ok=True)
                except OSError as exc:
                    raise CacheIOError(f"cannot remove {self.path(kind)}: {exc}") from exc
                self._data[kind].clear()
