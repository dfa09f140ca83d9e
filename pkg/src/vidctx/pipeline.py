"""End-to-end answering of one question about one video.

Per question: sample ``n_frames`` central frames, caption every frame with
a question-aware prompt, ask the model about each frame separately with a
context caption attached, read the first-token option scores, and pool
them into one decision.  Captions and scores are cached by content; the
per-frame calls run on a bounded thread pool.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, TypeVar

from . import core
from .aggregate import AggregationSpec, VideoDecision, frame_decision, pool
from .backend import BackendDescriptor, TokenScoreMap, make_backend
from .cache import CacheStore, cache_key
from .core import FrameSample, QAItem, TemporalSpecifier, VideoRef
from .datasets import count_frames, extract_frames
from .errors import ConfigError, InvalidArgument, MissingFrameFile
from .prompts import (
    CaptionMode,
    OptionTokenSet,
    build_caption_prompt,
    build_concat_prompt,
    build_vqa_prompt,
    option_token_set,
    prompt_hash,
)

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ContextKind(enum.Enum):
    NONE = "none"
    CURRENT = "current"
    DISTANT = "distant"
    CONCAT = "concat"


@dataclass(frozen=True)
class ContextStrategy:
    kind: ContextKind = ContextKind.DISTANT
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind is ContextKind.CONCAT:
            if self.k is None or self.k < 1:
                raise ConfigError("concatenated captions need a positive count, e.g. concat:16")
        elif self.k is not None:
            raise ConfigError(f"{self.kind.value} context takes no caption count")

    def __str__(self):
        return f"concat:{self.k}" if self.kind is ContextKind.CONCAT else self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ContextStrategy":
        name, _, count = text.partition(":")
        try:
            kind = ContextKind(name)
        except ValueError:
            raise ConfigError(
                f"unknown context strategy {text!r}; use none, current, distant or concat:K"
            ) from None
        if kind is ContextKind.CONCAT:
            try:
                return cls(kind, int(count))
            except ValueError:
                raise ConfigError(f"bad caption count in {text!r}") from None
        if count:
            raise ConfigError(f"{name} context takes no caption count")
        return cls(kind)


@dataclass(frozen=True)
class PipelineConfig:
    n_frames: int = 64
    context_strategy: ContextStrategy = field(default_factory=ContextStrategy)
    caption_mode: CaptionMode = CaptionMode.QUESTION_AWARE
    captions_only: bool = False
    aggregation: AggregationSpec = field(default_factory=AggregationSpec)
    backend: BackendDescriptor = field(default_factory=BackendDescriptor)
    concurrency_limit: int = 8
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        ctx = self.context_strategy
        if ctx.kind is ContextKind.CONCAT and ctx.k > self.n_frames:
            raise ConfigError(f"cannot concatenate {ctx.k} captions from {self.n_frames} frames")
        if self.captions_only and ctx.kind is not ContextKind.CONCAT:
            raise ConfigError("captions_only requires a concat:K context strategy")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_frames": self.n_frames,
            "context_strategy": str(self.context_strategy),
            "caption_mode": self.caption_mode.value,
            "captions_only": self.captions_only,
            "aggregation": self.aggregation.to_dict(),
            "backend": self.backend.to_dict(),
            "concurrency_limit": self.concurrency_limit,
            "cache_dir": self.cache_dir,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "PipelineConfig":
        """Build a config from its JSON form.

        Relative ``cache_dir`` and backend ``script_path`` are resolved
        against ``base_dir`` (the config file's directory).
        """
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "context_strategy" in kwargs:
                kwargs["context_strategy"] = ContextStrategy.parse(kwargs["context_strategy"])
            if "caption_mode" in kwargs:
                kwargs["caption_mode"] = CaptionMode(kwargs["caption_mode"])
            if "aggregation" in kwargs:
                agg = kwargs["aggregation"]
                kwargs["aggregation"] = (
                    AggregationSpec.parse(agg) if isinstance(agg, str) else AggregationSpec.from_dict(agg)
                )
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        backend = dict(kwargs.get("backend") or {})
        if base_dir is not None:
            if backend.get("script_path"):
                backend["script_path"] = str(base_dir / backend["script_path"])
            if kwargs.get("cache_dir"):
                kwargs["cache_dir"] = str(base_dir / kwargs["cache_dir"])
        kwargs["backend"] = BackendDescriptor.from_dict(backend)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


@dataclass(frozen=True)
class CaptionRecord:
    video_id: str
    segment_index: int
    caption_mode: str
    prompt_hash: str
    model_id: str
    text: str

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class FileFrameSource:
    """Frames from disk: numbered image directories or ffmpeg decoding."""

    def __init__(self, decoder: Optional[str] = None):
        self.decoder = decoder

    def count(self, video: VideoRef) -> int:
        return count_frames(video, self.decoder)

    def extract(self, video: VideoRef, indices: Sequence[int]) -> list[FrameSample]:
        return extract_frames(video, indices, self.decoder)


def concat_positions(n: int, k: int) -> list[int]:
    """``k`` evenly spaced positions out of ``n`` (floor spacing)."""
    return [j * n // k for j in range(k)]


class Pipeline:
    def __init__(
        self,
        config: PipelineConfig,
        backend=None,
        frames=None,
        cache: Optional[CacheStore] = None,
    ):
        self.config = config
        self.backend = backend if backend is not None else make_backend(config.backend)
        self.frames = frames if frames is not None else FileFrameSource()
        if cache is None and config.cache_dir:
            cache = CacheStore(config.cache_dir)
        self.cache = cache

    def with_config(self, config: PipelineConfig) -> "Pipeline":
        """Same backend, frames and cache under another config."""
        return Pipeline(config, self.backend, self.frames, self.cache)

    # -- plumbing ----------------------------------------------------------

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        workers = min(self.config.concurrency_limit, len(items))
        if workers <= 1:
            return [fn(x) for x in items]
        pool_ = ThreadPoolExecutor(max_workers=workers)
        try:
            return list(pool_.map(fn, items))
        finally:
            pool_.shutdown(wait=True, cancel_futures=True)

    def _sample(self, video: VideoRef) -> list[FrameSample]:
        total = video.total_frames or self.frames.count(video)
        if total < 1:
            raise MissingFrameFile(video.id, f"no frames found at {video.source}")
        indices = core.sample_frame_indices(total, self.config.n_frames)
        return self.frames.extract(video, indices)

    def caption(self, item: QAItem, sample: FrameSample) -> str:
        prompt = build_caption_prompt(item.question, self.config.caption_mode)
        max_tokens = self.config.backend.max_caption_tokens
        model_id = self.backend.model_id
        key = cache_key("caption", item.video.id, sample.frame_index, prompt, model_id, max_tokens)
        if self.cache is not None:
            hit = self.cache.get("captions", key)
            if hit is not None:
                return hit["text"]
        text = self.backend.generate_caption(sample.image, prompt, max_tokens)
        if not text:
            log.warning("empty caption for %s frame %d", item.video.id, sample.frame_index)
        if self.cache is not None:
            record = CaptionRecord(
                item.video.id, sample.segment_index, self.config.caption_mode.value,
                prompt_hash(prompt), model_id, text,
            )
            self.cache.put("captions", key, record.to_dict())
        return text

    def score(
        self, item: QAItem, sample: Optional[FrameSample], prompt: str, tokens: OptionTokenSet
    ) -> TokenScoreMap:
        frame_index = sample.frame_index if sample is not None else None
        model_id = self.backend.model_id
        key = cache_key("score", item.video.id, frame_index, prompt, model_id, list(tokens.tokens))
        if self.cache is not None:
            hit = self.cache.get("scores", key)
            if hit is not None:
                return TokenScoreMap.from_dict(hit["scores"])
        image = sample.image if sample is not None else None
        scores = self.backend.score_first_token(image, prompt, tokens)
        if self.cache is not None:
            record = {
                "video_id": item.video.id,
                "frame_index": frame_index,
                "prompt_hash": prompt_hash(prompt),
                "model_id": model_id,
                "scores": scores.to_dict(),
            }
            self.cache.put("scores", key, record)
        return scores

    # -- entry points ------------------------------------------------------

    def run(self, item: QAItem) -> VideoDecision:
        if self.config.captions_only:
            return self.run_captions_only(item)
        return self.run_question(item)

    def run_question(self, item: QAItem) -> VideoDecision:
        cfg = self.config
        tokens = option_token_set(len(item.options))
        samples = self._sample(item.video)
        n = len(samples)
        strategy = cfg.context_strategy.kind
        if strategy is ContextKind.DISTANT and n == 1:
            log.info("one frame only: distant context disabled for %s", item.video.id)
            strategy = ContextKind.NONE

        captions: list[str] = []
        if strategy is not ContextKind.NONE:
            captions = self._map(lambda s: self.caption(item, s), samples)

        if strategy is ContextKind.CONCAT:
            chosen = [captions[p] for p in concat_positions(n, cfg.context_strategy.k)]
            anchor = samples[n // 2]
            prompt = build_concat_prompt(item.question, item.options, chosen, with_frame=True)
            raw = self.score(item, anchor, prompt, tokens)
            frames = [
                frame_decision(
                    anchor.segment_index, raw, cfg.aggregation.normalization,
                    frame_index=anchor.frame_index, context="\n".join(chosen),
                )
            ]
            return pool(frames, cfg.aggregation, tokens.abstention_token)

        def one_frame(sample: FrameSample):
            i = sample.segment_index
            context = None
            specifier: Optional[TemporalSpecifier] = None
            if strategy is ContextKind.DISTANT:
                specifier = core.temporal_specifier(i, n)
                context = (captions[core.distant_index(i, n)], specifier)
            elif strategy is ContextKind.CURRENT:
                context = (captions[i], None)
            prompt = build_vqa_prompt(item.question, item.options, context)
            raw = self.score(item, sample, prompt, tokens)
            return frame_decision(
                i, raw, cfg.aggregation.normalization,
                frame_index=sample.frame_index,
                context=context[0] if context else None,
                specifier=specifier.value if specifier else None,
            )

        frames = self._map(one_frame, samples)
        return pool(frames, cfg.aggregation, tokens.abstention_token)

    def run_captions_only(self, item: QAItem) -> VideoDecision:
        """Text-only baseline: one imageless call over concatenated captions."""
        cfg = self.config
        if not cfg.captions_only:
            raise InvalidArgument("run_captions_only needs captions_only set in the config")
        tokens = option_token_set(len(item.options))
        samples = self._sample(item.video)
        captions = self._map(lambda s: self.caption(item, s), samples)
        chosen = [captions[p] for p in concat_positions(len(samples), cfg.context_strategy.k)]
        prompt = build_concat_prompt(item.question, item.options, chosen, with_frame=False)
        raw = self.score(item, None, prompt, tokens)
        frame = frame_decision(0, raw, cfg.aggregation.normalization, context="\n".join(chosen))
        return pool([frame], cfg.aggregation, tokens.abstention_token)


def run_question(item: QAItem, config: PipelineConfig, **kwargs) -> VideoDecision:
    return Pipeline(config, **kwargs).run_question(item)


def run_captions_only(item: QAItem, config: PipelineConfig, **kwargs) -> VideoDecision:
    return Pipeline(config, **kwargs).run_captions_only(item)
