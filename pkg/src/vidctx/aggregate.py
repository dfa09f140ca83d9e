"""Frame-level score normalization and video-level pooling.

The default decision normalizes each frame's raw option scores by the sum
of their absolute values (abstention letter included), takes the maximum
of every answer letter across frames, and returns the best answer letter.
The abstention letter only ever contributes to the normalizer.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .errors import InvalidArgument


class Normalization(enum.Enum):
    NONE = "none"
    L1 = "l1"
    SOFTMAX = "softmax"


class Pooling(enum.Enum):
    MAX = "max"
    MEAN = "mean"
    VOTE = "vote"


@dataclass(frozen=True)
class AggregationSpec:
    normalization: Normalization = Normalization.L1
    pooling: Pooling = Pooling.MAX

    @property
    def name(self) -> str:
        for name, spec in PRESETS.items():
            if spec == self:
                return name
        return f"{self.normalization.value}+{self.pooling.value}"

    @classmethod
    def parse(cls, text: str) -> "AggregationSpec":
        """Accept a preset name (``l1max``) or ``<normalization>+<pooling>``."""
        if text in PRESETS:
            return PRESETS[text]
        norm, sep, pool = text.partition("+")
        try:
            if sep:
                return cls(Normalization(norm), Pooling(pool))
        except ValueError:
            pass
        raise InvalidArgument(f"unknown aggregation {text!r}; presets: {', '.join(PRESETS)}")

    def to_dict(self) -> dict[str, str]:
        return {"normalization": self.normalization.value, "pooling": self.pooling.value}

    @classmethod
    def from_dict(cls, data: Mapping[str, str]) -> "AggregationSpec":
        return cls(Normalization(data["normalization"]), Pooling(data["pooling"]))


# The six variants compared in the aggregation ablation.
PRESETS: dict[str, AggregationSpec] = {
    "vote": AggregationSpec(Normalization.NONE, Pooling.VOTE),
    "mean": AggregationSpec(Normalization.NONE, Pooling.MEAN),
    "max": AggregationSpec(Normalization.NONE, Pooling.MAX),
    "softmaxmean": AggregationSpec(Normalization.SOFTMAX, Pooling.MEAN),
    "softmaxmax": AggregationSpec(Normalization.SOFTMAX, Pooling.MAX),
    "l1max": AggregationSpec(Normalization.L1, Pooling.MAX),
}


@dataclass
class FrameDecision:
    """Scores of one frame.  The optional fields carry pipeline evidence."""

    segment_index: int
    raw: dict[str, float]
    normalized: dict[str, float]
    degenerate: bool = False
    frame_index: Optional[int] = None
    context: Optional[str] = None
    specifier: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_index": self.segment_index,
            "frame_index": self.frame_index,
            "raw": self.raw,
            "normalized": self.normalized,
            "degenerate": self.degenerate,
            "context": self.context,
            "specifier": self.specifier,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FrameDecision":
        return cls(
            segment_index=data["segment_index"],
            raw=dict(data["raw"]),
            normalized=dict(data["normalized"]),
            degenerate=data.get("degenerate", False),
            frame_index=data.get("frame_index"),
            context=data.get("context"),
            specifier=data.get("specifier"),
        )


@dataclass
class VideoDecision:
    answer_index: int
    winning_letter: str
    per_frame: list[FrameDecision]
    spec: AggregationSpec
    abstention_letter: str
    # video-level score per answer letter (vote counts under voting)
    pooled: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer_index": self.answer_index,
            "winning_letter": self.winning_letter,
            "abstention_letter": self.abstention_letter,
            "spec": self.spec.to_dict(),
            "pooled": self.pooled,
            "per_frame": [f.to_dict() for f in self.per_frame],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VideoDecision":
        return cls(
            answer_index=data["answer_index"],
            winning_letter=data["winning_letter"],
            per_frame=[FrameDecision.from_dict(f) for f in data["per_frame"]],
            spec=AggregationSpec.from_dict(data["spec"]),
            abstention_letter=data["abstention_letter"],
            pooled=dict(data.get("pooled", {})),
        )


def _scores(raw) -> dict[str, float]:
    return dict(raw.scores) if hasattr(raw, "scores") else dict(raw)


def l1_is_degenerate(raw) -> bool:
    return all(v == 0 for v in _scores(raw).values())


def normalize(raw, method: Normalization) -> dict[str, float]:
    """Normalize one frame's scores over all of its letters.

    An all-zero map under L1 has no scale and comes back uniform.
    """
    scores = _scores(raw)
    if not scores:
        raise InvalidArgument("cannot normalize an empty score map")
    if any(not math.isfinite(v) for v in scores.values()):
        raise InvalidArgument("scores must be finite")
    if method is Normalization.NONE:
        return scores
    if method is Normalization.L1:
        total = math.fsum(abs(v) for v in scores.values())
        if total == 0:
            return {k: 1.0 / len(scores) for k in scores}
        return {k: v / total for k, v in scores.items()}
    top = max(scores.values())
    exps = {k: math.exp(v - top) for k, v in scores.items()}
    total = math.fsum(exps.values())
    return {k: v / total for k, v in exps.items()}


def _argmax(values: Mapping[str, float], letters: Sequence[str]) -> str:
    # letters arrive sorted, and a strict comparison keeps the lowest letter on ties
    best = letters[0]
    for letter in letters[1:]:
        if values[letter] > values[best]:
            best = letter
    return best


def pool(
    frames: Sequence[FrameDecision], spec: AggregationSpec, abstention_letter: str
) -> VideoDecision:
    if not frames:
        raise InvalidArgument("cannot pool an empty frame list")
    keys = set(frames[0].normalized)
    for frame in frames[1:]:
        if set(frame.normalized) != keys:
            raise InvalidArgument(
                f"frame {frame.segment_index} has letters {sorted(frame.normalized)}, "
                f"expected {sorted(keys)}"
            )
    if abstention_letter not in keys:
        raise InvalidArgument(f"abstention letter {abstention_letter!r} missing from scores")
    letters = sorted(keys - {abstention_letter})
    if not letters:
        raise InvalidArgument("no answer letters besides the abstention letter")

    if spec.pooling is Pooling.MAX:
        pooled = {t: max(f.normalized[t] for f in frames) for t in letters}
    elif spec.pooling is Pooling.MEAN:
        pooled = {t: math.fsum(f.normalized[t] for f in frames) / len(frames) for t in letters}
    else:
        votes = Counter(_argmax(f.normalized, letters) for f in frames)
        pooled = {t: float(votes[t]) for t in letters}
    winner = _argmax(pooled, letters)
    return VideoDecision(
        answer_index=ord(winner) - ord("A"),
        winning_letter=winner,
        per_frame=list(frames),
        spec=spec,
        abstention_letter=abstention_letter,
        pooled=pooled,
    )


def frame_decision(segment_index: int, raw, method: Normalization, **evidence) -> FrameDecision:
    scores = _scores(raw)
    return FrameDecision(
        segment_index=segment_index,
        raw=scores,
        normalized=normalize(scores, method),
        degenerate=method is Normalization.L1 and l1_is_degenerate(scores),
        **evidence,
    )


def decide(raw_frames, spec: AggregationSpec, abstention_letter: str) -> VideoDecision:
    """Normalize every ``(segment_index, scores)`` pair and pool them."""
    frames = [frame_decision(i, raw, spec.normalization) for i, raw in raw_frames]
    return pool(frames, spec, abstention_letter)


def redecide(decision: VideoDecision, spec: AggregationSpec) -> VideoDecision:
    """Re-aggregate stored raw frame scores under another spec, keeping evidence."""
    frames = [
        FrameDecision(
            segment_index=f.segment_index,
            raw=dict(f.raw),
            normalized=normalize(f.raw, spec.normalization),
            degenerate=spec.normalization is Normalization.L1 and l1_is_degenerate(f.raw),
            frame_index=f.frame_index,
            context=f.context,
            specifier=f.specifier,
        )
        for f in decision.per_frame
    ]
    return pool(frames, spec, decision.abstention_letter)
