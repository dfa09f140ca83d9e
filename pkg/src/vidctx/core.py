"""Domain types and the index arithmetic of the frame pipeline.

Frames are addressed 0-based throughout.  A video with ``total_frames``
decoded frames is split into ``n`` equal half-open segments and the
central frame of each segment is sampled.  Every sampled frame ``i`` is
paired with the frame half a video away, ``(i + n // 2) % n``, whose
caption is injected as context together with a temporal specifier.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidArgument


@dataclass(frozen=True)
class VideoRef:
    """A video known to the pipeline.

    ``source`` is either a video file or a directory of numbered frame
    images.  ``total_frames`` may be 0 at load time when the annotation
    file does not carry a frame count; the pipeline resolves it before
    sampling.
    """

    id: str
    source: str
    total_frames: int = 0

    def __post_init__(self):
        if not self.id:
            raise InvalidArgument("video id must be non-empty")
        if self.total_frames < 0:
            raise InvalidArgument(f"total_frames must be >= 0, got {self.total_frames}")


@dataclass(frozen=True)
class FrameSample:
    segment_index: int
    frame_index: int
    image: bytes = field(repr=False)


@dataclass(frozen=True)
class QAItem:
    video: VideoRef
    question: str
    options: tuple[str, ...]
    answer_index: Optional[int] = None
    category: str = ""
    qid: str = ""

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise InvalidArgument("a question needs at least one option")
        if self.answer_index is not None and not 0 <= self.answer_index < len(self.options):
            raise InvalidArgument(
                f"answer_index {self.answer_index} outside [0, {len(self.options)})"
            )


class TemporalSpecifier(enum.Enum):
    EARLIER = "earlier"
    LATER = "later"


def sample_frame_indices(total_frames: int, n_segments: int) -> list[int]:
    """Central frame of each of ``n_segments`` equal segments.

    Segment ``j`` covers ``[j*F/N, (j+1)*F/N)``; its midpoint under floor
    division is ``(2j+1)*F // (2N)``.  When there are fewer frames than
    segments, neighbouring segments may share a frame.

    >>> sample_frame_indices(640, 4)
    [80, 240, 400, 560]
    """
    if total_frames < 1:
        raise InvalidArgument(f"total_frames must be >= 1, got {total_frames}")
    if n_segments < 1:
        raise InvalidArgument(f"n_segments must be >= 1, got {n_segments}")
    return [(2 * j + 1) * total_frames // (2 * n_segments) for j in range(n_segments)]


def distant_index(i: int, n: int) -> int:
    """Segment half the video away from ``i``, wrapping around."""
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    if not 0 <= i < n:
        raise InvalidArgument(f"segment index {i} outside [0, {n})")
    return (i + n // 2) % n


def temporal_specifier(i: int, n: int) -> TemporalSpecifier:
    r = distant_index(i, n)
    if r == i:
        raise InvalidArgument(f"segment {i} of {n} has no distinct distant frame")
    return TemporalSpecifier.LATER if r > i else TemporalSpecifier.EARLIER
