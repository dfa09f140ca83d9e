"""Training-free video question answering with per-frame context captions."""

from .aggregate import (
    PRESETS,
    AggregationSpec,
    FrameDecision,
    Normalization,
    Pooling,
    VideoDecision,
    decide,
    normalize,
    pool,
)
from .backend import (
    BackendDescriptor,
    BackendKind,
    MockBackend,
    MockEntry,
    RemoteBackend,
    ScoreSource,
    TokenScoreMap,
    make_backend,
    make_mock_backend,
)
from .cache import CacheStore, cache_key
from .core import (
    FrameSample,
    QAItem,
    TemporalSpecifier,
    VideoRef,
    distant_index,
    sample_frame_indices,
    temporal_specifier,
)
from .datasets import (
    DatasetDescriptor,
    DatasetKind,
    EvalRecord,
    extract_frames,
    load_dataset,
    score_report,
)
from .pipeline import (
    ContextKind,
    ContextStrategy,
    Pipeline,
    PipelineConfig,
    run_captions_only,
    run_question,
)
from .prompts import (
    CaptionMode,
    OptionTokenSet,
    build_caption_prompt,
    build_concat_prompt,
    build_vqa_prompt,
    option_token_set,
)

__version__ = "0.1.0"
