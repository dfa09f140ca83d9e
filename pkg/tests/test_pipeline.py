import json

import pytest

from helpers import SyntheticFrames, digest
from oracles import reference_decide
from vidctx.aggregate import PRESETS
from vidctx.backend import MockEntry, TransportError, make_mock_backend
from vidctx.cache import CacheStore
from vidctx.core import QAItem, VideoRef, distant_index, sample_frame_indices, temporal_specifier
from vidctx.errors import ConfigError, FrameExtractionError, InvalidArgument
from vidctx.pipeline import (
    ContextKind,
    ContextStrategy,
    Pipeline,
    PipelineConfig,
    concat_positions,
    run_question,
)
from vidctx.prompts import CaptionMode, prompt_hash, build_caption_prompt, build_concat_prompt, build_vqa_prompt

LETTERS = "ABCDEF"
NEAR = [-1.80, -1.79, -1.78, -1.77, -1.81, -1.82]
HOT = [-3.0, -0.05, -3.0, -3.0, -3.0, -3.0]


def config(n=8, context="distant", **kw):
    return PipelineConfig(n_frames=n, context_strategy=ContextStrategy.parse(context), **kw)


def frame_script(video_id, total, n, rows):
    """Per-frame planted scores keyed by image digest (any prompt)."""
    idx = sample_frame_indices(total, n)
    return {
        (None, digest(SyntheticFrames.payload(video_id, i))): MockEntry(scores=dict(zip(LETTERS, rows[j])))
        for j, i in enumerate(idx)
    }


def test_scripted_hot_frame_wins(item, frames):
    rows = [NEAR] * 3 + [HOT] + [NEAR] * 4
    mock = make_mock_backend(frame_script("vid1", 640, 8, rows))
    decision = Pipeline(config(), backend=mock, frames=frames).run_question(item)
    assert decision.winning_letter == reference_decide(rows, LETTERS, "F", "l1", "max") == "B"
    assert [f.segment_index for f in decision.per_frame] == list(range(8))
    assert [f.frame_index for f in decision.per_frame] == sample_frame_indices(640, 8)


def test_single_frame_no_context(item, frames):
    mock = make_mock_backend(frame_script("vid1", 640, 1, [NEAR]))
    decision = Pipeline(config(1, "none"), backend=mock, frames=frames).run_question(item)
    assert decision.winning_letter == "D"
    assert mock.caption_calls == 0 and mock.score_calls == 1


def test_single_frame_distant_disables_context(item, frames):
    mock = make_mock_backend()
    decision = Pipeline(config(1, "distant"), backend=mock, frames=frames).run_question(item)
    assert mock.caption_calls == 0 and mock.score_calls == 1
    assert decision.per_frame[0].context is None
    assert mock.history[0][1] == build_vqa_prompt(item.question, item.options)


def test_distant_context_pairing(item, frames):
    n = 8
    idx = sample_frame_indices(640, n)
    cap_prompt = build_caption_prompt(item.question)
    script = {
        (None, digest(SyntheticFrames.payload("vid1", i))): MockEntry(caption=f"caption of segment {j}")
        for j, i in enumerate(idx)
    }
    mock = make_mock_backend(script)
    decision = Pipeline(config(n), backend=mock, frames=frames).run_question(item)
    sent = {d: p for kind, p, d in mock.history if kind == "score"}
    for j, i in enumerate(idx):
        r = distant_index(j, n)
        spec = temporal_specifier(j, n)
        want = build_vqa_prompt(item.question, item.options, (f"caption of segment {r}", spec))
        assert sent[digest(SyntheticFrames.payload("vid1", i))] == want
        frame = decision.per_frame[j]
        assert frame.context == f"caption of segment {r}" and frame.specifier == spec.value
    caption_prompts = {p for kind, p, _ in mock.history if kind == "caption"}
    assert caption_prompts == {cap_prompt}


def test_current_caption_and_static_mode(item, frames):
    mock = make_mock_backend()
    cfg = config(4, "current", caption_mode=CaptionMode.STATIC)
    decision = Pipeline(cfg, backend=mock, frames=frames).run_question(item)
    assert {p for k, p, _ in mock.history if k == "caption"} == {build_caption_prompt("", CaptionMode.STATIC)}
    for f in decision.per_frame:
        assert f.specifier is None and f.context.startswith("Placeholder caption")


@pytest.mark.parametrize(
    "context,captions,scores", [("distant", 8, 8), ("none", 0, 8), ("current", 8, 8), ("concat:4", 8, 1)]
)
def test_call_accounting_cold_then_warm(tmp_path, item, frames, context, captions, scores):
    mock = make_mock_backend()
    cfg = config(8, context, cache_dir=str(tmp_path))
    first = Pipeline(cfg, backend=mock, frames=frames).run_question(item)
    assert (mock.caption_calls, mock.score_calls) == (captions, scores)
    mock.reset_counters()
    second = Pipeline(cfg, backend=mock, frames=frames).run_question(item)
    assert mock.calls == 0
    assert second.to_dict() == first.to_dict()


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32])
def test_calls_linear_in_frames(item, frames, n):
    mock = make_mock_backend()
    Pipeline(config(n), backend=mock, frames=frames).run_question(item)
    assert mock.calls == (n + n if n > 1 else 1)


def test_concat_prompt_uses_evenly_spaced_captions(item, frames):
    n, k = 8, 4
    idx = sample_frame_indices(640, n)
    script = {
        (None, digest(SyntheticFrames.payload("vid1", i))): MockEntry(caption=f"c{j}")
        for j, i in enumerate(idx)
    }
    mock = make_mock_backend(script)
    decision = Pipeline(config(n, f"concat:{k}"), backend=mock, frames=frames).run_question(item)
    assert concat_positions(8, 4) == [0, 2, 4, 6]
    want = build_concat_prompt(item.question, item.options, ["c0", "c2", "c4", "c6"], with_frame=True)
    score_calls = [(p, d) for kind, p, d in mock.history if kind == "score"]
    assert score_calls == [(want, digest(SyntheticFrames.payload("vid1", idx[4])))]
    assert len(decision.per_frame) == 1


def test_captions_only_single_imageless_call(tmp_path, frames):
    item = QAItem(VideoRef("v32", "/x", 320), "What happens?", ("a", "b", "c", "d", "e"), 2)
    idx = sample_frame_indices(320, 32)
    script = {
        (None, digest(SyntheticFrames.payload("v32", i))): MockEntry(caption=f"caption {j}")
        for j, i in enumerate(idx)
    }
    prompt = build_concat_prompt(item.question, item.options, [f"caption {j}" for j in range(32)])
    script[(prompt_hash(prompt), "")] = MockEntry(
        scores={"A": -3.0, "B": -2.0, "C": -0.1, "D": -2.5, "E": -3.0, "F": -1.0}
    )
    mock = make_mock_backend(script)
    cfg = config(32, "concat:32", captions_only=True, cache_dir=str(tmp_path))
    decision = Pipeline(cfg, backend=mock, frames=frames).run(item)
    assert decision.winning_letter == "C"
    assert mock.caption_calls == 32 and mock.score_calls == 1
    assert mock.history[-1] == ("score", prompt, "")
    mock.reset_counters()
    again = Pipeline(cfg, backend=mock, frames=frames).run_captions_only(item)
    assert mock.calls == 0 and again.to_dict() == decision.to_dict()


def test_captions_only_requires_flag(item, frames):
    with pytest.raises(InvalidArgument):
        Pipeline(config(4, "concat:2"), backend=make_mock_backend(), frames=frames).run_captions_only(item)


def test_concurrency_does_not_change_result(item, frames):
    rows = [[-1.0 - 0.1 * ((j * 7 + t) % 5) for t in range(6)] for j in range(16)]
    script = frame_script("vid1", 640, 16, rows)
    results = []
    for limit in (1, 16):
        mock = make_mock_backend(script)
        cfg = config(16, concurrency_limit=limit)
        results.append(json.dumps(Pipeline(cfg, backend=mock, frames=frames).run_question(item).to_dict()))
    assert results[0] == results[1]


class Flaky:
    def __init__(self, fail_on):
        self.inner = make_mock_backend()
        self.model_id = "mock"
        self.fail_on = fail_on

    def generate_caption(self, image, prompt, max_tokens=None):
        return self.inner.generate_caption(image, prompt, max_tokens)

    def score_first_token(self, image, prompt, tokens):
        if self.inner.score_calls == self.fail_on:
            self.inner.score_calls += 1
            raise TransportError("boom")
        return self.inner.score_first_token(image, prompt, tokens)


def test_backend_failure_fails_question(item, frames):
    with pytest.raises(TransportError):
        Pipeline(config(8, concurrency_limit=1), backend=Flaky(3), frames=frames).run_question(item)


def test_extraction_failure_names_video(item):
    with pytest.raises(FrameExtractionError, match="vid1"):
        Pipeline(config(4), backend=make_mock_backend()).run_question(item)


def test_unknown_frame_count_is_resolved(frames):
    item = QAItem(VideoRef("v", "/x"), "q?", ("a", "b"), 0)
    decision = Pipeline(config(4, "none"), backend=make_mock_backend(), frames=frames).run_question(item)
    assert [f.frame_index for f in decision.per_frame] == sample_frame_indices(100, 4)


def test_run_question_function(item, frames):
    d = run_question(item, config(2, "none"), backend=make_mock_backend(), frames=frames)
    assert d.spec == PRESETS["l1max"]


def test_four_option_questions_use_e_for_abstention(frames):
    item = QAItem(VideoRef("s", "/x", 50), "q?", ("a", "b", "c", "d"), 1)
    mock = make_mock_backend()
    d = Pipeline(config(2), backend=mock, frames=frames).run_question(item)
    assert d.abstention_letter == "E" and set(d.per_frame[0].raw) == set("ABCDE")


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_frames=0),
        dict(n_frames=4, context_strategy=ContextStrategy(ContextKind.CONCAT, 8)),
        dict(captions_only=True),
        dict(concurrency_limit=0),
    ],
)
def test_config_invariants(kw):
    with pytest.raises(ConfigError):
        PipelineConfig(**kw)


@pytest.mark.parametrize("text", ["bogus", "concat", "concat:x", "none:3"])
def test_context_parse_errors(text):
    with pytest.raises(ConfigError):
        ContextStrategy.parse(text)


def test_config_json_round_trip(tmp_path):
    cfg = config(32, "concat:16", caption_mode=CaptionMode.STATIC, aggregation=PRESETS["vote"])
    again = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n_frames": 4, "aggregation": "softmaxmean", "cache_dir": "c",
                                "backend": {"kind": "mock", "script_path": "s.json"}}))
    loaded = PipelineConfig.from_json(path)
    assert loaded.aggregation == PRESETS["softmaxmean"]
    assert loaded.cache_dir == str(tmp_path / "c")
    assert loaded.backend.script_path == str(tmp_path / "s.json")
    assert PipelineConfig().n_frames == 64
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"frames": 3})
    with pytest.raises(ConfigError, match="nope.json"):
        PipelineConfig.from_json(tmp_path / "nope.json")


def test_cache_shared_between_variants(tmp_path, item, frames):
    mock = make_mock_backend()
    store = CacheStore(tmp_path)
    Pipeline(config(8, "distant"), backend=mock, frames=frames, cache=store).run_question(item)
    mock.reset_counters()
    # captions are reused by the current-caption variant; only its prompts are new
    Pipeline(config(8, "current"), backend=mock, frames=frames, cache=store).run_question(item)
    assert mock.caption_calls == 0 and mock.score_calls == 8
