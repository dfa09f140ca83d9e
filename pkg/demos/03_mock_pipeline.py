"""
Running one question without a model server
===========================================

The mock backend answers from a script keyed by prompt and image, and falls
back to neutral replies for anything unscripted. That is enough to watch the
pipeline's plumbing: which calls happen, and what the cache saves on a rerun.
"""

import tempfile
from pathlib import Path

from PIL import Image

from vidctx import Pipeline, PipelineConfig, QAItem, VideoRef
from vidctx.backend import make_mock_backend
from vidctx.pipeline import ContextStrategy

# a tiny "video": a directory of numbered JPEG frames
work = Path(tempfile.mkdtemp())
clip = work / "clip"
clip.mkdir()
for k in range(32):
    shade = int(255 * k / 31)
    Image.new("RGB", (64, 48), (shade, 80, 255 - shade)).save(clip / f"{k + 1:04d}.jpg")

item = QAItem(
    video=VideoRef("clip", str(clip)),
    question="What colour does the screen fade to?",
    options=("red", "green", "blue", "grey", "black"),
    answer_index=0,
)

# %%
mock = make_mock_backend()
cfg = PipelineConfig(n_frames=8, cache_dir=str(work / "cache"))
decision = Pipeline(cfg, backend=mock).run_question(item)
print("answer:", decision.winning_letter)
print("cold run: captions", mock.caption_calls, "scores", mock.score_calls)

for f in decision.per_frame[:2]:
    print(f"frame {f.frame_index}: context ({f.specifier}) = {f.context!r}")

# %%
mock.reset_counters()
Pipeline(cfg, backend=mock).run_question(item)
print("warm run: backend calls", mock.calls)

# %%
# Other context strategies trade captioning for scoring calls.
for ctx in ["none", "current", "concat:4"]:
    m = make_mock_backend()
    Pipeline(cfg.replace(context_strategy=ContextStrategy.parse(ctx), cache_dir=None),
             backend=m).run_question(item)
    print(f"{ctx:9s} captions {m.caption_calls:2d}  scores {m.score_calls:2d}")
