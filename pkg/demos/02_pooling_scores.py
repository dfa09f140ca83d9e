"""
From per-frame letter scores to one answer
==========================================

Each frame yields a score per option letter. Those are normalized, pooled
across frames, and the best letter wins. The abstention letter can absorb
probability mass inside a frame, but it never gets to be the answer.
"""

import numpy as np

from vidctx.aggregate import PRESETS, decide

letters = "ABCDEF"

# "What did the white dog do after he looked up?"  (gold answer: D, get up)
no_context = {
    20: [0.14, 0.23, 0.18, 0.22, 0.18, 0.02],
    52: [0.14, 0.22, 0.19, 0.20, 0.20, 0.03],
}
with_context = {
    20: [0.11, 0.14, 0.11, 0.53, 0.03, -0.06],
    52: [0.12, 0.15, 0.13, 0.32, 0.16, -0.09],
}


def as_raw(table):
    return [(seg, dict(zip(letters, row))) for seg, row in table.items()]


# %%
# These tables are already normalized, so pool them with plain max.
for name, table in [("frame only", no_context), ("with distant caption", with_context)]:
    d = decide(as_raw(table), PRESETS["max"], "F")
    print(f"{name:22s} -> {d.winning_letter}")

# %%
# Now some raw first-token log-probabilities, as a server would return them.
rng = np.random.default_rng(7)
raw = -rng.uniform(0.05, 4.0, size=(6, 6))
raw[:, 5] = -0.01          # abstention is the favourite in every frame...
raw[2, 1] = -0.02          # ...but one frame is quite sure about B
print(np.round(raw, 2))

frames = [(i, dict(zip(letters, row))) for i, row in enumerate(raw)]
for name, spec in PRESETS.items():
    print(f"{name:12s} -> {decide(frames, spec, 'F').winning_letter}")
