"""
Which frames get looked at, and who talks to whom
=================================================

A video is cut into N equal segments and the middle frame of each one is
kept. Every kept frame is then paired with the frame half a video away,
whose caption becomes its context.
"""

import numpy as np

from vidctx import distant_index, sample_frame_indices, temporal_specifier

# a 30 fps clip of about 21 seconds
total_frames = 640
n = 8

idx = sample_frame_indices(total_frames, n)
print("sampled frames:", idx)

# the same thing with numpy, as a sanity check
j = np.arange(n)
print("numpy midpoints:", ((2 * j + 1) * total_frames) // (2 * n))

# %%
# Pairing. Segment i borrows the caption of segment (i + n/2) mod n.
for i in range(n):
    r = distant_index(i, n)
    print(f"segment {i} (frame {idx[i]:3d}) <- segment {r} (frame {idx[r]:3d}), "
          f"context happens {temporal_specifier(i, n).value}")

# %%
# Applying the pairing twice brings you home.
pairs = np.array([distant_index(i, n) for i in range(n)])
print("involution holds:", np.array_equal(pairs[pairs], np.arange(n)))
