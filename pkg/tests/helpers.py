import hashlib

from vidctx.core import FrameSample


class SyntheticFrames:
    """Frame source producing distinct fake payloads per (video, frame)."""

    def __init__(self, total=100):
        self.total = total
        self.extract_calls = 0

    @staticmethod
    def payload(video_id, frame_index):
        return f"frame:{video_id}:{frame_index}".encode()

    def count(self, video):
        return self.total

    def extract(self, video, indices):
        self.extract_calls += 1
        return [FrameSample(j, i, self.payload(video.id, i)) for j, i in enumerate(indices)]


def digest(data):
    return hashlib.sha256(data).hexdigest()


LETTERS = "ABCDE"
FRAMES_PER_VIDEO = 8

# (category, gold index, scripted prediction index): 3/4 CW, 2/4 TN, 4/4 DC
TWELVE = [
    ("CW", 0, 0), ("CW", 1, 1), ("CW", 2, 2), ("CW", 3, 0),
    ("TN", 4, 4), ("TN", 0, 0), ("TN", 1, 3), ("TN", 2, 4),
    ("DC", 3, 3), ("DC", 4, 4), ("DC", 0, 0), ("DC", 1, 1),
]


def build_fixture(root, plan=TWELVE, n_frames=4):
    """Write a NExT-QA-style dataset, frame directories, mock script and config.

    Each question gets its own video; one sampled frame of that video is
    scripted to favour the planned prediction and every other call is
    unscripted (uniform scores).
    """
    import json
    from pathlib import Path

    from vidctx.core import sample_frame_indices

    root = Path(root)
    videos = root / "videos"
    rows = ["video,frame_count,question,answer,qid,type,a0,a1,a2,a3,a4"]
    script = []
    hot = sample_frame_indices(FRAMES_PER_VIDEO, n_frames)[n_frames // 2]
    for q, (category, gold, predicted) in enumerate(plan):
        vid = f"vid{q:02d}"
        d = videos / vid
        d.mkdir(parents=True, exist_ok=True)
        for k in range(FRAMES_PER_VIDEO):
            (d / f"{k + 1:04d}.jpg").write_bytes(f"\xff\xd8{vid}-frame-{k}".encode())
        options = [f"answer {c} to question {q}" for c in LETTERS]
        rows.append(f"{vid},{FRAMES_PER_VIDEO},what happens in video {q},{gold},q{q},{category}," + ",".join(options))
        scores = {t: -3.0 for t in "ABCDEF"}
        scores[LETTERS[predicted]] = -0.05
        script.append({"image_file": f"videos/{vid}/{hot + 1:04d}.jpg", "scores": scores})
    (root / "val.csv").write_text("\n".join(rows) + "\n")
    (root / "script.json").write_text(json.dumps(script, indent=1))
    (root / "config.json").write_text(json.dumps({
        "n_frames": n_frames,
        "context_strategy": "distant",
        "concurrency_limit": 2,
        "cache_dir": "cache",
        "backend": {"kind": "mock", "script_path": "script.json"},
    }))
    (root / "dataset.json").write_text(json.dumps({
        "kind": "nextqa", "annotation_path": "val.csv", "video_root": "videos",
    }))
    return root
