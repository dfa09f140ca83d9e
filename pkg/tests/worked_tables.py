"""Normalized option scores for three worked questions (two frames each, with and without context)."""

LETTERS = "ABCDEF"


def table(*values):
    return dict(zip(LETTERS, values))


# question -> {"no_context": {frame: scores}, "vidctx": {frame: scores}}
WORKED = {
    "dog": {
        "question": "What did the white dog do after he looked up?",
        "options": ["hit cans", "yelow toy", "walking", "get up", "smells the black dog"],
        "no_context": {
            20: table(0.14, 0.23, 0.18, 0.22, 0.18, 0.02),
            52: table(0.14, 0.22, 0.19, 0.20, 0.20, 0.03),
        },
        "vidctx": {
            20: table(0.11, 0.14, 0.11, 0.53, 0.03, -0.06),
            52: table(0.12, 0.15, 0.13, 0.32, 0.16, -0.09),
        },
    },
    "cat": {
        "question": "Why does the cat suddenly move back at the start of the video?",
        "options": [
            "waiting for owner", "saw the person", "attracted towards bubble",
            "face got wet", "clean itself",
        ],
        "no_context": {
            7: table(0.20, 0.20, 0.30, 0.24, 0.03, 0.0),
            39: table(0.20, 0.19, 0.25, 0.29, 0.04, 0.0),
        },
        "vidctx": {
            7: table(0.17, 0.17, 0.19, 0.20, 0.09, 0.15),
            39: table(0.18, 0.17, 0.13, 0.44, 0.04, -0.01),
        },
    },
    "bags": {
        "question": "How many bags is the man in black carrying?",
        "options": ["five", "two", "three", "one", "four"],
        "no_context": {
            25: table(0.19, 0.24, 0.15, 0.34, 0.01, 0.01),
            57: table(0.19, 0.26, 0.22, 0.24, 0.06, 0.0),
        },
        "vidctx": {
            25: table(0.15, 0.45, 0.18, 0.12, 0.03, -0.03),
            57: table(0.17, 0.21, 0.15, 0.39, 0.03, -0.03),
        },
    },
}
