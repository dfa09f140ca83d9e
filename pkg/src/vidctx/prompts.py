"""Byte-stable rendering of the captioning and answer-selection prompts."""

from __future__ import annotations

import enum
import hashlib
import string
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import TemporalSpecifier
from .errors import InvalidArgument

MAX_OPTIONS = 5

CAPTION_QAWARE = (
    "Please provide a short description of the image, giving information "
    "related to the following question: {question}"
)
CAPTION_STATIC = "Please provide a short description of the image."

DISTANT_CONTEXT = "Here is what happens {specifier} in the video: {caption}"
CURRENT_CONTEXT = "Here is a description of the video frame: {caption}"
ABSTAIN_TEXT = "No Answer."

CLOSING_WITH_CAPTION = (
    "Considering the information presented in the caption and the video frame, "
    "select the correct answer in one letter from the options ({letters})."
)
CLOSING_FRAME_ONLY = (
    "Considering the video frame, "
    "select the correct answer in one letter from the options ({letters})."
)
CLOSING_CAPTIONS = (
    "Considering the information presented in the captions, "
    "select the correct answer in one letter from the options ({letters})."
)
CLOSING_CAPTIONS_AND_FRAME = (
    "Considering the information presented in the captions and the video frame, "
    "select the correct answer in one letter from the options ({letters})."
)
CONCAT_HEADER = "Here is what happens in the video:"


class CaptionMode(enum.Enum):
    QUESTION_AWARE = "qaware"
    STATIC = "static"


@dataclass(frozen=True)
class OptionTokenSet:
    """Answer letters plus the trailing abstention letter."""

    tokens: tuple[str, ...]

    @property
    def abstention_token(self) -> str:
        return self.tokens[-1]

    @property
    def answer_tokens(self) -> tuple[str, ...]:
        return self.tokens[:-1]

    def index_of(self, letter: str) -> int:
        return self.tokens.index(letter)


def option_token_set(num_options: int) -> OptionTokenSet:
    if not 1 <= num_options <= MAX_OPTIONS:
        raise InvalidArgument(f"need 1..{MAX_OPTIONS} options, got {num_options}")
    return OptionTokenSet(tuple(string.ascii_uppercase[: num_options + 1]))


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def build_caption_prompt(question: str, mode: CaptionMode = CaptionMode.QUESTION_AWARE) -> str:
    if mode is CaptionMode.STATIC:
        return CAPTION_STATIC
    if not question:
        raise InvalidArgument("question-aware captioning needs a question")
    return CAPTION_QAWARE.format(question=question)


def _question_block(question: str, options: Sequence[str]) -> tuple[str, OptionTokenSet]:
    if not options or len(options) > MAX_OPTIONS:
        raise InvalidArgument(f"need 1..{MAX_OPTIONS} options, got {len(options)}")
    tokens = option_token_set(len(options))
    parts = [f"Question: {question}"]
    parts += [f"Option {letter}: {text}" for letter, text in zip(tokens.tokens, options)]
    parts.append(f"Option {tokens.abstention_token}: {ABSTAIN_TEXT}")
    return " ".join(parts), tokens


def build_vqa_prompt(
    question: str,
    options: Sequence[str],
    context: Optional[tuple[str, Optional[TemporalSpecifier]]] = None,
) -> str:
    """Prompt asking for one answer letter about a single frame.

    ``context`` is ``(caption, specifier)``.  A specifier renders the
    distant-frame sentence ("what happens earlier/later"); ``None`` as the
    specifier renders the same-frame description sentence.  Without any
    context the caption sentence and its mention in the closing line are
    dropped.
    """
    block, tokens = _question_block(question, options)
    letters = ",".join(tokens.tokens)
    if context is None:
        return f"{block}\n{CLOSING_FRAME_ONLY.format(letters=letters)}"
    caption, specifier = context
    if specifier is None:
        lead = CURRENT_CONTEXT.format(caption=caption)
    else:
        lead = DISTANT_CONTEXT.format(specifier=specifier.value, caption=caption)
    return f"{lead}\n{block}\n{CLOSING_WITH_CAPTION.format(letters=letters)}"


def build_concat_prompt(
    question: str,
    options: Sequence[str],
    captions: Sequence[str],
    with_frame: bool = False,
) -> str:
    """One prompt carrying many captions, numbered 1.. in temporal order."""
    if not captions:
        raise InvalidArgument("concatenated prompt needs at least one caption")
    block, tokens = _question_block(question, options)
    letters = ",".join(tokens.tokens)
    closing = CLOSING_CAPTIONS_AND_FRAME if with_frame else CLOSING_CAPTIONS
    lines = [CONCAT_HEADER]
    lines += [f"Frame {k}: {caption}" for k, caption in enumerate(captions, start=1)]
    lines.append(block)
    lines.append(closing.format(letters=letters))
    return "\n".join(lines)
