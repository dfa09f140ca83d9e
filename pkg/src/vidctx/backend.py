"""Access to the multimodal model: captions and first-token option scores.

Two implementations share one duck-typed surface (``model_id``,
``generate_caption``, ``score_first_token``):

* :class:`RemoteBackend` talks to any OpenAI-compatible
  ``/chat/completions`` endpoint that returns top log-probabilities.
* :class:`MockBackend` replays a script keyed by prompt hash and image
  digest, and counts its calls.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

import httpx

from .errors import ConfigError, ProtocolError, TransportError
from .prompts import OptionTokenSet, prompt_hash

log = logging.getLogger(__name__)

API_KEY_ENV = "VIDCTX_API_KEY"
LOGPROB_FLOOR = -20.0
LOGIT_FLOOR_MARGIN = 10.0
RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


class ScoreSource(enum.Enum):
    LOGPROB = "logprob"
    LOGIT = "logit"


class BackendKind(enum.Enum):
    REMOTE = "remote"
    MOCK = "mock"


@dataclass(frozen=True)
class BackendDescriptor:
    kind: BackendKind = BackendKind.MOCK
    endpoint: Optional[str] = None
    model_id: str = "mock"
    max_caption_tokens: int = 200
    request_timeout: float = 120.0
    retry_limit: int = 3
    retry_backoff: float = 0.5
    max_in_flight: int = 8
    top_logprobs: int = 20
    score_source: ScoreSource = ScoreSource.LOGPROB
    # mock only: JSON script replayed by the mock backend
    script_path: Optional[str] = None

    def __post_init__(self):
        if self.max_caption_tokens < 1:
            raise ConfigError("max_caption_tokens must be >= 1")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.kind is BackendKind.REMOTE:
            if not self.endpoint:
                raise ConfigError("a remote backend needs an endpoint")
            try:
                url = httpx.URL(self.endpoint)
            except Exception as exc:
                raise ConfigError(f"malformed endpoint {self.endpoint!r}: {exc}") from exc
            if url.scheme not in ("http", "https") or not url.host:
                raise ConfigError(f"endpoint must be an http(s) URL, got {self.endpoint!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "endpoint": self.endpoint,
            "model_id": self.model_id,
            "max_caption_tokens": self.max_caption_tokens,
            "request_timeout": self.request_timeout,
            "retry_limit": self.retry_limit,
            "retry_backoff": self.retry_backoff,
            "max_in_flight": self.max_in_flight,
            "top_logprobs": self.top_logprobs,
            "score_source": self.score_source.value,
            "script_path": self.script_path,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BackendDescriptor":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown backend fields: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "kind" in kwargs:
                kwargs["kind"] = BackendKind(kwargs["kind"])
            if "score_source" in kwargs:
                kwargs["score_source"] = ScoreSource(kwargs["score_source"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kwargs)


@dataclass(frozen=True)
class TokenScoreMap:
    """Raw per-letter scores read at the first answer position.

    ``filled`` lists letters the server did not report, which were set to
    the floor score.
    """

    scores: dict[str, float]
    source: ScoreSource = ScoreSource.LOGPROB
    filled: tuple[str, ...] = ()

    def __getitem__(self, letter: str) -> float:
        return self.scores[letter]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scores": dict(self.scores),
            "source": self.source.value,
            "filled": list(self.filled),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TokenScoreMap":
        return cls(
            scores={k: float(v) for k, v in data["scores"].items()},
            source=ScoreSource(data.get("source", "logprob")),
            filled=tuple(data.get("filled", ())),
        )


def _finite(value: Any) -> Optional[float]:
    try:
        value = float(value)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


def clamp_scores(
    found: Mapping[str, float],
    token_set: OptionTokenSet,
    source: ScoreSource,
    observed: Optional[list[float]] = None,
) -> TokenScoreMap:
    """Build a complete, finite score map from whatever letters were seen.

    ``observed`` holds every finite value the server reported (letters or
    not); under logit scoring the floor sits ``LOGIT_FLOOR_MARGIN`` below its
    minimum.  Log-probabilities are clipped into ``[LOGPROB_FLOOR, 0]``.
    """
    seen = {k: v for k, v in ((k, _finite(v)) for k, v in found.items()) if v is not None}
    pool = [v for v in (observed or []) if _finite(v) is not None] + list(seen.values())
    if source is ScoreSource.LOGPROB:
        floor = LOGPROB_FLOOR
    elif pool:
        floor = min(pool) - LOGIT_FLOOR_MARGIN
    else:
        floor = -LOGIT_FLOOR_MARGIN
    scores: dict[str, float] = {}
    filled = []
    for letter in token_set.tokens:
        if letter in seen:
            value = seen[letter]
            if source is ScoreSource.LOGPROB:
                value = min(0.0, max(LOGPROB_FLOOR, value))
            scores[letter] = value
        else:
            scores[letter] = floor
            filled.append(letter)
    return TokenScoreMap(scores, source, tuple(filled))


def image_digest(image: Optional[bytes]) -> str:
    if image is None:
        return ""
    return hashlib.sha256(image).hexdigest()


def _mime_type(image: bytes) -> str:
    if image.startswith(b"\x89PNG"):
        return "image/png"
    if image[:4] == b"RIFF" and image[8:12] == b"WEBP":
        return "image/webp"
    if image.startswith(b"GIF8"):
        return "image/gif"
    return "image/jpeg"


def letter_scores_from_top(candidates: list[tuple[str, float]], token_set: OptionTokenSet):
    """Pick option letters out of a top-k list.

    A letter matches with or without one leading space; when both surface
    forms are present the higher score wins.
    """
    found: dict[str, float] = {}
    wanted = set(token_set.tokens)
    for token, value in candidates:
        value = _finite(value)
        if value is None:
            continue
        letter = token[1:] if token.startswith(" ") else token
        if letter in wanted and (letter not in found or value > found[letter]):
            found[letter] = value
    return found


def parse_top_logprobs(payload: Mapping[str, Any]) -> list[tuple[str, float]]:
    """Top-k (token, score) pairs of the first generated position.

    Understands the chat-completions layout and the legacy completions
    layout.  Raises :class:`ProtocolError` when neither is present.
    """
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise ProtocolError("response has no choices") from None
    logprobs = choice.get("logprobs") or {}
    pairs: list[tuple[str, float]] = []
    content = logprobs.get("content")
    if content:
        first = content[0]
        if "token" in first and "logprob" in first:
            pairs.append((first["token"], first["logprob"]))
        for entry in first.get("top_logprobs") or []:
            pairs.append((entry.get("token", ""), entry.get("logprob")))
    else:
        top = logprobs.get("top_logprobs")
        if top:
            pairs.extend(top[0].items())
    if not pairs:
        raise ProtocolError(
            "response carries no log-probability data; is the server started with logprobs enabled?"
        )
    return pairs


class RemoteBackend:
    """Client for an OpenAI-compatible vision chat endpoint.

    The client is shared across threads; ``max_in_flight`` caps concurrent
    requests.  Transport failures and retryable HTTP statuses are retried
    ``retry_limit`` times with exponential backoff.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        transport: Optional[httpx.BaseTransport] = None,
        api_key: Optional[str] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if descriptor.kind is not BackendKind.REMOTE:
            raise ConfigError("RemoteBackend needs a remote descriptor")
        self.descriptor = descriptor
        self.model_id = descriptor.model_id
        self._sleep = sleep
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(
            base_url=descriptor.endpoint.rstrip("/") + "/",
            headers=headers,
            timeout=descriptor.request_timeout,
            transport=transport,
        )
        self._gate = threading.BoundedSemaphore(descriptor.max_in_flight)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _messages(self, image: Optional[bytes], prompt: str) -> list[dict]:
        content: list[dict] = []
        if image is not None:
            data = base64.b64encode(image).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:{_mime_type(image)};base64,{data}"}}
            )
        content.append({"type": "text", "text": prompt})
        return [{"role": "user", "content": content}]

    def _post(self, body: dict) -> dict:
        attempts = self.descriptor.retry_limit + 1
        last: Optional[str] = None
        for attempt in range(attempts):
            try:
                with self._gate:
                    response = self._client.post("chat/completions", json=body)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code < 300:
                    try:
                        return response.json()
                    except json.JSONDecodeError as exc:
                        raise ProtocolError(f"response is not JSON: {exc}") from exc
                last = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code not in RETRY_STATUSES:
                    raise TransportError(last)
            if attempt + 1 < attempts:
                delay = self.descriptor.retry_backoff * 2**attempt
                log.warning("request failed (%s); retry %d in %.2fs", last, attempt + 1, delay)
                self._sleep(delay)
        raise TransportError(f"gave up after {attempts} attempts: {last}")

    def generate_caption(self, image: bytes, prompt: str, max_tokens: Optional[int] = None) -> str:
        body = {
            "model": self.model_id,
            "messages": self._messages(image, prompt),
            "max_tokens": max_tokens or self.descriptor.max_caption_tokens,
            "temperature": 0,
        }
        payload = self._post(body)
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError("caption response has no message content") from None
        text = (text or "").strip()
        if not text:
            log.warning("model returned an empty caption")
        return text

    def score_first_token(
        self, image: Optional[bytes], prompt: str, token_set: OptionTokenSet
    ) -> TokenScoreMap:
        body = {
            "model": self.model_id,
            "messages": self._messages(image, prompt),
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": self.descriptor.top_logprobs,
        }
        pairs = parse_top_logprobs(self._post(body))
        found = letter_scores_from_top(pairs, token_set)
        observed = [v for _, v in pairs if _finite(v) is not None]
        return clamp_scores(found, token_set, self.descriptor.score_source, observed)


@dataclass(frozen=True)
class MockEntry:
    caption: Optional[str] = None
    scores: Optional[Mapping[str, float]] = None


MockKey = tuple[Optional[str], Optional[str]]


@dataclass
class MockBackend:
    """Scripted stand-in for the model.

    Keys are ``(prompt_hash, image_digest)``; either part may be ``None`` to
    match anything.  Lookup tries the exact key, then the prompt-only key,
    then the image-only key.  Unscripted calls get a placeholder caption
    derived from the inputs and a uniform score map.
    """

    script: dict[MockKey, MockEntry] = field(default_factory=dict)
    model_id: str = "mock"
    score_source: ScoreSource = ScoreSource.LOGPROB
    calls: int = 0
    caption_calls: int = 0
    score_calls: int = 0
    history: list[tuple[str, str, str]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._lock = threading.Lock()

    def _lookup(self, prompt: str, digest: str, attr: str):
        ph = prompt_hash(prompt)
        for key in ((ph, digest), (ph, None), (None, digest)):
            entry = self.script.get(key)
            if entry is not None and getattr(entry, attr) is not None:
                return getattr(entry, attr)
        return None

    def _record(self, kind: str, prompt: str, digest: str):
        with self._lock:
            self.calls += 1
            if kind == "caption":
                self.caption_calls += 1
            else:
                self.score_calls += 1
            self.history.append((kind, prompt, digest))

    def reset_counters(self):
        with self._lock:
            self.calls = self.caption_calls = self.score_calls = 0
            self.history.clear()

    def generate_caption(self, image: bytes, prompt: str, max_tokens: Optional[int] = None) -> str:
        digest = image_digest(image)
        self._record("caption", prompt, digest)
        text = self._lookup(prompt, digest, "caption")
        if text is None:
            tag = hashlib.sha256(f"{digest}\0{prompt}".encode()).hexdigest()[:12]
            text = f"Placeholder caption {tag}."
        return text.strip()

    def score_first_token(
        self, image: Optional[bytes], prompt: str, token_set: OptionTokenSet
    ) -> TokenScoreMap:
        digest = image_digest(image)
        self._record("score", prompt, digest)
        planted = self._lookup(prompt, digest, "scores")
        if planted is None:
            uniform = 0.0 if self.score_source is ScoreSource.LOGIT else -math.log(len(token_set.tokens))
            planted = {letter: uniform for letter in token_set.tokens}
        return clamp_scores(planted, token_set, self.score_source)


def make_mock_backend(
    script: Optional[Mapping[MockKey, MockEntry]] = None,
    model_id: str = "mock",
    score_source: ScoreSource = ScoreSource.LOGPROB,
) -> MockBackend:
    return MockBackend(dict(script or {}), model_id=model_id, score_source=score_source)


def load_mock_script(path: str | os.PathLike) -> dict[MockKey, MockEntry]:
    """Read a mock script from JSON.

    The file holds a list of objects with optional ``prompt`` (or
    ``prompt_hash``), optional ``image_file`` (relative to the script, or
    ``image_digest``), and ``caption`` and/or ``scores``.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read mock script {path}: {exc}") from exc
    script: dict[MockKey, MockEntry] = {}
    for n, entry in enumerate(entries):
        ph = entry.get("prompt_hash")
        if "prompt" in entry:
            ph = prompt_hash(entry["prompt"])
        digest = entry.get("image_digest")
        if "image_file" in entry:
            digest = image_digest((path.parent / entry["image_file"]).read_bytes())
        if ph is None and digest is None:
            raise ConfigError(f"mock script entry {n} matches nothing")
        script[(ph, digest)] = MockEntry(entry.get("caption"), entry.get("scores"))
    return script


def make_backend(descriptor: BackendDescriptor, transport: Optional[httpx.BaseTransport] = None):
    if descriptor.kind is BackendKind.MOCK:
        script = load_mock_script(descriptor.script_path) if descriptor.script_path else {}
        return make_mock_backend(script, descriptor.model_id, descriptor.score_source)
    return RemoteBackend(descriptor, transport=transport)
