"""Chat, embedding, and captioning provider interfaces plus test doubles.

Live providers speak a generic JSON-over-HTTP shape (chat messages with
base64 images, embedding arrays) configured by endpoint/model/credentials;
the in-process doubles are pure functions so experiments and metrics can run
fully offline.  The agent reply grammar lives here too: replies are strict
one-line directives followed by free-text rationale.
"""

from __future__ import annotations

import base64
import hashlib
import io
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from PIL import Image


class ProviderError(RuntimeError):
    pass


class NetworkError(ProviderError):
    pass


class AuthError(ProviderError):
    pass


class RateLimitError(ProviderError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ContentRefusalError(ProviderError):
    pass


class ContextLimitError(ProviderError):
    def __init__(self, message: str, token_estimate: int | None = None):
        super().__init__(message)
        self.token_estimate = token_estimate


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    images: tuple[bytes, ...] = ()

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.images and self.role != "user":
            raise ValueError("images are only allowed on user messages")


@dataclass(frozen=True)
class EmbeddingVector:
    components: tuple[float, ...]
    model: str

    def as_array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=np.float64)


def stack_vectors(vectors) -> np.ndarray:
    """Stack embedding vectors into an (n, d) array, insisting on one model."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no vectors to stack")
    tags = {v.model for v in vectors}
    if len(tags) != 1:
        raise ValueError(f"vectors from mixed models: {sorted(tags)}")
    return np.stack([v.as_array() for v in vectors])


# ----------------------------------------------------------------------
# Agent replies and the directive grammar
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BranchReply:
    entry_index: int | None          # None means start fresh
    rationale: str = ""


@dataclass(frozen=True)
class SelectReply:
    indices: tuple[int, ...]
    strength: float | None = None
    mode: str | None = None
    rationale: str = ""


@dataclass(frozen=True)
class ToggleReply:
    rationale: str = ""


@dataclass(frozen=True)
class PublishReply:
    index: int
    title: str
    rationale: str = ""


@dataclass(frozen=True)
class RatingsReply:
    scores: dict[int, int] = field(default_factory=dict)
    rationale: str = ""

    def __hash__(self):
        return hash(tuple(sorted(self.scores.items())))


_MODE_TOKEN = {"structure": "structure-only", "color": "color-only", "both": "both"}
_MODE_WORD = {v: k for k, v in _MODE_TOKEN.items()}

_BRANCH_RE = re.compile(r"^BRANCH\s+(FRESH|\d+)\s*$")
_SELECT_RE = re.compile(
    r"^SELECT\s+(\d+(?:\s*,\s*\d+)*)"
    r"(?:\s+STRENGTH\s+([0-9]*\.?[0-9]+))?"
    r"(?:\s+MODE\s+(structure|color|both))?\s*$")
_TOGGLE_RE = re.compile(r"^TOGGLE_COLOR\s*$")
_PUBLISH_RE = re.compile(r"^PUBLISH\s+(\d+)\s+TITLE\s+\"(.*)\"\s*$")
_RATE_RE = re.compile(r"^RATE\s+(\d+\s*=\s*\d+(?:\s*,\s*\d+\s*=\s*\d+)*)\s*$")

_DIRECTIVES = ("BRANCH", "SELECT", "TOGGLE_COLOR", "PUBLISH", "RATE")

STAGES = ("branch", "select", "publish", "rate")
_STAGE_ALLOWED = {
    "branch": ("BRANCH",),
    "select": ("SELECT", "TOGGLE_COLOR"),
    "publish": ("PUBLISH",),
    "rate": ("RATE",),
}


def _check_index(i: int, presented: int) -> int:
    if not 0 <= i < presented:
        raise ParseError(f"index {i} outside presented range 0..{presented - 1}")
    return i


def parse_reply(text: str, stage: str, presented_count: int):
    """Parse a raw agent reply for the given stage.

    The first line starting with a known directive keyword decides the
    reply; every other line becomes rationale.  Anything malformed, out of
    range, or wrong for the stage raises ParseError so the caller can retry.
    """
    if stage not in _STAGE_ALLOWED:
        raise ValueError(f"unknown stage {stage!r}")
    directive_line = None
    rationale_lines = []
    for line in text.splitlines():
        stripped = line.strip()
        if directive_line is None and any(
                stripped.startswith(d) for d in _DIRECTIVES):
            directive_line = stripped
        elif stripped:
            rationale_lines.append(stripped)
    if directive_line is None:
        raise ParseError("no directive line found")
    keyword = directive_line.split()[0]
    if keyword not in _STAGE_ALLOWED[stage]:
        raise ParseError(f"directive {keyword} not valid at {stage} stage")
    rationale = "\n".join(rationale_lines)

    if keyword == "BRANCH":
        m = _BRANCH_RE.match(directive_line)
        if not m:
            raise ParseError(f"malformed directive: {directive_line!r}")
        if m.group(1) == "FRESH":
            return BranchReply(None, rationale)
        return BranchReply(_check_index(int(m.group(1)), presented_count), rationale)

    if keyword == "TOGGLE_COLOR":
        if not _TOGGLE_RE.match(directive_line):
            raise ParseError(f"malformed directive: {directive_line!r}")
        return ToggleReply(rationale)

    if keyword == "SELECT":
        m = _SELECT_RE.match(directive_line)
        if not m:
            raise ParseError(f"malformed directive: {directive_line!r}")
        indices = tuple(_check_index(int(tok), presented_count)
                        for tok in re.split(r"\s*,\s*", m.group(1)))
        if len(set(indices)) != len(indices):
            raise ParseError("duplicate selection indices")
        strength = None
        if m.group(2) is not None:
            strength = float(m.group(2))
            if not 0.01 <= strength <= 1.0:
                raise ParseError(f"strength {strength} outside [0.01, 1]")
        mode = _MODE_TOKEN[m.group(3)] if m.group(3) else None
        return SelectReply(indices, strength, mode, rationale)

    if keyword == "PUBLISH":
        m = _PUBLISH_RE.match(directive_line)
        if not m:
            raise ParseError(f"malformed directive: {directive_line!r}")
        title = m.group(2)
        if not title.strip():
            raise ParseError("empty publication title")
        return PublishReply(_check_index(int(m.group(1)), presented_count),
                            title, rationale)

    m = _RATE_RE.match(directive_line)
    if not m:
        raise ParseError(f"malformed directive: {directive_line!r}")
    scores: dict[int, int] = {}
    for pair in re.split(r"\s*,\s*", m.group(1)):
        idx_text, score_text = re.split(r"\s*=\s*", pair)
        idx = _check_index(int(idx_text), presented_count)
        score = int(score_text)
        if not 1 <= score <= 5:
            raise ParseError(f"score {score} outside 1..5")
        scores[idx] = score
    return RatingsReply(scores, rationale)


def format_reply(reply) -> str:
    """Canonical directive text for a parsed reply (round-trips parse_reply)."""
    if isinstance(reply, BranchReply):
        head = "BRANCH FRESH" if reply.entry_index is None else f"BRANCH {reply.entry_index}"
    elif isinstance(reply, ToggleReply):
        head = "TOGGLE_COLOR"
    elif isinstance(reply, SelectReply):
        head = "SELECT " + ",".join(map(str, reply.indices))
        if reply.strength is not None:
            head += f" STRENGTH {reply.strength}"
        if reply.mode is not None:
            head += f" MODE {_MODE_WORD[reply.mode]}"
    elif isinstance(reply, PublishReply):
        head = f'PUBLISH {reply.index} TITLE "{reply.title}"'
    elif isinstance(reply, RatingsReply):
        head = "RATE " + ",".join(f"{i}={s}" for i, s in sorted(reply.scores.items()))
    else:
        raise TypeError(f"not a reply: {reply!r}")
    if reply.rationale:
        return head + "\n" + reply.rationale
    return head


# ----------------------------------------------------------------------
# In-process test doubles
# ----------------------------------------------------------------------

class ScriptedChatProvider:
    """Replays a fixed sequence of replies; records every prompt it saw."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls: list[list[ChatMessage]] = []

    def complete(self, messages, model: str = "") -> str:
        self.calls.append(list(messages))
        if not self.replies:
            raise NetworkError("scripted provider ran out of replies")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def _decode_gray(png: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(png)).convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr.mean(axis=2)


class DownsampleImageEmbedder:
    """8x8 mean-pooled grayscale downsample, flattened to 64 components.

    Deterministic and hand-checkable; the canonical offline stand-in for a
    visual embedding model.
    """

    model = "downsample-8x8"

    def embed_image(self, png: bytes) -> EmbeddingVector:
        gray = _decode_gray(png)
        h, w = gray.shape
        cells = np.zeros((8, 8))
        rows = np.linspace(0, h, 9).astype(int)
        cols = np.linspace(0, w, 9).astype(int)
        for i in range(8):
            for j in range(8):
                block = gray[rows[i]:max(rows[i + 1], rows[i] + 1),
                             cols[j]:max(cols[j + 1], cols[j] + 1)]
                cells[i, j] = block.mean()
        return EmbeddingVector(tuple(cells.ravel()), self.model)


class HashTextEmbedder:
    """Deterministic pseudo-embedding: a unit vector seeded by the text."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.model = f"hashtext-{dim}"

    def embed_text(self, text: str) -> EmbeddingVector:
        seed = int.from_bytes(
            hashlib.sha256(text.strip().lower().encode()).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        return EmbeddingVector(tuple(vec), self.model)


class ConstantCaptioner:
    """Same caption for every image; collapses semantic coverage to zero."""

    def __init__(self, text: str = "gray image."):
        self.text = one_sentence(text)

    def caption(self, png: bytes) -> str:
        return self.text


class ToneCaptioner:
    """One-sentence caption from coarse brightness statistics."""

    _tones = ("a nearly black image.", "a dark image.", "a dim gray image.",
              "a bright gray image.", "a very bright image.")

    def caption(self, png: bytes) -> str:
        gray = _decode_gray(png)
        bucket = min(int(gray.mean() * 5), 4)
        contrast = "high-contrast " if gray.std() > 0.25 else ""
        return one_sentence(f"{contrast}{self._tones[bucket]}")


def one_sentence(text: str) -> str:
    """Truncate caption text at its first period (inclusive)."""
    text = text.strip()
    dot = text.find(".")
    return text[:dot + 1] if dot != -1 else text


class ChatCaptioner:
    """One-sentence captions via a chat provider with image input."""

    PROMPT = "Describe this image in one short sentence."

    def __init__(self, chat_provider, model: str = ""):
        self.chat = chat_provider
        self.model = model or getattr(chat_provider, "model", "chat")

    def caption(self, png: bytes) -> str:
        reply = self.chat.complete(
            [ChatMessage("user", self.PROMPT, (png,))], self.model)
        return one_sentence(reply)


# ----------------------------------------------------------------------
# Live HTTP adapters
# ----------------------------------------------------------------------

def _image_part(png: bytes) -> dict:
    encoded = base64.b64encode(png).decode()
    return {"type": "image_url",
            "image_url": {"url": f"data:image/png;base64,{encoded}"}}


def _wire_messages(messages) -> list[dict]:
    wire = []
    for msg in messages:
        if msg.images:
            content = [{"type": "text", "text": msg.text}]
            content.extend(_image_part(png) for png in msg.images)
            wire.append({"role": msg.role, "content": content})
        else:
            wire.append({"role": msg.role, "content": msg.text})
    return wire


def _raise_for_status(status: int, body: str):
    if status in (401, 403):
        raise AuthError(f"provider rejected credentials ({status})")
    if status == 429:
        raise RateLimitError(f"rate limited: {body[:200]}")
    if status == 413:
        raise ContextLimitError(f"context too large: {body[:200]}")
    if status >= 400:
        raise NetworkError(f"provider error {status}: {body[:200]}")


class HttpChatProvider:
    """Chat completions over a generic OpenAI-style JSON endpoint."""

    def __init__(self, endpoint: str, api_key: str = "", model: str = "",
                 timeout: float = 120.0, post: Callable | None = None):
        if post is None:
            import requests
            post = requests.post
        self._post = post
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout

    def complete(self, messages, model: str = "") -> str:
        payload = {"model": model or self.model, "messages": _wire_messages(messages)}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._post(f"{self.endpoint}/chat/completions",
                              json=payload, headers=headers, timeout=self.timeout)
        except Exception as err:  # timeouts, DNS, refused connections
            raise NetworkError(f"chat request failed: {err}") from err
        _raise_for_status(resp.status_code, getattr(resp, "text", ""))
        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as err:
            raise NetworkError(f"malformed chat response: {data!r:.200}") from err
        if text is None:
            raise ContentRefusalError("provider returned an empty completion")
        return text


class HttpEmbeddingProvider:
    """Text/image embeddings over a generic JSON endpoint."""

    def __init__(self, endpoint: str, api_key: str = "", model: str = "",
                 timeout: float = 120.0, post: Callable | None = None):
        if post is None:
            import requests
            post = requests.post
        self._post = post
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout

    def _request(self, payload: dict) -> EmbeddingVector:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._post(f"{self.endpoint}/embeddings", json=payload,
                              headers=headers, timeout=self.timeout)
        except Exception as err:
            raise NetworkError(f"embedding request failed: {err}") from err
        _raise_for_status(resp.status_code, getattr(resp, "text", ""))
        data = resp.json()
        try:
            vec = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as err:
            raise NetworkError(f"malformed embedding response: {data!r:.200}") from err
        return EmbeddingVector(tuple(float(x) for x in vec),
                               payload.get("model", self.model))

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._request({"model": self.model, "input": text})

    def embed_image(self, png: bytes) -> EmbeddingVector:
        encoded = base64.b64encode(png).decode()
        return self._request({"model": self.model,
                              "input": {"image_base64": encoded}})
