"""Chat client for vision-capable model APIs with record/replay transcripts.

Each plot job owns one :class:`ChatSession`, which appends every exchange to
a JSON-lines transcript. In replay mode requests are looked up by a content
digest of the model parameters and full message list, so a recorded run can
be reproduced offline with no network traffic.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "PLOTEXTRACT_API_KEY"
DEFAULT_MODEL = "claude-3-5-sonnet-20241022"
# the messages endpoint requires max_tokens; this is the model's output ceiling
DEFAULT_MAX_TOKENS = 8192
DEFAULT_IMAGE_LIMIT = 5 * 1024 * 1024
MEDIA_TYPES = {"png": "image/png", "image/png": "image/png", "jpeg": "image/jpeg", "jpg": "image/jpeg", "image/jpeg": "image/jpeg"}
_MAGIC = {"image/png": b"\x89PNG\r\n\x1a\n", "image/jpeg": b"\xff\xd8\xff"}


class GatewayError(RuntimeError):
    """The provider could not produce a reply."""


class AuthError(GatewayError):
    pass


class ConfigError(RuntimeError):
    pass


class ReplayMiss(GatewayError):
    def __init__(self, digest: str, transcript_id: str):
        super().__init__(f"no recorded reply for request {digest} in transcript {transcript_id!r}")
        self.digest = digest
        self.transcript_id = transcript_id


class ImageError(ValueError):
    pass


class OversizeImage(ImageError):
    pass


class UnsupportedMediaType(ImageError):
    pass


class Role(str, enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"


class Mode(str, enum.Enum):
    LIVE = "live"
    REPLAY = "replay"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class Image:
    media_type: str
    data: bytes


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    text: str = ""
    images: tuple[Image, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if self.images and self.role is not Role.USER:
            raise ValueError("only user messages may carry images")
        if not self.text and not self.images:
            raise ValueError("a message needs text or images")

    @classmethod
    def user(cls, text: str, *images: Image) -> ChatMessage:
        return cls(Role.USER, text, tuple(images))

    @classmethod
    def assistant(cls, text: str) -> ChatMessage:
        return cls(Role.ASSISTANT, text)


@dataclass(frozen=True)
class ModelParams:
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def normalize_media_type(media_type: str) -> str:
    try:
        return MEDIA_TYPES[media_type.lower()]
    except KeyError:
        raise UnsupportedMediaType(f"unsupported media type {media_type!r}; expected PNG or JPEG") from None


def sniff_media_type(data: bytes) -> str:
    for media_type, magic in _MAGIC.items():
        if data.startswith(magic):
            return media_type
    raise UnsupportedMediaType("image is neither PNG nor JPEG")


def encode_image(data: bytes, media_type: str, limit: int = DEFAULT_IMAGE_LIMIT) -> dict[str, Any]:
    """Provider-ready base64 image block."""
    mt = normalize_media_type(media_type)
    if len(data) > limit:
        raise OversizeImage(f"image is {len(data)} bytes, limit is {limit}")
    return {"type": "image", "source": {"type": "base64", "media_type": mt, "data": base64.b64encode(data).decode("ascii")}}


def _content(message: ChatMessage, image_block: Callable[[Image], dict[str, Any]]) -> list[dict[str, Any]]:
    blocks = [image_block(img) for img in message.images]
    if message.text:
        blocks.append({"type": "text", "text": message.text})
    return blocks


def _image_ref(img: Image) -> dict[str, Any]:
    return {
        "type": "image",
        "source": {
            "type": "sha256",
            "media_type": normalize_media_type(img.media_type),
            "sha256": hashlib.sha256(img.data).hexdigest(),
            "size": len(img.data),
        },
    }


def _request(conversation: list[ChatMessage], params: ModelParams, image_block) -> dict[str, Any]:
    if not conversation or conversation[-1].role is not Role.USER:
        raise ValueError("conversation must end with a user message")
    return {
        "model": params.model_id,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens or DEFAULT_MAX_TOKENS,
        "messages": [{"role": m.role.value, "content": _content(m, image_block)} for m in conversation],
    }


def transcript_request(conversation: list[ChatMessage], params: ModelParams) -> dict[str, Any]:
    """The request as stored in transcripts: images replaced by their sha256 and size."""
    return _request(conversation, params, _image_ref)


def wire_request(conversation: list[ChatMessage], params: ModelParams, image_limit: int = DEFAULT_IMAGE_LIMIT) -> dict[str, Any]:
    return _request(conversation, params, lambda img: encode_image(img.data, img.media_type, image_limit))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(request: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()


class Provider(Protocol):
    def complete(self, request: dict[str, Any]) -> str: ...


def api_key_from_env() -> str:
    key = os.environ.get(API_KEY_ENV, "")
    if not key:
        raise ConfigError(f"live mode needs the {API_KEY_ENV} environment variable")
    return key


class AnthropicProvider:
    """HTTP adapter for the Anthropic messages endpoint."""

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504, 529}

    def __init__(
        self,
        api_key: str,
        base_url: str = "https://api.anthropic.com",
        api_version: str = "2023-06-01",
        timeout: float = 300.0,
        max_attempts: int = 5,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=base_url,
            timeout=timeout,
            transport=transport,
            headers={"x-api-key": api_key, "anthropic-version": api_version, "content-type": "application/json"},
        )

    def complete(self, request: dict[str, Any]) -> str:
        last = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post("/v1/messages", json=request)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return "".join(b.get("text", "") for b in resp.json().get("content", []) if b.get("type") == "text")
                if resp.status_code in (401, 403):
                    raise AuthError(f"authentication failed ({resp.status_code}): {resp.text}")
                last = f"HTTP {resp.status_code}: {resp.text}"
                if resp.status_code not in self.RETRY_STATUS:
                    raise GatewayError(last)
            if attempt < self.max_attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning("request failed (%s); retry %d in %.1fs", last, attempt, delay)
                self._sleep(delay)
        raise GatewayError(f"gave up after {self.max_attempts} attempts: {last}")

    def close(self) -> None:
        self._client.close()


def read_transcript(path: str | Path) -> list[dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


@dataclass
class ChatSession:
    """One plot job's view of the gateway; owns that job's transcript."""

    transcript_id: str
    mode: Mode
    provider: Provider | None
    recorded: dict[str, deque] = field(default_factory=dict)
    path: Path | None = None
    image_limit: int = DEFAULT_IMAGE_LIMIT
    entries: list[dict[str, Any]] = field(default_factory=list)
    network_calls: int = 0

    def __post_init__(self):
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def send_chat(self, conversation: list[ChatMessage], params: ModelParams, step: str = "") -> str:
        """Reply text for the conversation; the exchange is appended to the transcript."""
        request = transcript_request(conversation, params)
        digest = request_digest(request)
        queue = self.recorded.get(digest)
        if self.mode is not Mode.LIVE and queue:
            entry = queue.popleft()
        elif self.mode is Mode.REPLAY:
            raise ReplayMiss(digest, self.transcript_id)
        else:
            if self.provider is None:
                raise ConfigError("live requests need a provider")
            self.network_calls += 1
            reply = self.provider.complete(wire_request(conversation, params, self.image_limit))
            entry = {
                "digest": digest,
                "request": request,
                "response": reply,
                "step": step,
                "ts": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            }
        self._append(entry)
        return entry["response"]

    def _append(self, entry: dict[str, Any]) -> None:
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")


class Gateway:
    """Creates per-job sessions bound to a mode, a provider and transcript directories."""

    def __init__(
        self,
        mode: Mode | str,
        provider: Provider | None = None,
        replay_dir: str | Path | None = None,
        image_limit: int = DEFAULT_IMAGE_LIMIT,
    ):
        self.mode = Mode(mode)
        if self.mode is not Mode.REPLAY and provider is None:
            raise ConfigError(f"{self.mode.value} mode needs a provider")
        if self.mode is not Mode.LIVE and replay_dir is None:
            raise ConfigError(f"{self.mode.value} mode needs a transcript directory")
        self.provider = provider
        self.replay_dir = Path(replay_dir) if replay_dir is not None else None
        self.image_limit = image_limit

    def _recorded(self, transcript_id: str) -> dict[str, deque]:
        table: dict[str, deque] = defaultdict(deque)
        if self.replay_dir is not None:
            path = self.replay_dir / f"{transcript_id}.jsonl"
            if path.exists():
                for entry in read_transcript(path):
                    table[entry["digest"]].append(entry)
        return dict(table)

    def session(self, transcript_id: str, path: str | Path | None = None) -> ChatSession:
        return ChatSession(
            transcript_id=transcript_id,
            mode=self.mode,
            provider=self.provider,
            recorded=self._recorded(transcript_id),
            path=Path(path) if path is not None else None,
            image_limit=self.image_limit,
        )
