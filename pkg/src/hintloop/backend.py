"""Model endpoint access.

Two interchangeable backends sit behind one ``complete(transcript, decoding)``
call:

  - HttpBackend speaks the OpenAI-compatible chat-completions wire protocol
    (POST {base_url}/chat/completions) with bounded retries and a concurrency
    semaphore.
  - MockBackend replays an ordered script; ScriptedMockBackend answers from
    reusable match rules with a content-hash fallback, so whole pipelines run
    deterministically offline.

Every completed call yields exactly one CallUsage. When the server omits its
usage block, counts fall back to a whitespace-token estimate and are flagged
``estimated``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import requests

logger = logging.getLogger(__name__)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)

FORMAT_FREE_TEXT = "free_text"
FORMAT_JSON = "constrained_json"


class BackendError(Exception):
    """A completion could not be obtained."""

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class MockScriptError(BackendError):
    """The scripted mock was driven off its script."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")


@dataclass
class ChatTranscript:
    """Ordered chat messages sent to a completion endpoint."""

    messages: list[ChatMessage] = field(default_factory=list)

    def add(self, role: str, content: str) -> "ChatTranscript":
        self.messages.append(ChatMessage(role, content))
        return self

    def validate(self) -> None:
        if not self.messages:
            raise ValueError("transcript must contain at least one message")
        if self.messages[-1].role == ROLE_ASSISTANT:
            raise ValueError("last message before a completion must not be an assistant turn")

    def rendered(self) -> str:
        """Flat text view used for matching and token estimation."""
        return "\n".join(f"{m.role}: {m.content}" for m in self.messages)

    def copy(self) -> "ChatTranscript":
        return ChatTranscript(list(self.messages))


def transcript(*turns: tuple[str, str]) -> ChatTranscript:
    return ChatTranscript([ChatMessage(role, content) for role, content in turns])


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_new_tokens: int = 2048
    seed: int | None = None
    response_format: str = FORMAT_FREE_TEXT

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.response_format not in (FORMAT_FREE_TEXT, FORMAT_JSON):
            raise ValueError(f"unknown response_format {self.response_format!r}")

    def with_seed(self, seed: int | None) -> "DecodingParams":
        return replace(self, seed=seed)


# refinement steps decode deterministically; final synthesis samples mildly
# and must answer in constrained JSON
REFINEMENT_DECODING = DecodingParams(temperature=0.0, top_p=1.0)
SYNTHESIS_DECODING = DecodingParams(temperature=0.7, top_p=0.95, response_format=FORMAT_JSON)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = ""
    timeout_s: float = 120.0
    max_retries: int = 2
    max_concurrency: int = 4
    retry_backoff_s: float = 0.25
    decoding: DecodingParams = field(default_factory=DecodingParams)

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass
class CallUsage:
    """Token and latency accounting for a single completed call."""

    prompt_tokens: int
    completion_tokens: int
    wall_time: float = 0.0
    estimated: bool = False
    retries: int = 0

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0 or self.wall_time < 0:
            raise ValueError("usage counters must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "wall_time": self.wall_time,
            "estimated": self.estimated,
            "retries": self.retries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CallUsage":
        return cls(
            prompt_tokens=int(d["prompt_tokens"]),
            completion_tokens=int(d["completion_tokens"]),
            wall_time=float(d.get("wall_time", 0.0)),
            estimated=bool(d.get("estimated", False)),
            retries=int(d.get("retries", 0)),
        )


def estimate_tokens(text: str) -> int:
    """Whitespace-delimited count; used only when the server omits usage."""
    return len(text.split())


class HttpBackend:
    """Live client for any OpenAI-compatible chat-completions server.

    Retries transient failures (connection errors, timeouts, HTTP 429/5xx)
    with exponential backoff, at most 1 + max_retries attempts per call. A
    semaphore bounds concurrent in-flight requests; the handle is safe to
    share across threads.
    """

    def __init__(self, config: EndpointConfig):
        self.config = config
        self._semaphore = threading.Semaphore(config.max_concurrency)
        self._session = requests.Session()

    @property
    def model_name(self) -> str:
        return self.config.model_name

    def complete(self, transcript: ChatTranscript,
                 decoding: DecodingParams | None = None) -> tuple[str, CallUsage]:
        transcript.validate()
        decoding = decoding or self.config.decoding
        payload = self._payload(transcript, decoding)
        headers = {"Content-Type": "application/json"}
        api_key = self._api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        start = time.perf_counter()
        attempts = 1 + self.config.max_retries
        last_error: str = ""
        with self._semaphore:
            for attempt in range(attempts):
                try:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout_s
                    )
                except (requests.ConnectionError, requests.Timeout) as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                else:
                    if resp.status_code == 200:
                        wall = time.perf_counter() - start
                        return self._parse_response(resp, transcript, wall, retries=attempt)
                    body = resp.text[:2000]
                    last_error = f"HTTP {resp.status_code}: {body}"
                    if resp.status_code not in (429,) and resp.status_code < 500:
                        raise BackendError(
                            f"endpoint rejected request: {last_error}",
                            status=resp.status_code, body=body,
                        )
                if attempt < attempts - 1:
                    delay = self.config.retry_backoff_s * (2 ** attempt)
                    logger.debug("retrying after %.2fs (%s)", delay, last_error)
                    time.sleep(delay)
        raise BackendError(f"request failed after {attempts} attempts: {last_error}")

    def _payload(self, transcript: ChatTranscript, decoding: DecodingParams) -> dict:
        payload: dict = {
            "model": self.config.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in transcript.messages],
            "temperature": decoding.temperature,
            "top_p": decoding.top_p,
            "max_tokens": decoding.max_new_tokens,
        }
        if decoding.seed is not None:
            payload["seed"] = decoding.seed
        if decoding.response_format == FORMAT_JSON:
            payload["response_format"] = {"type": "json_object"}
        return payload

    def _api_key(self) -> str:
        import os

        if not self.config.api_key_env_var:
            return ""
        return os.environ.get(self.config.api_key_env_var, "")

    def _parse_response(self, resp: requests.Response, transcript: ChatTranscript,
                        wall: float, retries: int) -> tuple[str, CallUsage]:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"malformed response body: {exc}", status=resp.status_code, body=resp.text[:2000]
            ) from exc
        if not isinstance(text, str):
            raise BackendError("response content is not a string", body=resp.text[:2000])
        usage = data.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            call = CallUsage(
                prompt_tokens=int(usage["prompt_tokens"]),
                completion_tokens=int(usage["completion_tokens"]),
                wall_time=wall,
                retries=retries,
            )
        else:
            call = CallUsage(
                prompt_tokens=sum(estimate_tokens(m.content) for m in transcript.messages),
                completion_tokens=estimate_tokens(text),
                wall_time=wall,
                estimated=True,
                retries=retries,
            )
        return text, call


@dataclass
class ScriptEntry:
    """One scripted reply: optional matcher, response text, fixed usage."""

    response: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    wall_time: float = 0.0
    match: str | Callable[[ChatTranscript], bool] | None = None


class MockBackend:
    """Ordered-script backend whose replies are fully determined up front.

    Single-consumer: entries are consumed strictly in order, one per call.
    Calling past the end of the script is an explicit error, never a silent
    reuse. Received transcripts and decodings are recorded for inspection.
    """

    def __init__(self, script: Sequence[ScriptEntry], model_name: str = "mock"):
        if not script:
            raise ValueError("mock script must be non-empty")
        self._script = list(script)
        self._next = 0
        self._lock = threading.Lock()
        self.model_name = model_name
        self.calls: list[ChatTranscript] = []
        self.decodings: list[DecodingParams | None] = []

    def complete(self, transcript: ChatTranscript,
                 decoding: DecodingParams | None = None) -> tuple[str, CallUsage]:
        transcript.validate()
        with self._lock:
            if self._next >= len(self._script):
                raise MockScriptError(
                    f"mock script exhausted: call {self._next + 1} exceeds "
                    f"script length {len(self._script)}"
                )
            entry = self._script[self._next]
            self._next += 1
            self.calls.append(transcript.copy())
            self.decodings.append(decoding)
        if entry.match is not None and not _matches(entry.match, transcript):
            raise MockScriptError(
                f"scripted call {self._next} did not match its guard "
                f"{entry.match!r}; transcript was: {transcript.rendered()[:400]}"
            )
        usage = CallUsage(entry.prompt_tokens, entry.completion_tokens, entry.wall_time)
        return entry.response, usage

    @property
    def calls_made(self) -> int:
        return self._next


class ScriptedMockBackend:
    """Rule-based deterministic mock for whole-pipeline runs.

    Rules are (substring, response, usage) and reusable; the first rule whose
    substring occurs in the rendered transcript wins. Calls matching no rule
    get a reply derived from a content hash of the transcript, JSON-shaped
    when constrained JSON decoding was requested — so any call sequence is
    answered, and identical executions produce identical bytes.
    """

    def __init__(self, rules: Sequence[ScriptEntry] = (), model_name: str = "mock"):
        self._rules = list(rules)
        self.model_name = model_name
        self._lock = threading.Lock()
        self.calls: list[ChatTranscript] = []

    def complete(self, transcript: ChatTranscript,
                 decoding: DecodingParams | None = None) -> tuple[str, CallUsage]:
        transcript.validate()
        with self._lock:
            self.calls.append(transcript.copy())
        rendered = transcript.rendered()
        for rule in self._rules:
            if rule.match is not None and _matches(rule.match, transcript):
                return rule.response, CallUsage(
                    rule.prompt_tokens or estimate_tokens(rendered),
                    rule.completion_tokens or estimate_tokens(rule.response),
                    rule.wall_time,
                )
        fmt = decoding.response_format if decoding else FORMAT_FREE_TEXT
        digest = hashlib.sha256((rendered + "\x00" + fmt).encode("utf-8")).hexdigest()
        if fmt == FORMAT_JSON:
            text = json.dumps(
                {"final_answer": f"ans-{digest[:6]}", "reasoning_summary": f"summary-{digest[:6]}"}
            )
        else:
            text = f"worked step {digest[:10]}"
        usage = CallUsage(
            prompt_tokens=estimate_tokens(rendered),
            completion_tokens=20 + int(digest[:2], 16) % 40,
            wall_time=(int(digest[2:6], 16) % 1000) / 1000.0,
        )
        return text, usage


def _matches(matcher: str | Callable[[ChatTranscript], bool],
             transcript: ChatTranscript) -> bool:
    if callable(matcher):
        return bool(matcher(transcript))
    return matcher in transcript.rendered()
