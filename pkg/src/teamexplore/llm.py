"""Chat-completion clients: an OpenAI-compatible HTTP client and deterministic mocks."""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence
from urllib.parse import urlparse

import httpx

LOCAL_HOSTS = {"localhost", "127.0.0.1", "::1", "0.0.0.0"}


class TransportError(Exception):
    """A completion could not be obtained (network, HTTP status, or decode failure)."""

    def __init__(self, cause: str, status: int | None = None):
        super().__init__(f"{cause} (status {status})" if status is not None else cause)
        self.cause = cause
        self.status = status


class ConfigError(ValueError):
    pass


class ChatClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    timeout: float = 30.0
    max_response_tokens: int = 1024
    azure_key_header: bool = False  # send `api-key: <key>` instead of a bearer token

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.timeout <= 0:
            raise ConfigError(f"timeout must be > 0, got {self.timeout}")

    @property
    def is_local(self) -> bool:
        return (urlparse(self.base_url).hostname or "") in LOCAL_HOSTS

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) or None


def http_complete(cfg: LlmConfig, prompt: str) -> str:
    key = cfg.api_key()
    if key is None and not cfg.is_local:
        raise ConfigError(f"API key environment variable {cfg.api_key_env} is not set")
    headers = {"Content-Type": "application/json"}
    if key is not None:
        if cfg.azure_key_header:
            headers["api-key"] = key
        else:
            headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_response_tokens,
        "messages": [{"role": "user", "content": prompt}],
    }
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    try:
        resp = httpx.post(url, json=body, headers=headers, timeout=cfg.timeout)
    except httpx.TimeoutException as exc:
        raise TransportError(f"timeout: {exc}") from exc
    except httpx.HTTPError as exc:
        raise TransportError(f"http: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, ValueError) as exc:
        raise TransportError(f"decode: {exc}", status=resp.status_code) from exc
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"decode: unexpected response shape ({exc!r})", status=resp.status_code) from exc
    if not isinstance(content, str):
        raise TransportError("decode: message content is not a string", status=resp.status_code)
    return content


class HttpChatClient:
    def __init__(self, cfg: LlmConfig):
        if cfg.api_key() is None and not cfg.is_local:
            raise ConfigError(f"API key environment variable {cfg.api_key_env} is not set")
        self.cfg = cfg

    def complete(self, prompt: str) -> str:
        return http_complete(self.cfg, prompt)


class ScriptedClient:
    """Replays canned responses in order; records every prompt it receives.

    Entries that are exceptions are raised instead of returned.
    """

    def __init__(self, responses: Sequence[str | Exception]):
        self.responses = list(responses)
        self.prompts: list[str] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            idx = len(self.prompts)
            self.prompts.append(prompt)
        if idx >= len(self.responses):
            raise TransportError(f"scripted mock exhausted after {len(self.responses)} responses")
        item = self.responses[idx]
        if isinstance(item, Exception):
            raise item
        return item


def scripted_mock(responses: Sequence[str | Exception]) -> ScriptedClient:
    return ScriptedClient(responses)


CELL_LINE = re.compile(
    r"^\((\d+),(\d+)\) label=(\d) nf=(\d+) no=(\d+) d=(\d+(?:\.\d+)?)$", re.MULTILINE
)
OTHER_TARGET = re.compile(r"target \((\d+),(\d+)\)")
CONFLICT_PENALTY = 100.0


class HeuristicClient:
    """Scores the prompt's frontier lines as w_f*nf - w_o*no - w_d*d.

    Frontiers already targeted by another team are penalised. A pure function
    of the prompt text, so it exercises the same render/parse path as a model.
    """

    def __init__(self, w_frontier: float = 1.0, w_occupied: float = 1.0, w_distance: float = 0.2):
        self.weights = (w_frontier, w_occupied, w_distance)

    def complete(self, prompt: str) -> str:
        w_f, w_o, w_d = self.weights
        taken = {(int(c), int(r)) for c, r in OTHER_TARGET.findall(prompt)}
        best = None
        for m in CELL_LINE.finditer(prompt):
            col, row, label, nf, no = (int(v) for v in m.groups()[:5])
            if label != 3:
                continue
            d = float(m.group(6))
            score = w_f * nf - w_o * no - w_d * d
            if (col, row) in taken:
                score -= CONFLICT_PENALTY
            key = (-score, row, col)
            if best is None or key < best[0]:
                best = (key, col, row, nf, no, d)
        if best is None:
            raise TransportError("heuristic mock: prompt lists no frontier cells")
        _, col, row, nf, no, d = best
        return (
            f"Cell ({col},{row}) has {nf} frontier and {no} obstacle neighbours at {d:.2f} m.\n"
            f"TARGET: ({col},{row})"
        )


def heuristic_mock(weights: tuple[float, float, float] = (1.0, 1.0, 0.2)) -> HeuristicClient:
    return HeuristicClient(*weights)
