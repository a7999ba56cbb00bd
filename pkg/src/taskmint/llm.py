"""Pluggable LLM client contract plus HTTP, replay, and static backends.

Every backend implements a single call: complete(prompt, params) ->
(text, (prompt_tokens, completion_tokens)). The replay backend records
real exchanges to disk keyed by prompt hash so the whole pipeline runs
with zero network afterwards.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .errors import EmptyResponse, TransportError
from .io import json_line, sha256_text

logger = logging.getLogger(__name__)

Usage = tuple[int, int]


@dataclass
class LlmParams:
    """Sampling and transport settings for one family of calls."""

    model_tag: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_tokens: int = 1024
    max_retries: int = 2
    backoff_base: float = 0.5
    timeout: float = 60.0


class LlmClient(Protocol):
    def complete(self, prompt: str, params: LlmParams) -> tuple[str, Usage]: ...


class HttpLlmClient:
    """Chat-completions HTTP backend; auth token read from the environment."""

    def __init__(
        self,
        base_url: str,
        *,
        token_env: str = "LLM_API_TOKEN",
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.token_env = token_env
        self._client = httpx.Client(transport=transport) if transport else httpx.Client()

    def complete(self, prompt: str, params: LlmParams) -> tuple[str, Usage]:
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": params.model_tag,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=params.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise TransportError(f"completion request failed: {exc}") from exc
        try:
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            counts = (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        if not text or not text.strip():
            raise EmptyResponse("model returned an empty completion")
        return text, counts

    def close(self) -> None:
        self._client.close()


class ReplayLlmClient:
    """Record/replay cache over exchanges.jsonl, keyed by prompt hash.

    In record mode every live exchange is appended to the cache file; in
    replay mode the cache is the only source and unknown prompts fail.
    """

    def __init__(self, cache_path: str | Path, *, inner: LlmClient | None = None):
        self.cache_path = Path(cache_path)
        self.inner = inner
        self._lock = threading.Lock()
        self._cache: dict[str, dict] = {}
        if self.cache_path.exists():
            import json

            with open(self.cache_path, encoding="utf-8") as fp:
                for line in fp:
                    if line.strip():
                        record = json.loads(line)
                        self._cache[record["prompt_sha256"]] = record

    def complete(self, prompt: str, params: LlmParams) -> tuple[str, Usage]:
        key = sha256_text(prompt)
        record = self._cache.get(key)
        if record is not None:
            return record["response"], (record["prompt_tokens"], record["completion_tokens"])
        if self.inner is None:
            raise TransportError(f"no recorded response for prompt hash {key[:12]}")
        text, (prompt_tokens, completion_tokens) = self.inner.complete(prompt, params)
        record = {
            "prompt_sha256": key,
            "response": text,
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "model_tag": params.model_tag,
        }
        with self._lock:
            self._cache[key] = record
            self.cache_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.cache_path, "a", encoding="utf-8") as fp:
                fp.write(json_line(record) + "\n")
        return text, (prompt_tokens, completion_tokens)


class StaticLlmClient:
    """Canned responses for tests: exact-prompt map first, then a script."""

    def __init__(
        self,
        *,
        by_prompt: dict[str, str] | None = None,
        script: list[str] | None = None,
        usage: Usage = (100, 50),
        fail_times: int = 0,
    ):
        self.by_prompt = dict(by_prompt or {})
        self.script = list(script or [])
        self.usage = usage
        self.fail_times = fail_times
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, params: LlmParams) -> tuple[str, Usage]:
        with self._lock:
            self.calls += 1
            if self.fail_times > 0:
                self.fail_times -= 1
                raise TransportError("injected transport failure")
            if prompt in self.by_prompt:
                text = self.by_prompt[prompt]
            elif self.script:
                text = self.script.pop(0)
            else:
                raise TransportError("no canned response for prompt")
        if not text.strip():
            raise EmptyResponse("canned response is empty")
        return text, self.usage


class TokenBucket:
    """Blocking rate limiter: `rate` tokens per second, burst of `capacity`."""

    def __init__(self, rate: float, capacity: int):
        if rate <= 0 or capacity < 1:
            raise ValueError("rate must be positive and capacity >= 1")
        self.rate = rate
        self.capacity = capacity
        self._tokens = float(capacity)
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)
