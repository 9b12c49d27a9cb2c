"""HTTP client for an OpenAI-style chat-completion service used as a planner backend."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "HELPLOOP_API_KEY"
ENDPOINT_ENV = "HELPLOOP_LLM_ENDPOINT"
MODEL_ENV = "HELPLOOP_LLM_MODEL"


class BackendError(Exception):
    kind = "backend"


class BackendTimeout(BackendError):
    kind = "timeout"


class TransportError(BackendError):
    kind = "transport"


class ServiceError(BackendError):
    kind = "service"

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"service returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


@dataclass
class LLMConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    timeout: float = 30.0
    retries: int = 2
    temperature: float = 0.0
    api_key_env: str = API_KEY_ENV
    backoff: float = 0.5

    @classmethod
    def from_env(cls, **overrides) -> "LLMConfig":
        cfg = cls()
        if os.environ.get(ENDPOINT_ENV):
            cfg.endpoint = os.environ[ENDPOINT_ENV]
        if os.environ.get(MODEL_ENV):
            cfg.model = os.environ[MODEL_ENV]
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


@dataclass
class Exchange:
    request: dict
    status: int | None = None
    response: str | None = None
    error: str | None = None
    elapsed: float = 0.0


class LLMBackend:
    """Sends the planner prompt as a single user message and returns the reply text verbatim."""

    def __init__(self, config: LLMConfig | None = None, session: requests.Session | None = None):
        self.config = config or LLMConfig()
        self.session = session or requests.Session()
        self.backend_id = f"llm:{self.config.model}"
        self.exchanges: list[Exchange] = []

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _once(self, payload: dict) -> str:
        record = Exchange(payload)
        self.exchanges.append(record)
        start = time.monotonic()
        try:
            resp = self.session.post(self.config.endpoint, json=payload, headers=self._headers(), timeout=self.config.timeout)
        except requests.Timeout as exc:
            record.error = f"timeout: {exc}"
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            record.error = f"transport: {exc}"
            raise TransportError(str(exc)) from exc
        finally:
            record.elapsed = time.monotonic() - start
        record.status = resp.status_code
        record.response = resp.text
        if resp.status_code != 200:
            raise ServiceError(resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            record.error = f"malformed response: {exc}"
            raise ServiceError(resp.status_code, f"malformed response: {resp.text[:200]}") from exc

    def complete(self, prompt: str, state=None) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "n": 1,
        }
        attempt = 0
        while True:
            try:
                return self._once(payload)
            except (BackendTimeout, TransportError, ServiceError) as exc:
                retryable = not isinstance(exc, ServiceError) or exc.status >= 500 or exc.status == 429
                if not retryable or attempt >= self.config.retries:
                    raise
                attempt += 1
                log.warning("planner request failed (%s), retry %d/%d", exc, attempt, self.config.retries)
                time.sleep(self.config.backoff * attempt)


def llm_backend(config: LLMConfig | None = None) -> LLMBackend:
    return LLMBackend(config)
