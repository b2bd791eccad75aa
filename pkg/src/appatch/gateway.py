"""Provider abstraction: HTTP chat clients, scripted replay, and caching.

Every completion funnels through :meth:`Provider.complete`, which owns
retries, rate limiting, token accounting, and digests.  Nothing outside
this module performs network I/O.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

log = logging.getLogger(__name__)


class GatewayError(Exception):
    """Base class for provider failures."""


class ConfigurationError(GatewayError):
    """Provider configuration is unusable (bad config, missing auth)."""


class ProviderError(GatewayError):
    """A provider failed to answer."""

    def __init__(self, message: str, transient: bool = True):
        super().__init__(message)
        self.transient = transient


class ScriptExhaustedError(ProviderError):
    """The scripted provider ran out of queued responses.

    Deliberately loud and non-retryable: a silently looping script would
    hide nondeterminism in tests.
    """

    def __init__(self, provider_id: str):
        super().__init__(f"scripted provider {provider_id!r} has no responses left",
                         transient=False)


def prompt_sha(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def exchange_digest(provider_id: str, model: str, prompt: str) -> str:
    payload = "\x00".join((provider_id, model, prompt)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def estimate_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Exchange:
    """One prompt/response round trip with its accounting facts."""

    provider_id: str
    model: str
    prompt: str
    response: str
    prompt_digest: str
    input_tokens: int
    output_tokens: int
    latency: float
    estimated: bool = False   # token counts are estimates, not provider-reported

    def to_document(self) -> Dict[str, Any]:
        return {
            "provider_id": self.provider_id,
            "model": self.model,
            "prompt": self.prompt,
            "response": self.response,
            "prompt_digest": self.prompt_digest,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "latency": self.latency,
            "estimated": self.estimated,
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "Exchange":
        return cls(**{k: doc[k] for k in (
            "provider_id", "model", "prompt", "response", "prompt_digest",
            "input_tokens", "output_tokens", "latency", "estimated",
        )})


class Provider:
    """Shared retry/pacing/accounting shell around a concrete transport."""

    kind = "abstract"

    def __init__(
        self,
        provider_id: str,
        model: str,
        attempts: int = 3,
        backoff: float = 0.5,
        rpm_limit: Optional[int] = None,
        max_concurrency: int = 4,
    ):
        self.id = provider_id
        self.model = model
        self.attempts = max(1, attempts)
        self.backoff = backoff
        self.rpm_limit = rpm_limit
        self.history: List[Exchange] = []
        self._history_lock = threading.Lock()
        self._pace_lock = threading.Lock()
        self._earliest_next = 0.0
        self._slots = threading.Semaphore(max(1, max_concurrency))

    def _record(self, exchange: "Exchange") -> "Exchange":
        with self._history_lock:
            self.history.append(exchange)
        return exchange

    # transport hook ------------------------------------------------------

    def _fetch(self, prompt: str) -> Tuple[str, Optional[int], Optional[int]]:
        """Return (response text, reported input tokens, reported output tokens)."""
        raise NotImplementedError

    # public surface ------------------------------------------------------

    def _pace(self) -> None:
        if not self.rpm_limit:
            return
        interval = 60.0 / self.rpm_limit
        with self._pace_lock:
            now = time.monotonic()
            wait = self._earliest_next - now
            self._earliest_next = max(now, self._earliest_next) + interval
        if wait > 0:
            time.sleep(wait)

    def complete(self, prompt: str) -> Exchange:
        last_error: Optional[ProviderError] = None
        started = time.monotonic()
        with self._slots:
            for attempt in range(1, self.attempts + 1):
                self._pace()
                try:
                    response, tokens_in, tokens_out = self._fetch(prompt)
                except ProviderError as exc:
                    last_error = exc
                    if not exc.transient:
                        raise
                    if attempt < self.attempts:
                        delay = self.backoff * (2 ** (attempt - 1))
                        log.warning("provider %s attempt %d failed (%s); retrying in %.2fs",
                                    self.id, attempt, exc, delay)
                        if delay > 0:
                            time.sleep(delay)
                    continue
                latency = time.monotonic() - started
                estimated = tokens_in is None or tokens_out is None
                return self._record(Exchange(
                    provider_id=self.id,
                    model=self.model,
                    prompt=prompt,
                    response=response,
                    prompt_digest=exchange_digest(self.id, self.model, prompt),
                    input_tokens=tokens_in if tokens_in is not None else estimate_tokens(prompt),
                    output_tokens=tokens_out if tokens_out is not None else estimate_tokens(response),
                    latency=latency,
                    estimated=estimated,
                ))
        raise ProviderError(
            f"provider {self.id!r} failed after {self.attempts} attempts: {last_error}",
            transient=False,
        )


class ScriptedProvider(Provider):
    """Replays a fixed queue of responses, one per attempted fetch.

    Queue entries are response strings; an entry of the form
    ``{"error": "..."}`` raises instead, which makes failure paths
    scriptable.  An exhausted queue fails loudly.
    """

    kind = "scripted"

    def __init__(self, provider_id: str, responses: Sequence[Union[str, Mapping]],
                 model: str = "scripted", **kwargs):
        super().__init__(provider_id, model, **kwargs)
        self._queue: List[Union[str, Mapping]] = list(responses)
        self._queue_lock = threading.Lock()

    def remaining(self) -> int:
        with self._queue_lock:
            return len(self._queue)

    def _fetch(self, prompt: str) -> Tuple[str, Optional[int], Optional[int]]:
        with self._queue_lock:
            if not self._queue:
                raise ScriptExhaustedError(self.id)
            entry = self._queue.pop(0)
        if isinstance(entry, Mapping):
            raise ProviderError(str(entry.get("error", "scripted failure")),
                                transient=bool(entry.get("transient", True)))
        return entry, None, None


class HttpChatProvider(Provider):
    """Chat-completion client for the common messages-array wire shape.

    One client covers the vendor APIs that accept
    ``{"model", "messages", "temperature", "max_tokens"}`` and answer with
    ``choices[0].message.content``; header differences live in config.
    """

    kind = "http-chat"

    def __init__(
        self,
        provider_id: str,
        model: str,
        endpoint: str,
        auth_env: Optional[str] = None,
        temperature: float = 0.0,
        max_tokens: int = 2048,
        timeout: float = 120.0,
        extra_headers: Optional[Mapping[str, str]] = None,
        **kwargs,
    ):
        super().__init__(provider_id, model, **kwargs)
        self.endpoint = endpoint
        self.auth_env = auth_env
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.extra_headers = dict(extra_headers or {})

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise ConfigurationError(
                    f"provider {self.id!r} needs auth: set the {self.auth_env} "
                    "environment variable"
                )
            headers["Authorization"] = f"Bearer {token}"
        headers.update(self.extra_headers)
        return headers

    def _fetch(self, prompt: str) -> Tuple[str, Optional[int], Optional[int]]:
        import requests

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        try:
            reply = requests.post(self.endpoint, json=payload,
                                  headers=self._headers(), timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProviderError(f"request failed: {exc}") from exc
        if reply.status_code >= 500:
            raise ProviderError(f"server error {reply.status_code}")
        if reply.status_code >= 400:
            raise ProviderError(f"client error {reply.status_code}: {reply.text[:200]}",
                                transient=False)
        try:
            doc = reply.json()
            content = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc
        usage = doc.get("usage") or {}
        tokens_in = usage.get("prompt_tokens")
        tokens_out = usage.get("completion_tokens")
        return content, tokens_in, tokens_out


class CachedProvider(Provider):
    """Content-addressed cache in front of another provider.

    Entries live at ``<cache>/<digest[:2]>/<digest>.json`` keyed by
    (inner provider id, model, prompt bytes) and are written via
    temp-file-then-rename so concurrent writers stay safe.
    """

    kind = "cached"

    def __init__(self, provider_id: str, inner: Provider, cache_dir: Union[str, Path]):
        super().__init__(provider_id, inner.model, attempts=1, backoff=0.0)
        self.inner = inner
        self.cache_dir = Path(cache_dir)

    def _entry_path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def complete(self, prompt: str) -> Exchange:
        digest = exchange_digest(self.inner.id, self.inner.model, prompt)
        path = self._entry_path(digest)
        if path.exists():
            with open(path, "r", encoding="utf-8") as handle:
                return self._record(Exchange.from_document(json.load(handle)))
        exchange = self.inner.complete(prompt)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(exchange.to_document(), handle, indent=2, sort_keys=True)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        return self._record(exchange)


def complete(provider: Provider, prompt: str) -> Exchange:
    return provider.complete(prompt)


def accounting_report(exchanges: Sequence[Exchange]) -> Dict[str, Dict[str, Any]]:
    """Exact per-provider totals over an exchange list."""
    report: Dict[str, Dict[str, Any]] = {}
    for exchange in exchanges:
        entry = report.setdefault(exchange.provider_id, {
            "calls": 0,
            "input_tokens": 0,
            "output_tokens": 0,
            "wall_seconds": 0.0,
            "estimated": False,
        })
        entry["calls"] += 1
        entry["input_tokens"] += exchange.input_tokens
        entry["output_tokens"] += exchange.output_tokens
        entry["wall_seconds"] += exchange.latency
        entry["estimated"] = entry["estimated"] or exchange.estimated
    return report


# ── configuration ───────────────────────────────────────────────────────

def _build_one(entry: Mapping[str, Any], base_dir: Optional[Path]) -> Provider:
    kind = entry.get("kind")
    provider_id = entry.get("id")
    if not provider_id or not isinstance(provider_id, str):
        raise ConfigurationError("provider entry needs a string 'id'")
    common = {}
    for key in ("attempts", "rpm_limit", "max_concurrency"):
        if key in entry:
            common[key] = entry[key]
    if "backoff" in entry:
        common["backoff"] = entry["backoff"]
    if kind == "scripted":
        responses = entry.get("responses")
        if responses is None:
            script = entry.get("script")
            if not script:
                raise ConfigurationError(
                    f"scripted provider {provider_id!r} needs 'responses' or 'script'"
                )
            script_path = Path(script)
            if base_dir is not None and not script_path.is_absolute():
                script_path = base_dir / script_path
            with open(script_path, "r", encoding="utf-8") as handle:
                responses = json.load(handle)
        if not isinstance(responses, list):
            raise ConfigurationError(
                f"scripted provider {provider_id!r}: responses must be a JSON array"
            )
        return ScriptedProvider(provider_id, responses,
                                model=entry.get("model", "scripted"), **common)
    if kind == "http-chat":
        endpoint = entry.get("endpoint")
        model = entry.get("model")
        if not endpoint or not model:
            raise ConfigurationError(
                f"http-chat provider {provider_id!r} needs 'endpoint' and 'model'"
            )
        return HttpChatProvider(
            provider_id, model, endpoint,
            auth_env=entry.get("auth_env"),
            temperature=entry.get("temperature", 0.0),
            max_tokens=entry.get("max_tokens", 2048),
            timeout=entry.get("timeout", 120.0),
            extra_headers=entry.get("headers"),
            **common,
        )
    raise ConfigurationError(f"unknown provider kind: {kind!r}")


def load_providers(
    config: Sequence[Mapping[str, Any]],
    base_dir: Optional[Union[str, Path]] = None,
) -> Dict[str, Provider]:
    """Instantiate the provider array of a configuration file.

    ``cached`` entries reference another provider by id through ``inner``
    and may appear in any order; relative script/cache paths resolve
    against ``base_dir``.
    """
    base = Path(base_dir) if base_dir is not None else None
    providers: Dict[str, Provider] = {}
    pending: List[Mapping[str, Any]] = []
    seen_ids = set()
    for entry in config:
        entry_id = entry.get("id")
        if entry_id in seen_ids:
            raise ConfigurationError(f"duplicate provider id: {entry_id!r}")
        seen_ids.add(entry_id)
        if entry.get("kind") == "cached":
            pending.append(entry)
        else:
            providers[entry["id"]] = _build_one(entry, base)
    for entry in pending:
        inner_id = entry.get("inner")
        if inner_id not in providers:
            raise ConfigurationError(
                f"cached provider {entry.get('id')!r}: unknown inner provider {inner_id!r}"
            )
        cache_dir = entry.get("cache_dir")
        if not cache_dir:
            raise ConfigurationError(
                f"cached provider {entry.get('id')!r} needs 'cache_dir'"
            )
        cache_path = Path(cache_dir)
        if base is not None and not cache_path.is_absolute():
            cache_path = base / cache_path
        providers[entry["id"]] = CachedProvider(entry["id"], providers[inner_id], cache_path)
    return providers
