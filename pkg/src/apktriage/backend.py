"""Chat-completion backends: HTTP wire client, deterministic mock, cache.

Any object with ``complete(request) -> ModelResponse`` serves as a
backend. ``HttpBackend`` speaks the JSON chat-completions wire format
against a configurable endpoint; ``MockBackend`` is a pure keyword-rule
engine that makes the whole pipeline bit-deterministic offline; and
``CachingBackend`` wraps either with a content-addressed directory cache.

Cache entries store the full request (system and user text) alongside the
response so a cache directory doubles as an auditable prompt log; entry
corruption is treated as a miss, never a failure.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import AuthFailure, BackendUnavailable, ResponseMalformed
from .verdict import DEFAULT_TABLE, parse_tags

STOP = "STOP"
LENGTH = "LENGTH"
ERROR = "ERROR"

_INPUT_MARKER = "\n=== INPUT ===\n"


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    finish_reason: str = STOP
    from_cache: bool = False
    latency_ms: float = 0.0


def cache_key(request: ChatRequest, template_version: str, scope: str) -> str:
    """64-char hex key over everything that shapes the response."""
    payload = json.dumps(
        {
            "model_id": request.model_id,
            "scope": scope,
            "template_version": template_version,
            "system_text": request.system_text,
            "user_text": request.user_text,
            "temperature": request.temperature,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per key under a cache directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            return None  # corrupt or unreadable: miss, overwritten on next put
        if not isinstance(entry, dict) or "response_text" not in entry:
            return None
        return entry

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_text(json.dumps(entry, sort_keys=True, indent=1) + "\n",
                           encoding="utf-8")
            tmp.replace(path)
        except OSError:
            pass  # cache IO failures are non-fatal by contract


class CachingBackend:
    """Cache-first wrapper; scope and template version are fixed per run
    and complete the cache key."""

    def __init__(self, inner, cache: ResponseCache | None,
                 scope: str, template_version: str):
        self.inner = inner
        self.cache = cache
        self.scope = scope
        self.template_version = template_version
        self._lock = threading.Lock()
        self.prompt_count = 0
        self.cached_count = 0

    def key_for(self, request: ChatRequest) -> str:
        return cache_key(request, self.template_version, self.scope)

    def complete(self, request: ChatRequest) -> ModelResponse:
        key = self.key_for(request)
        if self.cache is not None:
            entry = self.cache.get(key)
            if entry is not None:
                with self._lock:
                    self.prompt_count += 1
                    self.cached_count += 1
                return ModelResponse(
                    text=entry["response_text"],
                    finish_reason=entry.get("finish_reason", STOP),
                    from_cache=True,
                )
        response = self.inner.complete(request)
        with self._lock:
            self.prompt_count += 1
        if self.cache is not None:
            self.cache.put(key, {
                "key": key,
                "model_id": request.model_id,
                "scope": self.scope,
                "template_version": self.template_version,
                "temperature": request.temperature,
                "system_text": request.system_text,
                "user_text": request.user_text,
                "response_text": response.text,
                "finish_reason": response.finish_reason,
                "created_at": datetime.now(timezone.utc).isoformat(),
            })
        return response


class HttpBackend:
    """POSTs the chat-completions JSON shape and maps HTTP status codes:
    401/403 fail fast, 429/5xx/timeouts retry with exponential backoff,
    anything else 4xx is a malformed exchange."""

    def __init__(self, endpoint_url: str, api_key: str,
                 max_attempts: int = 5, backoff_base: float = 1.0,
                 backoff_cap: float = 30.0, timeout: float = 120.0,
                 max_in_flight: int = 4, post=None, sleep=time.sleep):
        self.endpoint_url = endpoint_url
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self._post = post or requests.post
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def backoff_delays(self) -> list[float]:
        return [min(self.backoff_base * (2 ** i), self.backoff_cap)
                for i in range(self.max_attempts - 1)]

    def complete(self, request: ChatRequest) -> ModelResponse:
        body = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}",
                   "Content-Type": "application/json"}
        delays = self.backoff_delays()
        last_problem = "no attempt made"
        started = time.monotonic()
        for attempt in range(self.max_attempts):
            try:
                with self._gate:
                    resp = self._post(self.endpoint_url, json=body,
                                      headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_problem = f"transport error: {exc}"
            else:
                status = getattr(resp, "status_code", None)
                if status == 200:
                    return self._parse(resp, started)
                if status in (401, 403):
                    raise AuthFailure(f"endpoint rejected credential (HTTP {status})")
                if status == 429 or (status is not None and status >= 500):
                    last_problem = f"HTTP {status}"
                else:
                    raise ResponseMalformed(f"unexpected HTTP {status}")
            if attempt < self.max_attempts - 1:
                self._sleep(delays[attempt])
        raise BackendUnavailable(
            f"backend still failing after {self.max_attempts} attempts ({last_problem})")

    @staticmethod
    def _parse(resp, started: float) -> ModelResponse:
        try:
            data = resp.json()
        except ValueError as exc:
            raise ResponseMalformed(f"response body is not JSON: {exc}") from exc
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ResponseMalformed(f"response missing choices[0].message.content") from exc
        if not isinstance(text, str):
            raise ResponseMalformed("message content is not a string")
        reason = {"stop": STOP, "length": LENGTH}.get(
            choice.get("finish_reason"), STOP)
        return ModelResponse(text=text, finish_reason=reason,
                             latency_ms=(time.monotonic() - started) * 1000.0)


# -- deterministic mock -------------------------------------------------------

_SECTION_RE = re.compile(r"^### (.+)$", re.MULTILINE)

# rule -> (trigger keywords, tags awarded). A rule fires when any listed
# keyword appears in the scanned block; the exec rule additionally needs
# the literal "su" string constant.
_DYNLOAD_KEYWORDS = ("DexClassLoader", "loadClass")
_ROOT_KEYWORDS = ("RootPermApi", "/system/bin")
_EXEC_KEYWORDS = ("Runtime.exec", ".exec(")
_REFLECT_KEYWORDS = ("getMethod", "setAccessible", "java.lang.reflect")


def _matched(block: str, keywords: tuple[str, ...]) -> list[str]:
    return [kw for kw in keywords if kw in block]


def _rule_tags(block: str) -> tuple[list[str], list[str]]:
    """Returns (tags, matched keyword literals) for one text block."""
    tags: list[str] = []
    hits: list[str] = []
    dyn = _matched(block, _DYNLOAD_KEYWORDS)
    if dyn:
        tags.append("Dynamic Code Execution")
        hits += dyn
    root = _matched(block, _ROOT_KEYWORDS)
    execs = _matched(block, _EXEC_KEYWORDS)
    su = '"su"' in block
    if root or (execs and su):
        tags += ["Rooting", "Privilege Escalation and Control"]
        hits += root + execs + (['"su"'] if su else [])
    refl = _matched(block, _REFLECT_KEYWORDS)
    if refl:
        tags.append("Obfuscated Code")
        hits += refl
    seen: set[str] = set()
    tags = [t for t in tags if not (t in seen or seen.add(t))]
    seen = set()
    hits = [h for h in hits if not (h in seen or seen.add(h))]
    return tags, hits


def _split_sections(text: str) -> list[tuple[str, str]]:
    matches = list(_SECTION_RE.finditer(text))
    out = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        out.append((m.group(1).strip(), text[m.end():end]))
    return out


class MockBackend:
    """Keyword-rule completion engine standing in for a hosted model.

    Only the material after the ``=== INPUT ===`` marker is scanned, so
    injected knowledge and few-shot examples never trigger rules. Output
    follows the delimiter format the prompts demand, which keeps the
    pipeline deterministic end to end.
    """

    def complete(self, request: ChatRequest) -> ModelResponse:
        prompt = request.user_text
        instructions, marker, input_text = prompt.rpartition(_INPUT_MARKER)
        if not marker:
            instructions, input_text = "", prompt
        if "(MALWARE)" in instructions:
            text = self._package_reply(input_text)
        elif "ALIAS:" in instructions:
            text = self._class_reply(input_text)
        else:
            text = self._function_reply(input_text)
        return ModelResponse(text=text, finish_reason=STOP)

    @staticmethod
    def _describe(tags: list[str], hits: list[str]) -> str:
        if not tags:
            return "Performs routine application logic; no flagged indicators."
        joined = ", ".join(hits)
        return f"Flagged behavior around: {joined}."

    def _function_reply(self, input_text: str) -> str:
        sections = _split_sections(input_text)
        parts = []
        for signature, body in sections:
            tags, hits = _rule_tags(body)
            summary = self._describe(tags, hits)
            tag_str = "".join(f"({t})" for t in tags)
            parts.append(f"### {signature}\n{summary} {tag_str}".rstrip())
        return "\n".join(parts)

    def _class_reply(self, input_text: str) -> str:
        tags, hits = _rule_tags(input_text)
        summary = self._describe(tags, hits)
        tag_str = "".join(f"({t})" for t in tags)
        return f"{summary} {tag_str}".rstrip()

    def _package_reply(self, input_text: str) -> str:
        verdict = parse_tags(input_text, DEFAULT_TABLE)
        malicious = sorted(verdict.tags)
        if malicious:
            tag_str = "".join(f"({t})" for t in malicious)
            return ("The member classes exhibit the flagged activities listed below. "
                    f"The presence of these activities categorizes this package as (MALWARE){tag_str}")
        return ("The member classes show routine application behavior with no "
                "flagged activities. (BENIGN)")
