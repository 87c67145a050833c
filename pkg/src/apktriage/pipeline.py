"""Run configuration and the end-to-end single-sample pipeline."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .backend import CachingBackend, HttpBackend, MockBackend, ResponseCache
from .container import SampleId, extract_dex, open_apk, redacted_identity
from .dexfile import parse_dex
from .disasm import build_units
from .errors import TriageError
from .prompts import MALWARE_SCOPED, PromptEngine, TierBudgets
from .report import AnalysisReport
from .summarize import SummaryEngine

HTTP = "http"
MOCK = "mock"

API_KEY_ENV = "ANALYZER_API_KEY"
ENDPOINT_ENV = "ANALYZER_ENDPOINT"
MODEL_ENV = "ANALYZER_MODEL"


@dataclass
class RunConfig:
    scope: str = MALWARE_SCOPED
    backend: str = MOCK
    endpoint_url: str | None = None
    model_id: str = "offline-mock"
    budgets: TierBudgets = field(default_factory=TierBudgets)
    concurrency: int = 4
    cache_dir: str | Path | None = None
    template_dir: str | Path | None = None

    def validate(self) -> None:
        if self.backend == HTTP:
            if not self.endpoint_url:
                raise TriageError("HTTP backend requires an endpoint URL")
            if not os.environ.get(API_KEY_ENV):
                raise TriageError(
                    f"HTTP backend requires the {API_KEY_ENV} environment variable")


def build_prompt_engine(config: RunConfig) -> PromptEngine:
    return PromptEngine(template_dir=config.template_dir, budgets=config.budgets)


def build_backend(config: RunConfig, template_version: str) -> CachingBackend:
    """Fresh caching wrapper (per-sample counters) over the configured inner
    backend; the cache directory, if any, is shared."""
    if config.backend == HTTP:
        config.validate()
        inner = HttpBackend(
            endpoint_url=config.endpoint_url,
            api_key=os.environ[API_KEY_ENV],
            max_in_flight=max(1, config.concurrency),
        )
    else:
        inner = MockBackend()
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return CachingBackend(inner, cache, scope=config.scope,
                          template_version=template_version)


def load_units(apk_path: str | Path, warnings: list[str]):
    """APK path -> (redacted sample id, package units)."""
    archive = open_apk(apk_path)
    dex_files = []
    for index in range(len(archive.dex_entries)):
        raw = extract_dex(archive, index)
        dex = parse_dex(raw)
        warnings.extend(f"dex {index}: {w}" for w in dex.warnings)
        if not dex.header_checksum_ok:
            warnings.append(f"dex {index}: stored checksum does not match content")
        dex_files.append(dex)
    units = build_units(dex_files, warnings)
    return redacted_identity(archive), units


def analyze_apk(apk_path: str | Path, config: RunConfig,
                prompt_engine: PromptEngine | None = None,
                sample: SampleId | None = None) -> AnalysisReport:
    """Full pipeline for one APK: container, parse, render, summarize."""
    config.validate()
    engine = prompt_engine if prompt_engine is not None else build_prompt_engine(config)
    warnings: list[str] = []
    identity, units = load_units(apk_path, warnings)
    if sample is not None:
        identity = sample
    backend = build_backend(config, engine.version)
    summarizer = SummaryEngine(
        prompts=engine,
        backend=backend,
        scope=config.scope,
        model_id=config.model_id,
        concurrency=config.concurrency,
    )
    report = summarizer.summarize_apk(units, identity)
    report.warnings[:0] = warnings
    return report
