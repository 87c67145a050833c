"""Labeled-corpus evaluation: confusion matrix and derived metrics.

BENIGN is the positive class throughout, matching the reporting
orientation this tool standardizes on (rows actual, columns predicted).
UNKNOWN predictions — unreadable samples, pipelines without a sentinel —
count against accuracy as misses for their true class but stay out of
precision/recall, reported separately.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .container import SampleId
from .errors import EmptyCorpus, LengthMismatch, TriageError
from .pipeline import RunConfig, analyze_apk, build_prompt_engine
from .verdict import BENIGN, MALWARE, UNKNOWN

LABELS = (BENIGN, MALWARE)


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[tuple[str, str], ...]    # (resolved path, truth label)
    version: str = "1"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int   # benign predicted benign
    fn: int   # benign predicted malware
    fp: int   # malware predicted benign
    tn: int   # malware predicted malware
    unknowns: int


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float

    def rounded(self, places: int = 3) -> "Metrics":
        return Metrics(round(self.accuracy, places), round(self.precision, places),
                       round(self.recall, places))


@dataclass
class EvalReport:
    scope: str
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    per_sample: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    corpus_size: int = 0


def load_manifest(path: str | Path) -> CorpusManifest:
    """CSV with a required ``path,label`` header; paths resolve relative
    to the manifest's directory."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise TriageError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["path", "label"]:
        raise TriageError("manifest must start with the header line 'path,label'")
    entries = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise TriageError(f"manifest line {lineno}: expected 'path,label'")
        rel, label = row[0].strip(), row[1].strip().upper()
        if label not in LABELS:
            raise TriageError(f"manifest line {lineno}: label must be BENIGN or MALWARE")
        if rel in seen:
            raise TriageError(f"manifest line {lineno}: duplicate path {rel!r}")
        seen.add(rel)
        resolved = rel if Path(rel).is_absolute() else str(path.parent / rel)
        entries.append((resolved, label))
    if not entries:
        raise EmptyCorpus("manifest lists no samples")
    return CorpusManifest(entries=tuple(entries))


def confusion(truths: list[str], predictions: list[str]) -> ConfusionCounts:
    """2x2 counts with BENIGN positive; UNKNOWN predictions tallied apart."""
    if len(truths) != len(predictions):
        raise LengthMismatch(
            f"{len(truths)} truths vs {len(predictions)} predictions")
    tp = fn = fp = tn = unknowns = 0
    for truth, pred in zip(truths, predictions):
        if pred == UNKNOWN:
            unknowns += 1
        elif truth == BENIGN and pred == BENIGN:
            tp += 1
        elif truth == BENIGN and pred == MALWARE:
            fn += 1
        elif truth == MALWARE and pred == BENIGN:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fn, fp, tn, unknowns)


def metrics(counts: ConfusionCounts, corpus_size: int,
            warnings: list[str] | None = None) -> Metrics:
    """accuracy = (TP+TN)/corpus_size; precision/recall over the benign
    (positive) class, 0 with a warning when a denominator is empty."""
    if corpus_size <= 0:
        raise ValueError("corpus_size must be positive")
    accuracy = (counts.tp + counts.tn) / corpus_size
    if counts.tp + counts.fp:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        if warnings is not None:
            warnings.append("precision undefined (no benign predictions); reported as 0")
    if counts.tp + counts.fn:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        if warnings is not None:
            warnings.append("recall undefined (no benign truths); reported as 0")
    return Metrics(accuracy, precision, recall)


def run_corpus(manifest: CorpusManifest, config: RunConfig,
               concurrency: int | None = None) -> EvalReport:
    """Analyze every sample independently; failures become UNKNOWN
    predictions and never abort the run."""
    if not manifest.entries:
        raise EmptyCorpus("manifest lists no samples")
    bound = concurrency if concurrency is not None else config.concurrency
    prompt_engine = build_prompt_engine(config)

    def run_one(indexed):
        index, (sample_path, truth) = indexed
        try:
            report = analyze_apk(sample_path, config, prompt_engine=prompt_engine,
                                 sample=None)
            digest = report.sample.digest
            prediction = report.verdict.label
            warn = [f"sample {index}: {w}" for w in report.warnings
                    if "checksum" in w or "failed" in w]
        except TriageError as exc:
            digest = None
            prediction = UNKNOWN
            warn = [f"sample {index}: {exc}"]
        return index, digest, truth, prediction, warn

    indexed = list(enumerate(manifest.entries))
    if bound > 1 and len(indexed) > 1:
        with ThreadPoolExecutor(max_workers=bound) as pool:
            rows = list(pool.map(run_one, indexed))
    else:
        rows = [run_one(item) for item in indexed]
    rows.sort(key=lambda r: r[0])

    warnings: list[str] = []
    per_sample = []
    truths, predictions = [], []
    for index, digest, truth, prediction, warn in rows:
        warnings.extend(warn)
        per_sample.append({
            "index": index,
            "sample": SampleId(digest=digest or "unreadable",
                               label_hint=truth).serialized(),
            "truth": truth,
            "prediction": prediction,
        })
        truths.append(truth)
        predictions.append(prediction)

    counts = confusion(truths, predictions)
    m = metrics(counts, len(truths), warnings).rounded()
    return EvalReport(
        scope=config.scope,
        counts=counts,
        accuracy=m.accuracy,
        precision=m.precision,
        recall=m.recall,
        per_sample=per_sample,
        warnings=warnings,
        corpus_size=len(truths),
    )


def confusion_table(report: EvalReport) -> str:
    """Rows are actual classes, columns predicted, benign-positive layout."""
    c = report.counts
    unknown_b = sum(1 for s in report.per_sample
                    if s["truth"] == BENIGN and s["prediction"] == UNKNOWN)
    unknown_m = report.counts.unknowns - unknown_b
    lines = [
        f"{'':>16}  {'Benign (P)':>12}  {'Malware (N)':>12}  {'Unknown':>8}",
        f"{'Benign actual':>16}  {c.tp:>12}  {c.fn:>12}  {unknown_b:>8}",
        f"{'Malware actual':>16}  {c.fp:>12}  {c.tn:>12}  {unknown_m:>8}",
        "",
        f"accuracy  {report.accuracy:.3f}",
        f"precision {report.precision:.3f}",
        f"recall    {report.recall:.3f}",
    ]
    return "\n".join(lines)


def eval_report_document(report: EvalReport) -> dict:
    c = report.counts
    return {
        "schema_version": "1",
        "scope": report.scope,
        "corpus_size": report.corpus_size,
        "counts": {"tp": c.tp, "fn": c.fn, "fp": c.fp, "tn": c.tn,
                   "unknowns": c.unknowns},
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "per_sample": report.per_sample,
        "warnings": report.warnings,
    }
