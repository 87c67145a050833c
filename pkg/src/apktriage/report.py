"""Summary-tree model and the persisted report schema.

A report is a flat, id-keyed node list plus a verdict; the tree is
reconstructible through children references. Serialization is canonical
JSON (sorted keys, fixed indent) so identical analyses produce
byte-identical files. Nothing run-specific beyond the echoed
configuration (scope, model id, template version) enters the document:
no paths, no timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .container import SampleId
from .errors import SchemaMismatch
from .verdict import Verdict

SCHEMA_VERSION = "1"

FUNCTION = "FUNCTION"
CLASS = "CLASS"
PACKAGE = "PACKAGE"


@dataclass
class SummaryNode:
    node_id: str
    tier: str                                  # FUNCTION | CLASS | PACKAGE
    subject_name: str
    text: str
    tags: tuple[str, ...] = ()                 # canonical, sorted
    noncanonical: tuple[str, ...] = ()         # verbatim, sorted
    children: tuple[str, ...] = ()
    alias: str | None = None
    source_ref: tuple[int, int, int] | None = None
    prompt_key: str | None = None
    code_text: str | None = None               # FUNCTION tier: rendered bytecode


@dataclass
class AnalysisReport:
    sample: SampleId
    scope: str
    model_id: str
    template_version: str
    nodes: dict[str, SummaryNode] = field(default_factory=dict)
    package_ids: tuple[str, ...] = ()
    verdict: Verdict = Verdict("UNKNOWN")
    warnings: list[str] = field(default_factory=list)
    stats: dict[str, int] = field(default_factory=dict)
    incomplete: bool = False


def _node_to_record(node: SummaryNode) -> dict:
    record: dict = {
        "id": node.node_id,
        "tier": node.tier,
        "subject": node.subject_name,
        "text": node.text,
        "tags": sorted(node.tags),
        "noncanonical": sorted(node.noncanonical),
        "children": list(node.children),
    }
    if node.alias is not None:
        record["alias"] = node.alias
    if node.source_ref is not None:
        record["source_ref"] = list(node.source_ref)
    if node.prompt_key is not None:
        record["prompt_key"] = node.prompt_key
    if node.code_text is not None:
        record["code_text"] = node.code_text
    return record


def _record_to_node(record: dict) -> SummaryNode:
    try:
        return SummaryNode(
            node_id=record["id"],
            tier=record["tier"],
            subject_name=record["subject"],
            text=record["text"],
            tags=tuple(record["tags"]),
            noncanonical=tuple(record.get("noncanonical", [])),
            children=tuple(record["children"]),
            alias=record.get("alias"),
            source_ref=tuple(record["source_ref"]) if "source_ref" in record else None,
            prompt_key=record.get("prompt_key"),
            code_text=record.get("code_text"),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"bad node record: {exc}") from exc


def to_document(report: AnalysisReport) -> dict:
    sample: dict = {"digest": report.sample.digest}
    if report.sample.label_hint is not None:
        sample["label_hint"] = report.sample.label_hint
    return {
        "schema_version": SCHEMA_VERSION,
        "sample": sample,
        "config": {
            "scope": report.scope,
            "model_id": report.model_id,
            "template_version": report.template_version,
        },
        "nodes": [_node_to_record(report.nodes[nid]) for nid in sorted(report.nodes)],
        "package_ids": list(report.package_ids),
        "verdict": {
            "label": report.verdict.label,
            "tags": sorted(report.verdict.tags),
            "noncanonical": sorted(report.verdict.noncanonical),
        },
        "warnings": list(report.warnings),
        "stats": dict(sorted(report.stats.items())),
        "incomplete": report.incomplete,
    }


def from_document(doc: dict) -> AnalysisReport:
    if not isinstance(doc, dict):
        raise SchemaMismatch("report document must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"schema_version {doc.get('schema_version')!r} unsupported "
            f"(expected {SCHEMA_VERSION!r})")
    try:
        nodes = {rec["id"]: _record_to_node(rec) for rec in doc["nodes"]}
        if len(nodes) != len(doc["nodes"]):
            raise SchemaMismatch("duplicate node ids")
        package_ids = tuple(doc["package_ids"])
        verdict = Verdict(
            label=doc["verdict"]["label"],
            tags=frozenset(doc["verdict"]["tags"]),
            noncanonical=frozenset(doc["verdict"].get("noncanonical", [])),
        )
        sample = SampleId(digest=doc["sample"]["digest"],
                          label_hint=doc["sample"].get("label_hint"))
        config = doc["config"]
        report = AnalysisReport(
            sample=sample,
            scope=config["scope"],
            model_id=config["model_id"],
            template_version=config["template_version"],
            nodes=nodes,
            package_ids=package_ids,
            verdict=verdict,
            warnings=list(doc.get("warnings", [])),
            stats=dict(doc.get("stats", {})),
            incomplete=bool(doc.get("incomplete", False)),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"report document malformed: {exc}") from exc
    for nid in package_ids:
        if nid not in nodes:
            raise SchemaMismatch(f"package id {nid} missing from node list")
    for node in nodes.values():
        for child in node.children:
            if child not in nodes:
                raise SchemaMismatch(f"node {node.node_id} references missing child {child}")
    return report


def dumps(report: AnalysisReport) -> str:
    return json.dumps(to_document(report), indent=2, sort_keys=True) + "\n"


def write_report(report: AnalysisReport, path: str | Path) -> None:
    Path(path).write_text(dumps(report), encoding="utf-8")


def read_report(path: str | Path) -> AnalysisReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read report {path}: {exc}") from exc
    return from_document(doc)
