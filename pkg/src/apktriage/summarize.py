"""Hierarchical summarization chain: functions -> classes -> packages -> verdict.

Function texts are batched greedily (first-fit, deterministic method
order) under the function-tier budget; responses are split on the
section delimiter and matched back by signature, with one individual
retry for anything unmatched. Class summaries aggregate function nodes;
package summaries aggregate class nodes, folding through chunk prompts
when the combined input exceeds the package budget. The final verdict is
deterministic aggregation, not another model call: any package carrying
the MALWARE sentinel makes the sample MALWARE, all-BENIGN makes it
BENIGN, anything else is UNKNOWN.

Classes are summarized concurrently up to the configured bound; results
are assembled in deterministic order regardless of completion order, so
a mock-backed run is byte-stable.
"""

from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor

from .backend import LENGTH, ChatRequest, cache_key
from .container import SampleId
from .disasm import ClassUnit, FunctionUnit, PackageUnit
from .prompts import (
    ALIAS_PREFIX,
    CLASS,
    FUNCTION,
    PACKAGE,
    PromptEngine,
    PromptInstance,
    TRUNCATION_MARKER,
)
from .report import AnalysisReport, SummaryNode
from .verdict import BENIGN, MALWARE, UNKNOWN, Verdict, parse_tags

_SECTION_RE = re.compile(r"^### (.+)$", re.MULTILINE)

UNAVAILABLE_TEXT = "summary unavailable"
NO_CODE_TEXT = "no executable code"


def _split_sections(text: str) -> list[tuple[str, str]]:
    matches = list(_SECTION_RE.finditer(text))
    out = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        out.append((m.group(1).strip(), text[m.end():end].strip()))
    return out


def _truncate_lines(text: str, allowed_bytes: int, keep_first: int = 0) -> str:
    """Cut at a line boundary under the byte budget, appending a marker.

    ``keep_first`` lines survive unconditionally (method header lines)."""
    lines = text.splitlines()
    keep = lines[:keep_first]
    used = sum(len(l.encode("utf-8")) + 1 for l in keep) + len(TRUNCATION_MARKER) + 1
    for line in lines[keep_first:]:
        cost = len(line.encode("utf-8")) + 1
        if used + cost > allowed_bytes:
            break
        keep.append(line)
        used += cost
    keep.append(TRUNCATION_MARKER)
    return "\n".join(keep)


def function_node_id(unit: FunctionUnit) -> str:
    dex, _, method_idx = unit.source_ref
    return f"fn:{dex}:{method_idx}"


def class_node_id(unit: ClassUnit) -> str:
    return f"cls:{unit.original_name}"


def package_node_id(unit: PackageUnit) -> str:
    return f"pkg:{unit.package_name}"


class SummaryEngine:
    """Drives the tiered chain for one scope/backend/model configuration."""

    def __init__(self, prompts: PromptEngine, backend, scope: str,
                 model_id: str = "offline-mock", concurrency: int = 4):
        self.prompts = prompts
        self.backend = backend
        self.scope = scope
        self.model_id = model_id
        self.concurrency = max(1, concurrency)
        self._lock = threading.Lock()
        self._tokens_issued = 0
        self._prompts_issued = 0

    # -- plumbing -------------------------------------------------------------

    def _complete(self, prompt: PromptInstance, warnings: list[str]) -> tuple[str, str]:
        """Returns (cache key, response text)."""
        request = ChatRequest(model_id=self.model_id,
                              system_text=prompt.system_text,
                              user_text=prompt.text)
        key = cache_key(request, prompt.template_version, self.scope)
        response = self.backend.complete(request)
        with self._lock:
            self._tokens_issued += prompt.estimated_tokens
            self._prompts_issued += 1
        if response.finish_reason == LENGTH:
            warnings.append(f"{prompt.tier} response hit the output-token limit")
        return key, response.text

    def _budget_bytes(self, tier: str) -> int:
        return self.prompts.budgets.for_tier(tier) * 4

    # -- function tier ----------------------------------------------------------

    def _fitted_body(self, unit: FunctionUnit, overhead: int, budget: int,
                     warnings: list[str]) -> str | None:
        """Truncated rendering when the function alone overflows the budget."""
        wrapper = len(self.prompts.function_section(unit, "").encode("utf-8")) + 1
        if overhead + wrapper + len(unit.rendered_text.encode("utf-8")) <= budget:
            return None
        allowed = max(budget - overhead - wrapper - 8, 64)
        warnings.append(
            f"function {unit.qualified_name} exceeded the prompt budget; truncated")
        return _truncate_lines(unit.rendered_text, allowed, keep_first=2)

    def _plan_function_batches(
        self, class_unit: ClassUnit, warnings: list[str],
    ) -> list[list[tuple[FunctionUnit, str | None]]]:
        """Greedy first-fit batches of (unit, optional truncated body)."""
        overhead = self.prompts.prompt_overhead_bytes(
            self.scope, FUNCTION, class_unit.original_name)
        budget = self._budget_bytes(FUNCTION)
        batches: list[list[tuple[FunctionUnit, str | None]]] = []
        current: list[tuple[FunctionUnit, str | None]] = []
        used = overhead
        for unit in class_unit.functions:
            body = self._fitted_body(unit, overhead, budget, warnings)
            section = self.prompts.function_section(unit, body)
            cost = len(section.encode("utf-8")) + 1
            if used + cost > budget and current:
                batches.append(current)
                current, used = [], overhead
            current.append((unit, body))
            used += cost
        if current:
            batches.append(current)
        return batches

    def summarize_functions(self, class_unit: ClassUnit,
                            warnings: list[str] | None = None) -> list[SummaryNode]:
        """One FUNCTION node per code-bearing method of the class."""
        if not class_unit.functions:
            raise ValueError("summarize_functions requires a class with functions")
        warnings = warnings if warnings is not None else []
        results: dict[str, tuple[str, str]] = {}   # signature -> (text, prompt key)
        for batch in self._plan_function_batches(class_unit, warnings):
            units = [u for u, _ in batch]
            prompt = self.prompts.render_function_prompt(
                self.scope, class_unit.original_name, units,
                section_texts=[b if b is not None else u.rendered_text
                               for u, b in batch])
            key, text = self._complete(prompt, warnings)
            known = {u.signature for u in units}
            for signature, body in _split_sections(text):
                if signature in known:
                    results[signature] = (body, key)
                else:
                    warnings.append(
                        f"unmatched response section {signature!r} for class "
                        f"{class_unit.original_name}")
        # one individual retry for anything the batch reply skipped
        for unit in class_unit.functions:
            if unit.signature in results:
                continue
            overhead = self.prompts.prompt_overhead_bytes(
                self.scope, FUNCTION, class_unit.original_name)
            body = self._fitted_body(unit, overhead, self._budget_bytes(FUNCTION), warnings)
            prompt = self.prompts.render_function_prompt(
                self.scope, class_unit.original_name, [unit],
                section_texts=[body if body is not None else unit.rendered_text])
            key, text = self._complete(prompt, warnings)
            for signature, body in _split_sections(text):
                if signature == unit.signature:
                    results[signature] = (body, key)
        nodes = []
        for unit in class_unit.functions:
            if unit.signature in results:
                body, key = results[unit.signature]
            else:
                warnings.append(f"no summary for {unit.qualified_name}; marked unavailable")
                body, key = UNAVAILABLE_TEXT, None
            verdict = parse_tags(body, warnings=warnings)
            nodes.append(SummaryNode(
                node_id=function_node_id(unit),
                tier=FUNCTION,
                subject_name=unit.signature,
                text=body,
                tags=tuple(sorted(verdict.tags)),
                noncanonical=tuple(sorted(verdict.noncanonical)),
                children=(),
                source_ref=unit.source_ref,
                prompt_key=key,
                code_text=unit.rendered_text,
            ))
        return nodes

    # -- class tier -------------------------------------------------------------

    def summarize_class(self, class_unit: ClassUnit,
                        function_nodes: list[SummaryNode],
                        warnings: list[str] | None = None) -> SummaryNode:
        """One CLASS node aggregating the class's function nodes.

        A class with no executable code produces a fixed node without a
        backend call.
        """
        warnings = warnings if warnings is not None else []
        children = tuple(n.node_id for n in function_nodes)
        if not function_nodes:
            return SummaryNode(
                node_id=class_node_id(class_unit),
                tier=CLASS,
                subject_name=class_unit.original_name,
                text=NO_CODE_TEXT,
                children=(),
            )
        prompt = self._render_class_prompt_fitted(class_unit, function_nodes, warnings)
        key, text = self._complete(prompt, warnings)
        alias = None
        kept_lines = []
        for line in text.splitlines():
            if alias is None and line.strip().startswith(ALIAS_PREFIX):
                alias = line.strip()[len(ALIAS_PREFIX):].strip() or None
                continue
            kept_lines.append(line)
        body = "\n".join(kept_lines).strip()
        verdict = parse_tags(body, warnings=warnings)
        return SummaryNode(
            node_id=class_node_id(class_unit),
            tier=CLASS,
            subject_name=class_unit.original_name,
            text=body,
            tags=tuple(sorted(verdict.tags)),
            noncanonical=tuple(sorted(verdict.noncanonical)),
            children=children,
            alias=alias,
            prompt_key=key,
        )

    def _render_class_prompt_fitted(self, class_unit: ClassUnit,
                                    function_nodes: list[SummaryNode],
                                    warnings: list[str]) -> PromptInstance:
        overhead = self.prompts.prompt_overhead_bytes(
            self.scope, CLASS, class_unit.original_name)
        budget = self._budget_bytes(CLASS)
        sections = "\n".join(
            self.prompts.summary_section(n) for n in function_nodes)
        if overhead + len(sections.encode("utf-8")) > budget:
            warnings.append(
                f"class {class_unit.original_name} summaries exceeded the prompt "
                "budget; sections block truncated")
            sections = _truncate_lines(sections, max(budget - overhead - 8, 64))
        return self.prompts.render_class_prompt(
            self.scope, class_unit.original_name, function_nodes,
            raw_sections=[sections])

    # -- package tier -------------------------------------------------------------

    def summarize_package(self, package_unit: PackageUnit,
                          class_nodes: list[SummaryNode],
                          warnings: list[str] | None = None) -> SummaryNode:
        """One PACKAGE node carrying the sentinel verdict and tags.

        Oversized inputs are split into chunk prompts whose replies are
        folded through one final prompt; the node's children always list
        every class node.
        """
        warnings = warnings if warnings is not None else []
        overhead = self.prompts.prompt_overhead_bytes(
            self.scope, PACKAGE, package_unit.package_name)
        budget = self._budget_bytes(PACKAGE)
        chunks: list[list[SummaryNode]] = []
        current: list[SummaryNode] = []
        used = overhead
        for node in class_nodes:
            cost = len(self.prompts.summary_section(node).encode("utf-8")) + 1
            if used + cost > budget and current:
                chunks.append(current)
                current, used = [], overhead
            current.append(node)
            used += cost
        if current:
            chunks.append(current)

        if len(chunks) == 1:
            prompt = self.prompts.render_package_prompt(
                self.scope, package_unit.package_name, chunks[0])
            key, text = self._complete(prompt, warnings)
        else:
            part_sections = []
            for i, chunk in enumerate(chunks):
                prompt = self.prompts.render_package_prompt(
                    self.scope, package_unit.package_name, chunk)
                _, part_text = self._complete(prompt, warnings)
                part_sections.append(
                    f"### {package_unit.package_name} (part {i + 1})\n{part_text}\n")
            folded = "\n".join(part_sections)
            if overhead + len(folded.encode("utf-8")) > budget:
                warnings.append(
                    f"package {package_unit.package_name} fold input exceeded the "
                    "prompt budget; sections block truncated")
                folded = _truncate_lines(folded, max(budget - overhead - 8, 64))
            prompt = self.prompts.render_package_prompt(
                self.scope, package_unit.package_name, [], raw_sections=[folded])
            key, text = self._complete(prompt, warnings)

        verdict = parse_tags(text, warnings=warnings)
        return SummaryNode(
            node_id=package_node_id(package_unit),
            tier=PACKAGE,
            subject_name=package_unit.package_name,
            text=text.strip(),
            tags=tuple(sorted(verdict.tags)),
            noncanonical=tuple(sorted(verdict.noncanonical)),
            children=tuple(n.node_id for n in class_nodes),
            prompt_key=key,
        )

    # -- whole sample ---------------------------------------------------------------

    def summarize_apk(self, package_units: list[PackageUnit],
                      sample: SampleId) -> AnalysisReport:
        """Full chain over every package; deterministic verdict aggregation."""
        if not package_units:
            raise ValueError("summarize_apk requires at least one package unit")

        jobs = [(pkg, cls) for pkg in package_units for cls in pkg.classes]

        def run_class(job):
            pkg, cls = job
            local_warnings: list[str] = []
            try:
                if cls.functions:
                    fn_nodes = self.summarize_functions(cls, local_warnings)
                else:
                    fn_nodes = []
                cls_node = self.summarize_class(cls, fn_nodes, local_warnings)
                return (fn_nodes, cls_node, local_warnings, None)
            except Exception as exc:
                return ([], None, local_warnings, exc)

        if self.concurrency > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
                outcomes = list(pool.map(run_class, jobs))
        else:
            outcomes = [run_class(job) for job in jobs]

        by_class = {job[1].original_name: outcome for job, outcome in zip(jobs, outcomes)}

        nodes: dict[str, SummaryNode] = {}
        package_ids: list[str] = []
        warnings: list[str] = []
        failed_packages = 0
        package_nodes: list[SummaryNode] = []
        for pkg in package_units:
            class_nodes: list[SummaryNode] = []
            pkg_failed = False
            for cls in pkg.classes:
                fn_nodes, cls_node, local_warnings, exc = by_class[cls.original_name]
                warnings.extend(local_warnings)
                if exc is not None:
                    warnings.append(
                        f"class {cls.original_name} failed to summarize: {exc}")
                    pkg_failed = True
                    continue
                for n in fn_nodes:
                    nodes[n.node_id] = n
                nodes[cls_node.node_id] = cls_node
                class_nodes.append(cls_node)
            if pkg_failed or not class_nodes:
                failed_packages += 1
                warnings.append(f"package {pkg.package_name} incomplete; no verdict node")
                continue
            try:
                pkg_node = self.summarize_package(pkg, class_nodes, warnings)
            except Exception as exc:
                failed_packages += 1
                warnings.append(f"package {pkg.package_name} failed to summarize: {exc}")
                continue
            nodes[pkg_node.node_id] = pkg_node
            package_ids.append(pkg_node.node_id)
            package_nodes.append(pkg_node)

        labels = [parse_tags(n.text).label for n in package_nodes]
        missing = len(package_units) - len(package_nodes)
        if any(lab == MALWARE for lab in labels):
            label = MALWARE
        elif labels and not missing and all(lab == BENIGN for lab in labels):
            label = BENIGN
        else:
            label = UNKNOWN
            if any(lab == UNKNOWN for lab in labels):
                warnings.append("a package summary carries no verdict sentinel")
        verdict = Verdict(
            label=label,
            tags=frozenset().union(*(set(n.tags) for n in package_nodes)) if package_nodes else frozenset(),
            noncanonical=frozenset().union(*(set(n.noncanonical) for n in package_nodes)) if package_nodes else frozenset(),
        )

        function_count = sum(1 for n in nodes.values() if n.tier == FUNCTION)
        class_count = sum(1 for n in nodes.values() if n.tier == CLASS)
        report = AnalysisReport(
            sample=sample,
            scope=self.scope,
            model_id=self.model_id,
            template_version=self.prompts.version,
            nodes=nodes,
            package_ids=tuple(package_ids),
            verdict=verdict,
            warnings=warnings,
            stats={
                "prompts": self._prompts_issued,
                "cached": getattr(self.backend, "cached_count", 0),
                "estimated_tokens": self._tokens_issued,
                "functions": function_count,
                "classes": class_count,
                "packages": len(package_ids),
            },
            incomplete=failed_packages * 2 > len(package_units),
        )
        return report
