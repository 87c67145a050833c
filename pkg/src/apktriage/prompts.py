"""Prompt scoping: template sets, rendering, and token budgeting.

Three scopes exist. VANILLA injects no security context at all;
API_SCOPED injects a sensitive-API/permission/library list; and
MALWARE_SCOPED injects a behavior taxonomy. Templates live as plain-text
assets ({{placeholder}} substitution) under one directory per scope, with
a manifest declaring the set's version; the version participates in
cache keys, so edited templates never collide with cached responses.

Every rendered prompt carries the input sections after a literal
``=== INPUT ===`` line, which keeps instructions and injected knowledge
mechanically separable from the material being summarized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .disasm import FunctionUnit
from .errors import BudgetExceeded, TemplateError
from .report import SummaryNode

VANILLA = "VANILLA"
API_SCOPED = "API_SCOPED"
MALWARE_SCOPED = "MALWARE_SCOPED"
SCOPES = (VANILLA, API_SCOPED, MALWARE_SCOPED)

SCOPE_DIRS = {VANILLA: "vanilla", API_SCOPED: "api", MALWARE_SCOPED: "malware"}

FUNCTION = "FUNCTION"
CLASS = "CLASS"
PACKAGE = "PACKAGE"

INPUT_MARKER = "=== INPUT ==="
SECTION_PREFIX = "### "
ALIAS_PREFIX = "ALIAS:"
TRUNCATION_MARKER = "[TRUNCATED]"

DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"


@dataclass(frozen=True)
class TierBudgets:
    """Estimated-token caps per prompt tier."""

    function: int = 24000
    class_: int = 16000
    package: int = 24000

    def for_tier(self, tier: str) -> int:
        return {FUNCTION: self.function, CLASS: self.class_, PACKAGE: self.package}[tier]


@dataclass(frozen=True)
class TemplateSet:
    scope: str
    version: str
    system_text: str
    function_template: str
    class_template: str
    package_template: str
    few_shot_examples: tuple[tuple[str, str], ...]   # (input excerpt, output excerpt)
    knowledge_blocks: tuple[str, ...]                # injected at every tier
    package_knowledge_blocks: tuple[str, ...]        # extra, package tier only


@dataclass(frozen=True)
class PromptInstance:
    scope: str
    tier: str
    text: str
    system_text: str
    template_version: str
    estimated_tokens: int


def estimate_tokens(text: str) -> int:
    """Cheap backend-agnostic estimate: ceil(utf-8 bytes / 4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TemplateError(f"template asset missing: {path}") from exc


def _read_blocks(path: Path) -> tuple[str, ...]:
    if not path.exists():
        return ()
    blocks = [b.strip() for b in _read(path).split("\n---\n")]
    return tuple(b for b in blocks if b)


def _load_few_shot(path: Path) -> tuple[tuple[str, str, str], ...]:
    if not path.exists():
        return ()
    try:
        entries = json.loads(_read(path))
        return tuple((e.get("tier", ""), e["input"], e["output"]) for e in entries)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TemplateError(f"few-shot file malformed: {path}: {exc}") from exc


def load_template_set(scope: str, template_dir: str | Path | None = None) -> TemplateSet:
    root = Path(template_dir) if template_dir else DEFAULT_TEMPLATE_DIR
    try:
        manifest = json.loads(_read(root / "manifest.json"))
        version = str(manifest["version"])
    except (json.JSONDecodeError, KeyError) as exc:
        raise TemplateError(f"template manifest malformed under {root}") from exc
    scope_dir = root / SCOPE_DIRS[scope]
    few_shot = _load_few_shot(scope_dir / "few_shot.json")
    return TemplateSet(
        scope=scope,
        version=version,
        system_text=_read(scope_dir / "system.txt").strip(),
        function_template=_read(scope_dir / "function.txt"),
        class_template=_read(scope_dir / "class.txt"),
        package_template=_read(scope_dir / "package.txt"),
        few_shot_examples=tuple((i, o) for _, i, o in few_shot),
        knowledge_blocks=_read_blocks(scope_dir / "knowledge.txt"),
        package_knowledge_blocks=_read_blocks(scope_dir / "knowledge_package.txt"),
    )


def _substitute(template: str, values: dict[str, str]) -> str:
    text = template
    for name, value in values.items():
        text = text.replace("{{" + name + "}}", value)
    if "{{" in text and "}}" in text:
        start = text.index("{{")
        raise TemplateError(f"unresolved placeholder near: {text[start:start + 40]!r}")
    return text


def _render_few_shot(examples: tuple[tuple[str, str], ...]) -> str:
    parts = []
    for inp, out in examples:
        parts.append(f"Example input:\n{inp}\nExample output:\n{out}\n")
    return "\n".join(parts)


class PromptEngine:
    """Renders tier prompts for one template directory and budget set."""

    def __init__(self, template_dir: str | Path | None = None,
                 budgets: TierBudgets = TierBudgets()):
        self.budgets = budgets
        self.template_dir = template_dir
        self._sets = {scope: load_template_set(scope, template_dir) for scope in SCOPES}
        self._few_shot_by_tier: dict[tuple[str, str], str] = {}
        root = Path(template_dir) if template_dir else DEFAULT_TEMPLATE_DIR
        for scope in SCOPES:
            entries = _load_few_shot(root / SCOPE_DIRS[scope] / "few_shot.json")
            for tier_name in ("function", "class", "package"):
                picked = [(i, o) for t, i, o in entries if t == tier_name or not t]
                self._few_shot_by_tier[(scope, tier_name.upper())] = _render_few_shot(
                    tuple(picked))

    def template_set(self, scope: str) -> TemplateSet:
        return self._sets[scope]

    @property
    def version(self) -> str:
        return self._sets[VANILLA].version

    # -- section builders (byte-additive, used by the batcher) ---------------

    @staticmethod
    def function_section(unit: FunctionUnit, rendered_text: str | None = None) -> str:
        body = rendered_text if rendered_text is not None else unit.rendered_text
        return f"{SECTION_PREFIX}{unit.signature}\n{body}\n"

    @staticmethod
    def summary_section(node: SummaryNode) -> str:
        return f"{SECTION_PREFIX}{node.subject_name}\n{node.text}\n"

    def _render(self, scope: str, tier: str, template: str, subject_key: str,
                subject: str, sections: str, package_tier: bool = False) -> PromptInstance:
        tset = self._sets[scope]
        blocks = tset.knowledge_blocks
        if package_tier:
            blocks = blocks + tset.package_knowledge_blocks
        values = {
            subject_key: subject,
            "few_shot": self._few_shot_by_tier[(scope, tier)],
            "knowledge": "\n\n".join(blocks),
            "sections": sections,
        }
        text = _substitute(template, values)
        estimated = estimate_tokens(tset.system_text + text)
        budget = self.budgets.for_tier(tier)
        if estimated > budget:
            raise BudgetExceeded(
                f"{tier} prompt estimates {estimated} tokens over budget {budget}")
        return PromptInstance(
            scope=scope, tier=tier, text=text, system_text=tset.system_text,
            template_version=tset.version, estimated_tokens=estimated)

    def prompt_overhead_bytes(self, scope: str, tier: str, subject: str) -> int:
        """Byte length of the rendered prompt with empty input sections."""
        tset = self._sets[scope]
        template, key, pkg = {
            FUNCTION: (tset.function_template, "class_name", False),
            CLASS: (tset.class_template, "class_name", False),
            PACKAGE: (tset.package_template, "package_name", True),
        }[tier]
        blocks = tset.knowledge_blocks + (tset.package_knowledge_blocks if pkg else ())
        values = {
            key: subject,
            "few_shot": self._few_shot_by_tier[(scope, tier)],
            "knowledge": "\n\n".join(blocks),
            "sections": "",
        }
        text = _substitute(template, values)
        return len((tset.system_text + text).encode("utf-8"))

    # -- spec surface ---------------------------------------------------------

    def render_function_prompt(self, scope: str, class_name: str,
                               functions: list[FunctionUnit],
                               section_texts: list[str] | None = None) -> PromptInstance:
        """Prompt asking for one delimited summary section per function.

        ``section_texts`` lets the caller substitute truncated renderings
        while keeping signatures intact.
        """
        if not functions:
            raise ValueError("render_function_prompt requires at least one function")
        bodies = section_texts if section_texts is not None else [None] * len(functions)
        sections = "\n".join(
            self.function_section(fn, body) for fn, body in zip(functions, bodies))
        tset = self._sets[scope]
        return self._render(scope, FUNCTION, tset.function_template,
                            "class_name", class_name, sections)

    def render_class_prompt(self, scope: str, class_name: str,
                            function_summaries: list[SummaryNode],
                            raw_sections: list[str] | None = None) -> PromptInstance:
        """Prompt embedding each function summary verbatim, in order.

        ``raw_sections`` lets the caller substitute a budget-fitted
        sections block."""
        if raw_sections is None:
            if not function_summaries:
                raise ValueError("render_class_prompt requires at least one summary")
            if any(node.tier != FUNCTION for node in function_summaries):
                raise ValueError("render_class_prompt takes FUNCTION-tier nodes")
            sections = "\n".join(self.summary_section(n) for n in function_summaries)
        else:
            sections = "\n".join(raw_sections)
        tset = self._sets[scope]
        return self._render(scope, CLASS, tset.class_template,
                            "class_name", class_name, sections)

    def render_package_prompt(self, scope: str, package_name: str,
                              class_summaries: list[SummaryNode],
                              raw_sections: list[str] | None = None) -> PromptInstance:
        """Prompt demanding the final (MALWARE)/(BENIGN) sentinel plus tags.

        ``raw_sections`` supports the fold step, where chunk summaries
        rather than class nodes serve as input.
        """
        if raw_sections is None:
            if not class_summaries:
                raise ValueError("render_package_prompt requires at least one summary")
            if any(node.tier != CLASS for node in class_summaries):
                raise ValueError("render_package_prompt takes CLASS-tier nodes")
            sections = "\n".join(self.summary_section(n) for n in class_summaries)
        else:
            sections = "\n".join(raw_sections)
        tset = self._sets[scope]
        return self._render(scope, PACKAGE, tset.package_template,
                            "package_name", package_name, sections, package_tier=True)
