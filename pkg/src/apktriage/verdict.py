"""Tag grammar, classification labels, and evidence backtracking.

Summaries carry parenthesized behavior tags plus a verdict sentinel,
``(MALWARE)`` or ``(BENIGN)``. This module parses that grammar into
canonical categories, derives the sample label, and walks a tag from the
package tier down to the bytecode lines responsible.

The category table accepts both joined and split surface forms: model
output has been observed emitting ``(Stealth)and (Resource Exploitation)``
for the single category. Unrecognized parenthesized phrases are kept
verbatim as noncanonical tags rather than dropped, since novel behaviors
are exactly what a triage queue wants surfaced.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import TagNotFound

if TYPE_CHECKING:
    from .report import AnalysisReport, SummaryNode

MALWARE = "MALWARE"
BENIGN = "BENIGN"
UNKNOWN = "UNKNOWN"

FUNCTION = "FUNCTION"
CLASS = "CLASS"
PACKAGE = "PACKAGE"

_CANONICAL_SEED: dict[str, tuple[str, ...]] = {
    "Rooting": (),
    "Privilege Escalation and Control": ("privilege escalation",),
    "Stealth and Resource Exploitation": (
        "steal and resource exploitation",
        "resource exploitation",
    ),
    "Dynamic Code Execution": ("dynamic class loading",),
    "Obfuscated Code": ("obfuscation", "code obfuscation"),
    "Modification of Critical System Components": (
        "modification of system components",
    ),
    "Code Execution Manipulation": (),
    "Root Access": (),
    "Data Exfiltration": (),
}

# cross-tier linkage: a package-level tag may surface at lower tiers as one
# of its related activities or its parent category
RELATED_FORMS: dict[str, tuple[str, ...]] = {
    "Rooting": ("Root Access", "Modification of Critical System Components",
                "Dynamic Code Execution", "Privilege Escalation and Control"),
    "Privilege Escalation and Control": ("Root Access", "Rooting"),
    "Code Execution Manipulation": ("Dynamic Code Execution", "Obfuscated Code",
                                    "Modification of Critical System Components"),
    "Stealth and Resource Exploitation": ("Data Exfiltration",),
}

# bytecode evidence: substrings that tie a tag to rendered instruction lines
TAG_KEYWORDS: dict[str, tuple[str, ...]] = {
    "Rooting": ("RootPermApi", "/system/bin", '"su"', "Superuser"),
    "Root Access": ("RootPermApi", "/system/bin", '"su"', "Superuser"),
    "Privilege Escalation and Control": ("RootPermApi", "/system/bin", '"su"'),
    "Dynamic Code Execution": ("DexClassLoader", "loadClass", "PathClassLoader",
                               "InMemoryDexClassLoader", "dalvik.system"),
    "Code Execution Manipulation": ("DexClassLoader", "loadClass", "Runtime.exec"),
    "Obfuscated Code": ("java.lang.reflect", "getMethod", "setAccessible",
                        "getDeclaredMethod", "forName"),
    "Modification of Critical System Components": ("/system/", "mount"),
    "Data Exfiltration": ("HttpURLConnection", "openConnection", "getDeviceId",
                          "sendTextMessage"),
    "Stealth and Resource Exploitation": ("getRunningTasks",
                                          "killBackgroundProcesses"),
}

_PAREN = re.compile(r"\(([^()]{1,80})\)")
_JOIN_GAP = re.compile(r"^[\s;,]*and[\s;,]*$", re.IGNORECASE)


def _normalize(phrase: str) -> str:
    return re.sub(r"\s+", " ", phrase.strip().strip(";,. ")).lower()


@dataclass(frozen=True)
class Verdict:
    label: str                                   # MALWARE | BENIGN | UNKNOWN
    tags: frozenset[str] = frozenset()           # canonical forms
    noncanonical: frozenset[str] = frozenset()   # preserved verbatim


class CanonicalTagTable:
    """Canonical tag -> accepted case-insensitive surface forms."""

    def __init__(self, entries: dict[str, tuple[str, ...]] | None = None):
        seed = entries if entries is not None else _CANONICAL_SEED
        self._by_surface: dict[str, str] = {}
        self.entries: dict[str, tuple[str, ...]] = {}
        for canonical, extra in seed.items():
            forms = (canonical,) + tuple(extra)
            self.entries[canonical] = forms
            for form in forms:
                self._by_surface[_normalize(form)] = canonical

    def canonicalize(self, phrase: str) -> str | None:
        return self._by_surface.get(_normalize(phrase))

    def surface_forms(self, canonical: str) -> tuple[str, ...]:
        return self.entries.get(canonical, (canonical,))


DEFAULT_TABLE = CanonicalTagTable()


def parse_tags(text: str, table: CanonicalTagTable = DEFAULT_TABLE,
               warnings: list[str] | None = None) -> Verdict:
    """Extract the verdict sentinel and category tags from summary text.

    ``MALWARE`` wins when both sentinels appear (a warning is recorded);
    no sentinel at all means ``UNKNOWN``. Split category forms joined by
    "and" between two parenthesized groups canonicalize to the joined
    category.
    """
    groups = list(_PAREN.finditer(text))
    saw_malware = saw_benign = False
    tags: set[str] = set()
    noncanonical: set[str] = set()
    i = 0
    while i < len(groups):
        phrase = groups[i].group(1)
        upper = phrase.strip().upper()
        if upper == MALWARE:
            saw_malware = True
            i += 1
            continue
        if upper == BENIGN:
            saw_benign = True
            i += 1
            continue
        if i + 1 < len(groups):
            gap = text[groups[i].end():groups[i + 1].start()]
            if _JOIN_GAP.match(gap):
                joined = table.canonicalize(f"{phrase} and {groups[i + 1].group(1)}")
                if joined is not None:
                    tags.add(joined)
                    i += 2
                    continue
        canonical = table.canonicalize(phrase)
        if canonical is not None:
            tags.add(canonical)
        else:
            noncanonical.add(phrase.strip())
        i += 1
    if saw_malware and saw_benign:
        if warnings is not None:
            warnings.append("ambiguous verdict: both sentinels present; MALWARE wins")
        label = MALWARE
    elif saw_malware:
        label = MALWARE
    elif saw_benign:
        label = BENIGN
    else:
        label = UNKNOWN
    return Verdict(label=label, tags=frozenset(tags), noncanonical=frozenset(noncanonical))


def serialize_verdict(verdict: Verdict) -> str:
    """Canonical textual form; ``parse_tags`` round-trips it."""
    parts = []
    if verdict.label in (MALWARE, BENIGN):
        parts.append(f"({verdict.label})")
    parts.extend(f"({t})" for t in sorted(verdict.tags))
    parts.extend(f"({t})" for t in sorted(verdict.noncanonical))
    return "".join(parts)


def classify(report: "AnalysisReport") -> str:
    """Label derived from the package nodes' sentinels alone.

    Recomputed from node text so it works on reports read back from
    disk; matches the aggregation the analysis stored.
    """
    labels = [parse_tags(report.nodes[pid].text).label for pid in report.package_ids]
    if not labels:
        return UNKNOWN
    if any(lab == MALWARE for lab in labels):
        return MALWARE
    if all(lab == BENIGN for lab in labels):
        return BENIGN
    return UNKNOWN


@dataclass(frozen=True)
class EvidenceLink:
    tier: str
    subject_name: str
    excerpt: str


@dataclass(frozen=True)
class EvidenceTerminal:
    source_ref: tuple[int, int, int]
    lines: tuple[str, ...]


@dataclass(frozen=True)
class EvidenceChain:
    tag: str
    links: tuple[EvidenceLink, ...]
    terminal: EvidenceTerminal | None = None
    note: str | None = None


def linked_forms(canonical: str) -> tuple[str, ...]:
    return (canonical,) + RELATED_FORMS.get(canonical, ())


def _excerpt(text: str, forms: tuple[str, ...],
             table: CanonicalTagTable) -> str | None:
    surfaces: list[str] = []
    for form in forms:
        surfaces.extend(table.surface_forms(form))
    for surface in surfaces:
        m = re.search(re.escape(surface), text, re.IGNORECASE)
        if m:
            start = max(text.rfind(".", 0, m.start()), text.rfind("\n", 0, m.start())) + 1
            end_dot = text.find(".", m.end())
            end_nl = text.find("\n", m.end())
            candidates = [e for e in (end_dot, end_nl) if e != -1]
            end = min(candidates) + 1 if candidates else len(text)
            return text[start:end].strip()
    return None


def _node_matches(node: "SummaryNode", forms: tuple[str, ...],
                  table: CanonicalTagTable) -> bool:
    if set(node.tags) & set(forms):
        return True
    return _excerpt(node.text, forms, table) is not None


def _keyword_lines(code_text: str, forms: tuple[str, ...]) -> tuple[str, ...]:
    keywords: list[str] = []
    for form in forms:
        keywords.extend(TAG_KEYWORDS.get(form, ()))
    lines = []
    for line in code_text.splitlines():
        if any(kw in line for kw in keywords):
            lines.append(line.strip())
    return tuple(lines)


def trace(report: "AnalysisReport", tag: str,
          table: CanonicalTagTable = DEFAULT_TABLE) -> list[EvidenceChain]:
    """Backtrack a tag from every package node that carries it down to
    the bytecode evidence.

    Descent follows the tag itself or any related activity form, since
    lower tiers often report the concrete activity rather than the
    category. Raises ``TagNotFound`` when no node carries the tag.
    """
    canonical = table.canonicalize(tag) or tag.strip()
    forms = linked_forms(canonical)
    chains: list[EvidenceChain] = []
    found_anywhere = False
    for pid in report.package_ids:
        pkg = report.nodes[pid]
        if not _node_matches(pkg, forms, table):
            continue
        found_anywhere = True
        pkg_link = EvidenceLink(PACKAGE, pkg.subject_name,
                                _excerpt(pkg.text, forms, table) or pkg.text[:160])
        matched_class = False
        for cid in pkg.children:
            cls = report.nodes[cid]
            if not _node_matches(cls, forms, table):
                continue
            matched_class = True
            cls_link = EvidenceLink(CLASS, cls.subject_name,
                                    _excerpt(cls.text, forms, table) or cls.text[:160])
            matched_fn = False
            for fid in cls.children:
                fn = report.nodes[fid]
                if not _node_matches(fn, forms, table):
                    continue
                matched_fn = True
                fn_link = EvidenceLink(FUNCTION, fn.subject_name,
                                       _excerpt(fn.text, forms, table) or fn.text[:160])
                terminal = None
                if fn.source_ref is not None:
                    lines = _keyword_lines(fn.code_text or "", forms)
                    terminal = EvidenceTerminal(tuple(fn.source_ref), lines)
                chains.append(EvidenceChain(canonical, (pkg_link, cls_link, fn_link), terminal))
            if not matched_fn:
                chains.append(EvidenceChain(canonical, (pkg_link, cls_link),
                                            note="class-level only"))
        if not matched_class:
            chains.append(EvidenceChain(canonical, (pkg_link,),
                                        note="package-level only"))
    if not found_anywhere:
        # the tag may still live below the package tier
        for node in report.nodes.values():
            if _node_matches(node, forms, table):
                found_anywhere = True
                break
        if not found_anywhere:
            raise TagNotFound(f"tag {tag!r} appears nowhere in the report")
    return chains
