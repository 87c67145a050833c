"""Command-line surface: analyze, trace, eval, render.

Exit codes partition outcomes for shell triage: 0 benign, 2 malware,
3 unknown, 1 fatal error, 4 lookup miss (absent tag or class). Human
output goes to stdout, diagnostics to stderr. The API credential is read
only from the environment, never from a flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ClassNotFound, TagNotFound, TriageError
from .evaluate import confusion_table, eval_report_document, load_manifest, run_corpus
from .pipeline import (
    ENDPOINT_ENV,
    HTTP,
    MOCK,
    MODEL_ENV,
    RunConfig,
    analyze_apk,
    load_units,
)
from .prompts import API_SCOPED, MALWARE_SCOPED, VANILLA, TierBudgets
from .report import read_report, write_report
from .verdict import BENIGN, MALWARE, trace

SCOPE_FLAGS = {"vanilla": VANILLA, "api": API_SCOPED, "malware": MALWARE_SCOPED}

EXIT_BENIGN = 0
EXIT_FATAL = 1
EXIT_MALWARE = 2
EXIT_UNKNOWN = 3
EXIT_MISS = 4


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scope", choices=sorted(SCOPE_FLAGS), default="malware",
                        help="prompt scoping strategy (default: malware)")
    parser.add_argument("--backend", choices=[HTTP, MOCK], default=MOCK,
                        help="chat-completion backend (default: mock)")
    parser.add_argument("--endpoint", metavar="URL", default=None,
                        help="chat-completions endpoint URL (HTTP backend)")
    parser.add_argument("--model", metavar="ID", default=None,
                        help="model identifier sent to the backend")
    parser.add_argument("--cache-dir", metavar="PATH", default=None,
                        help="response cache directory")
    parser.add_argument("--templates", metavar="PATH", default=None,
                        help="prompt template directory (default: packaged set)")
    parser.add_argument("--concurrency", type=int, default=4, metavar="N",
                        help="parallel worker bound (default: 4)")
    parser.add_argument("--budget-function", type=int, default=24000, metavar="N")
    parser.add_argument("--budget-class", type=int, default=16000, metavar="N")
    parser.add_argument("--budget-package", type=int, default=24000, metavar="N")


def _config_from(args: argparse.Namespace) -> RunConfig:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    model = args.model or os.environ.get(MODEL_ENV) or "offline-mock"
    return RunConfig(
        scope=SCOPE_FLAGS[args.scope],
        backend=args.backend,
        endpoint_url=endpoint,
        model_id=model,
        budgets=TierBudgets(function=args.budget_function,
                            class_=args.budget_class,
                            package=args.budget_package),
        concurrency=args.concurrency,
        cache_dir=args.cache_dir,
        template_dir=args.templates,
    )


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _config_from(args)
    config.validate()
    report = analyze_apk(args.apk_path, config)
    write_report(report, args.out)
    tag_str = "".join(f"({t})" for t in sorted(report.verdict.tags))
    print(f"{report.sample.digest}  {report.verdict.label}{tag_str}")
    print(f"report written to {args.out}")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return {BENIGN: EXIT_BENIGN, MALWARE: EXIT_MALWARE}.get(
        report.verdict.label, EXIT_UNKNOWN)


def cmd_trace(args: argparse.Namespace) -> int:
    report = read_report(args.report_path)
    chains = trace(report, args.tag)
    if not chains:
        print(f"tag {args.tag!r} present but not at package level; nothing to trace")
        return EXIT_BENIGN
    for i, chain in enumerate(chains, start=1):
        print(f"chain {i}: ({chain.tag})")
        for depth, link in enumerate(chain.links):
            indent = "  " * (depth + 1)
            print(f"{indent}{link.tier} {link.subject_name}: {link.excerpt}")
        if chain.terminal is not None:
            indent = "  " * (len(chain.links) + 1)
            dex, cdef, midx = chain.terminal.source_ref
            print(f"{indent}bytecode (dex {dex}, class_def {cdef}, method {midx}):")
            for line in chain.terminal.lines:
                print(f"{indent}  {line}")
        if chain.note:
            print(f"  note: {chain.note}")
    return EXIT_BENIGN


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from(args)
    config.validate()
    manifest = load_manifest(args.manifest_path)
    report = run_corpus(manifest, config)
    print(confusion_table(report))
    if args.out:
        Path(args.out).write_text(
            json.dumps(eval_report_document(report), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        print(f"evaluation report written to {args.out}")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_BENIGN


def cmd_render(args: argparse.Namespace) -> int:
    warnings: list[str] = []
    _, units = load_units(args.apk_path, warnings)
    wanted = args.class_name
    matched = False
    for pkg in units:
        for cls in pkg.classes:
            if wanted and cls.original_name != wanted:
                continue
            matched = True
            print(f"class {cls.original_name}")
            for line in cls.field_lines:
                print(f"  {line}")
            for sig in cls.declared_only:
                print(f"  declared {sig}")
            for fn in cls.functions:
                print()
                print(fn.rendered_text)
            print()
    if wanted and not matched:
        raise ClassNotFound(f"class {wanted!r} not found in archive")
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_BENIGN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apktriage",
        description="Static APK triage through tiered bytecode summarization.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analyze one APK and write a report")
    p.add_argument("apk_path")
    p.add_argument("--out", metavar="PATH", default="report.json",
                   help="report output path (default: report.json)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("trace", help="backtrack a tag through a written report")
    p.add_argument("report_path")
    p.add_argument("tag")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("eval", help="run a labeled corpus and print the confusion matrix")
    p.add_argument("manifest_path")
    p.add_argument("--out", metavar="PATH", default=None,
                   help="also write the evaluation report as JSON")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="print disassembled function texts, no backend")
    p.add_argument("apk_path")
    p.add_argument("--class", dest="class_name", default=None, metavar="NAME",
                   help="only this dotted class name")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TagNotFound, ClassNotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISS
    except TriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
