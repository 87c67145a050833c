#!/usr/bin/env python3
"""Run the three prompt scopes over a labeled corpus with the mock backend
and print one confusion table per scope. A desk-scale dry run of the full
evaluation loop; swap --backend http in the CLI for a hosted model."""

from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from apktriage.evaluate import confusion_table, load_manifest, run_corpus
from apktriage.pipeline import RunConfig
from apktriage.prompts import API_SCOPED, MALWARE_SCOPED, VANILLA

SCOPES = ((VANILLA, "vanilla"), (API_SCOPED, "api-scoped"), (MALWARE_SCOPED, "malware-scoped"))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("manifest", type=Path, help="corpus manifest.csv")
    parser.add_argument("--cache-dir", type=Path, default=None,
                        help="response cache root (default: a fresh temp dir)")
    parser.add_argument("--concurrency", type=int, default=4)
    args = parser.parse_args()

    manifest = load_manifest(args.manifest)
    cache_root = args.cache_dir or Path(tempfile.mkdtemp(prefix="apktriage-cache-"))
    for scope, label in SCOPES:
        config = RunConfig(scope=scope, concurrency=args.concurrency,
                           cache_dir=cache_root / label)
        report = run_corpus(manifest, config)
        print(f"== {label} ==")
        print(confusion_table(report))
        print()
    print(f"caches under {cache_root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
