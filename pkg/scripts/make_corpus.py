#!/usr/bin/env python3
"""Generate a synthetic labeled corpus: APKs with dynamic-loading/rooting
patterns plus harmless counterparts, and a manifest.csv ready for
``apktriage eval``."""

from __future__ import annotations

import argparse
from pathlib import Path

from apktriage.dexgen import benign_sample_dex, rooting_sample_dex, write_apk


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", type=Path, help="corpus directory to create")
    parser.add_argument("--malicious", type=int, default=5, metavar="N")
    parser.add_argument("--benign", type=int, default=5, metavar="N")
    parser.add_argument("--multidex", action="store_true",
                        help="also emit one multidex sample mixing both patterns")
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["path,label"]
    for i in range(args.malicious):
        name = f"sample_mal_{i}.apk"
        write_apk(args.out_dir / name, [rooting_sample_dex(i)])
        lines.append(f"{name},MALWARE")
    for i in range(args.benign):
        name = f"sample_ok_{i}.apk"
        write_apk(args.out_dir / name, [benign_sample_dex(i)])
        lines.append(f"{name},BENIGN")
    if args.multidex:
        name = "sample_multidex.apk"
        write_apk(args.out_dir / name, [benign_sample_dex(90), rooting_sample_dex(90)])
        lines.append(f"{name},MALWARE")
    manifest = args.out_dir / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines) - 1} samples and {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
