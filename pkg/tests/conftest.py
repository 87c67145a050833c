"""Shared fixtures: synthetic APKs and a ready corpus directory."""

from __future__ import annotations

import pytest

from apktriage.dexgen import (
    benign_sample_dex,
    benign_sample_writer,
    rooting_sample_dex,
    rooting_sample_writer,
    write_apk,
)

MAL_COUNT = 5
BENIGN_COUNT = 5


@pytest.fixture(scope="session")
def rooting_dex() -> bytes:
    return rooting_sample_dex(0)


@pytest.fixture(scope="session")
def benign_dex() -> bytes:
    return benign_sample_dex(0)


@pytest.fixture()
def rooting_apk(tmp_path):
    path = tmp_path / "rooting_sample.apk"
    write_apk(path, [rooting_sample_dex(0)])
    return path


@pytest.fixture()
def benign_apk(tmp_path):
    path = tmp_path / "clean_sample.apk"
    write_apk(path, [benign_sample_dex(0)])
    return path


def build_corpus(directory) -> str:
    """Writes MAL_COUNT + BENIGN_COUNT APKs plus a manifest; returns the
    manifest path as a string."""
    lines = ["path,label"]
    for i in range(MAL_COUNT):
        name = f"sample_mal_{i}.apk"
        write_apk(directory / name, [rooting_sample_dex(i)])
        lines.append(f"{name},MALWARE")
    for i in range(BENIGN_COUNT):
        name = f"sample_ok_{i}.apk"
        write_apk(directory / name, [benign_sample_dex(i)])
        lines.append(f"{name},BENIGN")
    manifest = directory / "corpus.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(manifest)


@pytest.fixture()
def corpus_manifest(tmp_path):
    return build_corpus(tmp_path)


@pytest.fixture(scope="session")
def all_fixture_writers():
    """Writers (with ground-truth stats) for the oracle-equivalence suite."""
    writers = []
    for i in range(MAL_COUNT):
        writers.append((f"mal_{i}", rooting_sample_writer(i)))
    for i in range(BENIGN_COUNT):
        writers.append((f"ok_{i}", benign_sample_writer(i)))
    return writers
