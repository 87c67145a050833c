"""APK container handling: DEX enumeration and redacted sample identity.

Sample names never reach a prompt; the only identity that leaves this
module is the content digest. The archive model is immutable after open,
so concurrent workers may read it freely.
"""

from __future__ import annotations

import hashlib
import re
import zipfile
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import CorruptEntry, IndexOutOfRange, IoFailure, NoDexFound, NotAZip

_DEX_NAME = re.compile(r"^classes(\d*)\.dex$")


@dataclass(frozen=True)
class ApkArchive:
    source_path: str
    entries: tuple[tuple[str, int], ...]   # (name, uncompressed size)
    dex_entries: tuple[str, ...]           # classes.dex first, then classesN.dex by N
    digest: str                            # sha256 of the raw file, lowercase hex


@dataclass(frozen=True)
class SampleId:
    digest: str
    label_hint: str | None = None

    def serialized(self) -> str:
        if self.label_hint is None:
            return self.digest
        return f"{self.digest},{self.label_hint}"


def _dex_sort_key(name: str) -> int:
    suffix = _DEX_NAME.match(name).group(1)
    return 1 if suffix == "" else int(suffix)


def open_apk(path: str | Path) -> ApkArchive:
    """Enumerate a ZIP container and locate its DEX payloads.

    Raises ``NotAZip`` for a bad container, ``NoDexFound`` when no
    ``classes*.dex`` entry exists, ``IoFailure`` on read errors.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    digest = hashlib.sha256(raw).hexdigest()
    try:
        with zipfile.ZipFile(path) as zf:
            infos = zf.infolist()
    except zipfile.BadZipFile as exc:
        raise NotAZip(f"{path} is not a ZIP container") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    entries = tuple((info.filename, info.file_size) for info in infos)
    dex_names = sorted(
        (name for name, _ in entries if _DEX_NAME.match(name)), key=_dex_sort_key)
    if not dex_names:
        raise NoDexFound("archive holds no classes*.dex entry")
    return ApkArchive(
        source_path=str(path),
        entries=entries,
        dex_entries=tuple(dex_names),
        digest=digest,
    )


def extract_dex(archive: ApkArchive, index: int) -> bytes:
    """Decompressed bytes of the index-th DEX entry."""
    if not 0 <= index < len(archive.dex_entries):
        raise IndexOutOfRange(
            f"dex index {index} out of range (archive has {len(archive.dex_entries)})")
    name = archive.dex_entries[index]
    declared = dict(archive.entries)[name]
    try:
        with zipfile.ZipFile(archive.source_path) as zf:
            data = zf.read(name)
    except (zipfile.BadZipFile, zlib.error) as exc:
        raise CorruptEntry(f"{name} failed to decompress: {exc}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {archive.source_path}: {exc}") from exc
    if len(data) != declared:
        raise CorruptEntry(
            f"{name} declared {declared} bytes but decompressed to {len(data)}")
    return data


def redacted_identity(archive: ApkArchive) -> SampleId:
    """Content-addressed identity carrying no name material."""
    return SampleId(digest=archive.digest)
