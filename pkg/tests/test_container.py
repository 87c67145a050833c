import zipfile

import pytest

from apktriage.container import extract_dex, open_apk, redacted_identity
from apktriage.dexgen import benign_sample_dex, rooting_sample_dex, write_apk
from apktriage.errors import CorruptEntry, IndexOutOfRange, IoFailure, NoDexFound, NotAZip


def test_dex_entries_ordered(tmp_path):
    path = tmp_path / "multi.apk"
    write_apk(path, [benign_sample_dex(0), benign_sample_dex(1), rooting_sample_dex(0)])
    archive = open_apk(path)
    assert archive.dex_entries == ("classes.dex", "classes2.dex", "classes3.dex")
    names = [name for name, _ in archive.entries]
    assert "AndroidManifest.xml" in names


def test_multidex_numeric_order(tmp_path):
    # classes10.dex must sort after classes9.dex, not lexicographically
    path = tmp_path / "many.apk"
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("classes.dex", b"x")
        for n in (10, 9, 2):
            zf.writestr(f"classes{n}.dex", b"x")
    archive = open_apk(path)
    assert archive.dex_entries == ("classes.dex", "classes2.dex",
                                   "classes9.dex", "classes10.dex")


def test_no_dex(tmp_path):
    path = tmp_path / "resources_only.apk"
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("AndroidManifest.xml", b"stub")
        zf.writestr("resources.arsc", b"stub")
    with pytest.raises(NoDexFound):
        open_apk(path)


def test_not_a_zip(tmp_path):
    path = tmp_path / "junk.apk"
    path.write_bytes(b"this is definitely not a zip container")
    with pytest.raises(NotAZip):
        open_apk(path)


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        open_apk(tmp_path / "absent.apk")


def test_digest_deterministic(tmp_path, rooting_apk):
    first = open_apk(rooting_apk)
    second = open_apk(rooting_apk)
    assert first.digest == second.digest
    assert len(first.digest) == 64
    assert first.digest == first.digest.lower()


def test_extract_round_trip(tmp_path, rooting_dex):
    path = tmp_path / "one.apk"
    write_apk(path, [rooting_dex])
    archive = open_apk(path)
    data = extract_dex(archive, 0)
    assert data == rooting_dex
    assert data[:4] == b"dex\n"


def test_extract_out_of_range(rooting_apk):
    archive = open_apk(rooting_apk)
    with pytest.raises(IndexOutOfRange):
        extract_dex(archive, 3)


def test_corrupt_entry(tmp_path, rooting_dex):
    path = tmp_path / "broken.apk"
    write_apk(path, [rooting_dex])
    raw = bytearray(path.read_bytes())
    # flip a byte inside the deflate stream of classes.dex so the CRC fails
    start = raw.find(b"classes.dex") + len("classes.dex")
    raw[start + 40] ^= 0xFF
    path.write_bytes(bytes(raw))
    archive = open_apk(path)
    with pytest.raises(CorruptEntry):
        extract_dex(archive, 0)


def test_redacted_identity(tmp_path, rooting_dex):
    path = tmp_path / "com.example.app.apk"
    write_apk(path, [rooting_dex])
    archive = open_apk(path)
    sample = redacted_identity(archive)
    assert sample.digest == archive.digest
    assert sample.label_hint is None
    serialized = sample.serialized()
    assert "com.example" not in serialized
    assert ".apk" not in serialized
    # no multi-character alphanumeric piece of the file name survives
    for piece in ("com", "example", "app", "apk"):
        if any(c not in "0123456789abcdef" for c in piece):
            assert piece not in serialized


def test_content_addressing(tmp_path, rooting_dex):
    a = tmp_path / "first_name.apk"
    b = tmp_path / "second_name.apk"
    write_apk(a, [rooting_dex])
    write_apk(b, [rooting_dex])
    assert redacted_identity(open_apk(a)) == redacted_identity(open_apk(b))


def test_every_listed_dex_extracts(tmp_path):
    path = tmp_path / "multi.apk"
    write_apk(path, [benign_sample_dex(0), rooting_sample_dex(0)])
    archive = open_apk(path)
    for index in range(len(archive.dex_entries)):
        assert extract_dex(archive, index)[:4] == b"dex\n"
