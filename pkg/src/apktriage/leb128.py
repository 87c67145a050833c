"""ULEB128 decoding for the DEX binary format.

DEX encodes variable-length unsigned ints little-endian base-128, at most
five bytes (35 value bits).
"""

from __future__ import annotations

from .errors import Overlong, Truncated

MAX_BYTES = 5


def decode_uleb128(buffer: bytes, offset: int) -> tuple[int, int]:
    """Decode one ULEB128 value at ``offset``.

    Returns ``(value, next_offset)``. Raises ``Truncated`` if the buffer
    ends mid-encoding and ``Overlong`` if no terminating byte appears
    within five bytes.
    """
    result = 0
    shift = 0
    pos = offset
    for _ in range(MAX_BYTES):
        if pos >= len(buffer):
            raise Truncated(f"uleb128 at {offset:#x} runs past end of buffer")
        byte = buffer[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if byte & 0x80 == 0:
            return result, pos
        shift += 7
    raise Overlong(f"uleb128 at {offset:#x} has no terminator within {MAX_BYTES} bytes")


def decode_uleb128p1(buffer: bytes, offset: int) -> tuple[int, int]:
    """Decode the uleb128p1 variant (value minus one; -1 encodes as 0)."""
    value, pos = decode_uleb128(buffer, offset)
    return value - 1, pos


def encode_uleb128(value: int) -> bytes:
    """Encode a non-negative int; inverse of :func:`decode_uleb128`."""
    if value < 0:
        raise ValueError("uleb128 encodes non-negative values only")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)
