"""Dalvik opcode table: mnemonic, encoding format, and reference kind.

Format ids follow the usual two-digits-plus-letter convention: the first
digit is the width in 16-bit code units, the second the register count
("r" meaning a register range), the letter the extra-data type. Opcodes
absent from the table are undefined and decode as ``unknown-0xNN``.
"""

from __future__ import annotations

# reference kinds for index-bearing operands
STRING = "string"
TYPE = "type"
FIELD = "field"
METHOD = "method"
METHOD_PROTO = "method_proto"
CALL_SITE = "call_site"
METHOD_HANDLE = "method_handle"
PROTO = "proto"

# opcode -> (mnemonic, format, kind)
OPCODES: dict[int, tuple[str, str, str | None]] = {
    0x00: ("nop", "10x", None),
    0x01: ("move", "12x", None),
    0x02: ("move/from16", "22x", None),
    0x03: ("move/16", "32x", None),
    0x04: ("move-wide", "12x", None),
    0x05: ("move-wide/from16", "22x", None),
    0x06: ("move-wide/16", "32x", None),
    0x07: ("move-object", "12x", None),
    0x08: ("move-object/from16", "22x", None),
    0x09: ("move-object/16", "32x", None),
    0x0A: ("move-result", "11x", None),
    0x0B: ("move-result-wide", "11x", None),
    0x0C: ("move-result-object", "11x", None),
    0x0D: ("move-exception", "11x", None),
    0x0E: ("return-void", "10x", None),
    0x0F: ("return", "11x", None),
    0x10: ("return-wide", "11x", None),
    0x11: ("return-object", "11x", None),
    0x12: ("const/4", "11n", None),
    0x13: ("const/16", "21s", None),
    0x14: ("const", "31i", None),
    0x15: ("const/high16", "21h", None),
    0x16: ("const-wide/16", "21s", None),
    0x17: ("const-wide/32", "31i", None),
    0x18: ("const-wide", "51l", None),
    0x19: ("const-wide/high16", "21h", None),
    0x1A: ("const-string", "21c", STRING),
    0x1B: ("const-string/jumbo", "31c", STRING),
    0x1C: ("const-class", "21c", TYPE),
    0x1D: ("monitor-enter", "11x", None),
    0x1E: ("monitor-exit", "11x", None),
    0x1F: ("check-cast", "21c", TYPE),
    0x20: ("instance-of", "22c", TYPE),
    0x21: ("array-length", "12x", None),
    0x22: ("new-instance", "21c", TYPE),
    0x23: ("new-array", "22c", TYPE),
    0x24: ("filled-new-array", "35c", TYPE),
    0x25: ("filled-new-array/range", "3rc", TYPE),
    0x26: ("fill-array-data", "31t", None),
    0x27: ("throw", "11x", None),
    0x28: ("goto", "10t", None),
    0x29: ("goto/16", "20t", None),
    0x2A: ("goto/32", "30t", None),
    0x2B: ("packed-switch", "31t", None),
    0x2C: ("sparse-switch", "31t", None),
    0x2D: ("cmpl-float", "23x", None),
    0x2E: ("cmpg-float", "23x", None),
    0x2F: ("cmpl-double", "23x", None),
    0x30: ("cmpg-double", "23x", None),
    0x31: ("cmp-long", "23x", None),
    0x32: ("if-eq", "22t", None),
    0x33: ("if-ne", "22t", None),
    0x34: ("if-lt", "22t", None),
    0x35: ("if-ge", "22t", None),
    0x36: ("if-gt", "22t", None),
    0x37: ("if-le", "22t", None),
    0x38: ("if-eqz", "21t", None),
    0x39: ("if-nez", "21t", None),
    0x3A: ("if-ltz", "21t", None),
    0x3B: ("if-gez", "21t", None),
    0x3C: ("if-gtz", "21t", None),
    0x3D: ("if-lez", "21t", None),
    0x44: ("aget", "23x", None),
    0x45: ("aget-wide", "23x", None),
    0x46: ("aget-object", "23x", None),
    0x47: ("aget-boolean", "23x", None),
    0x48: ("aget-byte", "23x", None),
    0x49: ("aget-char", "23x", None),
    0x4A: ("aget-short", "23x", None),
    0x4B: ("aput", "23x", None),
    0x4C: ("aput-wide", "23x", None),
    0x4D: ("aput-object", "23x", None),
    0x4E: ("aput-boolean", "23x", None),
    0x4F: ("aput-byte", "23x", None),
    0x50: ("aput-char", "23x", None),
    0x51: ("aput-short", "23x", None),
    0x52: ("iget", "22c", FIELD),
    0x53: ("iget-wide", "22c", FIELD),
    0x54: ("iget-object", "22c", FIELD),
    0x55: ("iget-boolean", "22c", FIELD),
    0x56: ("iget-byte", "22c", FIELD),
    0x57: ("iget-char", "22c", FIELD),
    0x58: ("iget-short", "22c", FIELD),
    0x59: ("iput", "22c", FIELD),
    0x5A: ("iput-wide", "22c", FIELD),
    0x5B: ("iput-object", "22c", FIELD),
    0x5C: ("iput-boolean", "22c", FIELD),
    0x5D: ("iput-byte", "22c", FIELD),
    0x5E: ("iput-char", "22c", FIELD),
    0x5F: ("iput-short", "22c", FIELD),
    0x60: ("sget", "21c", FIELD),
    0x61: ("sget-wide", "21c", FIELD),
    0x62: ("sget-object", "21c", FIELD),
    0x63: ("sget-boolean", "21c", FIELD),
    0x64: ("sget-byte", "21c", FIELD),
    0x65: ("sget-char", "21c", FIELD),
    0x66: ("sget-short", "21c", FIELD),
    0x67: ("sput", "21c", FIELD),
    0x68: ("sput-wide", "21c", FIELD),
    0x69: ("sput-object", "21c", FIELD),
    0x6A: ("sput-boolean", "21c", FIELD),
    0x6B: ("sput-byte", "21c", FIELD),
    0x6C: ("sput-char", "21c", FIELD),
    0x6D: ("sput-short", "21c", FIELD),
    0x6E: ("invoke-virtual", "35c", METHOD),
    0x6F: ("invoke-super", "35c", METHOD),
    0x70: ("invoke-direct", "35c", METHOD),
    0x71: ("invoke-static", "35c", METHOD),
    0x72: ("invoke-interface", "35c", METHOD),
    0x74: ("invoke-virtual/range", "3rc", METHOD),
    0x75: ("invoke-super/range", "3rc", METHOD),
    0x76: ("invoke-direct/range", "3rc", METHOD),
    0x77: ("invoke-static/range", "3rc", METHOD),
    0x78: ("invoke-interface/range", "3rc", METHOD),
    0x7B: ("neg-int", "12x", None),
    0x7C: ("not-int", "12x", None),
    0x7D: ("neg-long", "12x", None),
    0x7E: ("not-long", "12x", None),
    0x7F: ("neg-float", "12x", None),
    0x80: ("neg-double", "12x", None),
    0x81: ("int-to-long", "12x", None),
    0x82: ("int-to-float", "12x", None),
    0x83: ("int-to-double", "12x", None),
    0x84: ("long-to-int", "12x", None),
    0x85: ("long-to-float", "12x", None),
    0x86: ("long-to-double", "12x", None),
    0x87: ("float-to-int", "12x", None),
    0x88: ("float-to-long", "12x", None),
    0x89: ("float-to-double", "12x", None),
    0x8A: ("double-to-int", "12x", None),
    0x8B: ("double-to-long", "12x", None),
    0x8C: ("double-to-float", "12x", None),
    0x8D: ("int-to-byte", "12x", None),
    0x8E: ("int-to-char", "12x", None),
    0x8F: ("int-to-short", "12x", None),
    0x90: ("add-int", "23x", None),
    0x91: ("sub-int", "23x", None),
    0x92: ("mul-int", "23x", None),
    0x93: ("div-int", "23x", None),
    0x94: ("rem-int", "23x", None),
    0x95: ("and-int", "23x", None),
    0x96: ("or-int", "23x", None),
    0x97: ("xor-int", "23x", None),
    0x98: ("shl-int", "23x", None),
    0x99: ("shr-int", "23x", None),
    0x9A: ("ushr-int", "23x", None),
    0x9B: ("add-long", "23x", None),
    0x9C: ("sub-long", "23x", None),
    0x9D: ("mul-long", "23x", None),
    0x9E: ("div-long", "23x", None),
    0x9F: ("rem-long", "23x", None),
    0xA0: ("and-long", "23x", None),
    0xA1: ("or-long", "23x", None),
    0xA2: ("xor-long", "23x", None),
    0xA3: ("shl-long", "23x", None),
    0xA4: ("shr-long", "23x", None),
    0xA5: ("ushr-long", "23x", None),
    0xA6: ("add-float", "23x", None),
    0xA7: ("sub-float", "23x", None),
    0xA8: ("mul-float", "23x", None),
    0xA9: ("div-float", "23x", None),
    0xAA: ("rem-float", "23x", None),
    0xAB: ("add-double", "23x", None),
    0xAC: ("sub-double", "23x", None),
    0xAD: ("mul-double", "23x", None),
    0xAE: ("div-double", "23x", None),
    0xAF: ("rem-double", "23x", None),
    0xB0: ("add-int/2addr", "12x", None),
    0xB1: ("sub-int/2addr", "12x", None),
    0xB2: ("mul-int/2addr", "12x", None),
    0xB3: ("div-int/2addr", "12x", None),
    0xB4: ("rem-int/2addr", "12x", None),
    0xB5: ("and-int/2addr", "12x", None),
    0xB6: ("or-int/2addr", "12x", None),
    0xB7: ("xor-int/2addr", "12x", None),
    0xB8: ("shl-int/2addr", "12x", None),
    0xB9: ("shr-int/2addr", "12x", None),
    0xBA: ("ushr-int/2addr", "12x", None),
    0xBB: ("add-long/2addr", "12x", None),
    0xBC: ("sub-long/2addr", "12x", None),
    0xBD: ("mul-long/2addr", "12x", None),
    0xBE: ("div-long/2addr", "12x", None),
    0xBF: ("rem-long/2addr", "12x", None),
    0xC0: ("and-long/2addr", "12x", None),
    0xC1: ("or-long/2addr", "12x", None),
    0xC2: ("xor-long/2addr", "12x", None),
    0xC3: ("shl-long/2addr", "12x", None),
    0xC4: ("shr-long/2addr", "12x", None),
    0xC5: ("ushr-long/2addr", "12x", None),
    0xC6: ("add-float/2addr", "12x", None),
    0xC7: ("sub-float/2addr", "12x", None),
    0xC8: ("mul-float/2addr", "12x", None),
    0xC9: ("div-float/2addr", "12x", None),
    0xCA: ("rem-float/2addr", "12x", None),
    0xCB: ("add-double/2addr", "12x", None),
    0xCC: ("sub-double/2addr", "12x", None),
    0xCD: ("mul-double/2addr", "12x", None),
    0xCE: ("div-double/2addr", "12x", None),
    0xCF: ("rem-double/2addr", "12x", None),
    0xD0: ("add-int/lit16", "22s", None),
    0xD1: ("rsub-int", "22s", None),
    0xD2: ("mul-int/lit16", "22s", None),
    0xD3: ("div-int/lit16", "22s", None),
    0xD4: ("rem-int/lit16", "22s", None),
    0xD5: ("and-int/lit16", "22s", None),
    0xD6: ("or-int/lit16", "22s", None),
    0xD7: ("xor-int/lit16", "22s", None),
    0xD8: ("add-int/lit8", "22b", None),
    0xD9: ("rsub-int/lit8", "22b", None),
    0xDA: ("mul-int/lit8", "22b", None),
    0xDB: ("div-int/lit8", "22b", None),
    0xDC: ("rem-int/lit8", "22b", None),
    0xDD: ("and-int/lit8", "22b", None),
    0xDE: ("or-int/lit8", "22b", None),
    0xDF: ("xor-int/lit8", "22b", None),
    0xE0: ("shl-int/lit8", "22b", None),
    0xE1: ("shr-int/lit8", "22b", None),
    0xE2: ("ushr-int/lit8", "22b", None),
    0xFA: ("invoke-polymorphic", "45cc", METHOD_PROTO),
    0xFB: ("invoke-polymorphic/range", "4rcc", METHOD_PROTO),
    0xFC: ("invoke-custom", "35c", CALL_SITE),
    0xFD: ("invoke-custom/range", "3rc", CALL_SITE),
    0xFE: ("const-method-handle", "21c", METHOD_HANDLE),
    0xFF: ("const-method-type", "21c", PROTO),
}

# pseudo-instruction idents: full 16-bit unit -> mnemonic
PAYLOAD_IDENTS: dict[int, str] = {
    0x0100: "packed-switch-payload",
    0x0200: "sparse-switch-payload",
    0x0300: "fill-array-data-payload",
}


def format_width(fmt: str) -> int:
    """Code units occupied by an instruction of the given format."""
    return int(fmt[0])
