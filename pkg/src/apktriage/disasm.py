"""Dalvik instruction decoding and method-text rendering.

Decodes each method's code units against the opcode table and renders a
smali-like listing meant to be consumed as prompt input: one header line,
a register line, then one line per instruction with references resolved
symbolically. Undefined opcodes never fail the decode; they surface as
``unknown-0xNN`` lines. Payload pseudo-instructions (switch tables,
array data) render as a single summary line with an element count, which
keeps listings compact.

Output text is pure ASCII: string literals are escaped, so any 7-bit
literal appears verbatim in the listing.
"""

from __future__ import annotations

import sys
from array import array
from dataclasses import dataclass

from . import opcodes
from .dexfile import (
    ClassDef,
    CodeItem,
    DexFile,
    MethodDef,
    access_flag_names,
    descriptor_to_dotted,
    resolve_field,
    resolve_method,
)

REGISTER = "register"
LITERAL = "literal"
STRING_REF = "string_ref"
TYPE_REF = "type_ref"
METHOD_REF = "method_ref"
FIELD_REF = "field_ref"
BRANCH_TARGET = "branch_target"

DEFAULT_PACKAGE = "(default)"


@dataclass(frozen=True)
class Instruction:
    opcode: int
    mnemonic: str
    operands: tuple[tuple[str, object], ...]
    width: int


@dataclass(frozen=True)
class FunctionUnit:
    qualified_name: str
    signature: str
    rendered_text: str
    source_ref: tuple[int, int, int]   # (dex ordinal, class_def index, method index)
    instruction_count: int


@dataclass
class ClassUnit:
    original_name: str                 # dotted
    descriptor: str
    access_flags: int
    field_lines: list[str]
    declared_only: list[str]           # signatures of methods without code
    functions: list[FunctionUnit]


@dataclass
class PackageUnit:
    package_name: str
    classes: list[ClassUnit]


def _signed(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def _units_of(code: CodeItem) -> array:
    a = array("H")
    a.frombytes(code.insns[: (len(code.insns) // 2) * 2])
    if sys.byteorder == "big":
        a.byteswap()
    return a


def decode_instructions(code: CodeItem, dex: DexFile,
                        warnings: list[str] | None = None) -> list[Instruction]:
    """Decode the full code-unit stream of one method.

    Covers every unit: the width sum of the returned instructions equals
    ``insns_count`` unless the stream is truncated, in which case a
    warning is recorded and the partial list returned.
    """
    units = _units_of(code)
    out: list[Instruction] = []
    pos = 0
    n = len(units)
    while pos < n:
        unit = units[pos]
        op = unit & 0xFF
        ident = unit & 0xFFFF
        if op == 0x00 and ident in opcodes.PAYLOAD_IDENTS:
            inst, width = _decode_payload(units, pos, ident, warnings)
            out.append(inst)
            pos += width
            continue
        entry = opcodes.OPCODES.get(op)
        if entry is None:
            out.append(Instruction(op, f"unknown-0x{op:02x}",
                                   ((LITERAL, unit >> 8),), 1))
            pos += 1
            continue
        mnemonic, fmt, kind = entry
        width = opcodes.format_width(fmt)
        if pos + width > n:
            if warnings is not None:
                warnings.append(
                    f"code stream truncated at unit {pos} ({mnemonic} needs {width} units)")
            break
        operands = _decode_operands(units, pos, fmt, kind, op, dex, warnings)
        out.append(Instruction(op, mnemonic, tuple(operands), width))
        pos += width
    return out


def _decode_payload(units: array, pos: int, ident: int,
                    warnings: list[str] | None) -> tuple[Instruction, int]:
    mnemonic = opcodes.PAYLOAD_IDENTS[ident]
    n = len(units)
    if ident == 0x0100:      # packed-switch: size, first_key(2), targets(2*size)
        size = units[pos + 1] if pos + 1 < n else 0
        width = size * 2 + 4
    elif ident == 0x0200:    # sparse-switch: size, keys+targets(4*size)
        size = units[pos + 1] if pos + 1 < n else 0
        width = size * 4 + 2
    else:                    # fill-array-data: element_width, size(2), data
        ew = units[pos + 1] if pos + 1 < n else 0
        size = (units[pos + 2] | (units[pos + 3] << 16)) if pos + 3 < n else 0
        width = (size * ew + 1) // 2 + 4
    if pos + width > n:
        if warnings is not None:
            warnings.append(f"payload at unit {pos} truncated; clamping")
        width = n - pos
    return Instruction(0x00, mnemonic, ((LITERAL, size),), max(width, 1)), max(width, 1)


def _ref_operand(kind: str, idx: int, dex: DexFile, warnings: list[str] | None):
    try:
        if kind == opcodes.STRING:
            return (STRING_REF, dex.strings[idx])
        if kind == opcodes.TYPE:
            return (TYPE_REF, descriptor_to_dotted(dex.type_descriptors[idx]))
        if kind == opcodes.FIELD:
            return (FIELD_REF, resolve_field(dex, idx))
        if kind in (opcodes.METHOD, opcodes.METHOD_PROTO):
            return (METHOD_REF, resolve_method(dex, idx).qualified())
        if kind == opcodes.PROTO:
            return (LITERAL, f"proto@{idx}")
    except Exception:
        pass
    if kind in (opcodes.CALL_SITE, opcodes.METHOD_HANDLE):
        return (LITERAL, f"{kind}@{idx}")
    if warnings is not None:
        warnings.append(f"dangling {kind} index {idx} in instruction")
    return (LITERAL, f"{kind}@{idx}")


def _decode_operands(units: array, pos: int, fmt: str, kind: str | None,
                     op: int, dex: DexFile, warnings: list[str] | None) -> list:
    u = units
    unit = u[pos]
    aa = unit >> 8
    a4 = (unit >> 8) & 0xF
    b4 = (unit >> 12) & 0xF
    ops: list[tuple[str, object]] = []
    if fmt == "10x":
        pass
    elif fmt == "12x":
        ops = [(REGISTER, a4), (REGISTER, b4)]
    elif fmt == "11n":
        ops = [(REGISTER, a4), (LITERAL, _signed(b4, 4))]
    elif fmt == "11x":
        ops = [(REGISTER, aa)]
    elif fmt == "10t":
        ops = [(BRANCH_TARGET, pos + _signed(aa, 8))]
    elif fmt == "20t":
        ops = [(BRANCH_TARGET, pos + _signed(u[pos + 1], 16))]
    elif fmt == "22x":
        ops = [(REGISTER, aa), (REGISTER, u[pos + 1])]
    elif fmt == "21t":
        ops = [(REGISTER, aa), (BRANCH_TARGET, pos + _signed(u[pos + 1], 16))]
    elif fmt == "21s":
        ops = [(REGISTER, aa), (LITERAL, _signed(u[pos + 1], 16))]
    elif fmt == "21h":
        shift = 48 if op == 0x19 else 16
        ops = [(REGISTER, aa), (LITERAL, _signed(u[pos + 1], 16) << shift)]
    elif fmt == "21c":
        ops = [(REGISTER, aa), _ref_operand(kind, u[pos + 1], dex, warnings)]
    elif fmt == "23x":
        ops = [(REGISTER, aa), (REGISTER, u[pos + 1] & 0xFF), (REGISTER, u[pos + 1] >> 8)]
    elif fmt == "22b":
        ops = [(REGISTER, aa), (REGISTER, u[pos + 1] & 0xFF),
               (LITERAL, _signed(u[pos + 1] >> 8, 8))]
    elif fmt == "22t":
        ops = [(REGISTER, a4), (REGISTER, b4),
               (BRANCH_TARGET, pos + _signed(u[pos + 1], 16))]
    elif fmt == "22s":
        ops = [(REGISTER, a4), (REGISTER, b4), (LITERAL, _signed(u[pos + 1], 16))]
    elif fmt == "22c":
        ops = [(REGISTER, a4), (REGISTER, b4), _ref_operand(kind, u[pos + 1], dex, warnings)]
    elif fmt == "30t":
        off = _signed(u[pos + 1] | (u[pos + 2] << 16), 32)
        ops = [(BRANCH_TARGET, pos + off)]
    elif fmt == "32x":
        ops = [(REGISTER, u[pos + 1]), (REGISTER, u[pos + 2])]
    elif fmt == "31i":
        ops = [(REGISTER, aa), (LITERAL, _signed(u[pos + 1] | (u[pos + 2] << 16), 32))]
    elif fmt == "31t":
        off = _signed(u[pos + 1] | (u[pos + 2] << 16), 32)
        ops = [(REGISTER, aa), (BRANCH_TARGET, pos + off)]
    elif fmt == "31c":
        ops = [(REGISTER, aa), _ref_operand(kind, u[pos + 1] | (u[pos + 2] << 16), dex, warnings)]
    elif fmt == "35c":
        count = (unit >> 12) & 0xF
        g = (unit >> 8) & 0xF
        u3 = u[pos + 2]
        regs = [u3 & 0xF, (u3 >> 4) & 0xF, (u3 >> 8) & 0xF, (u3 >> 12) & 0xF, g][:min(count, 5)]
        ops = [(REGISTER, r) for r in regs]
        ops.append(_ref_operand(kind, u[pos + 1], dex, warnings))
    elif fmt == "3rc":
        first = u[pos + 2]
        ops = [(REGISTER, first), (LITERAL, aa),
               _ref_operand(kind, u[pos + 1], dex, warnings)]
    elif fmt == "45cc":
        count = (unit >> 12) & 0xF
        g = (unit >> 8) & 0xF
        u3 = u[pos + 2]
        regs = [u3 & 0xF, (u3 >> 4) & 0xF, (u3 >> 8) & 0xF, (u3 >> 12) & 0xF, g][:min(count, 5)]
        ops = [(REGISTER, r) for r in regs]
        ops.append(_ref_operand(opcodes.METHOD, u[pos + 1], dex, warnings))
        ops.append((LITERAL, f"proto@{u[pos + 3]}"))
    elif fmt == "4rcc":
        ops = [(REGISTER, u[pos + 2]), (LITERAL, aa),
               _ref_operand(opcodes.METHOD, u[pos + 1], dex, warnings),
               (LITERAL, f"proto@{u[pos + 3]}")]
    elif fmt == "51l":
        lit = u[pos + 1] | (u[pos + 2] << 16) | (u[pos + 3] << 32) | (u[pos + 4] << 48)
        ops = [(REGISTER, aa), (LITERAL, _signed(lit, 64))]
    return ops


def escape_text(text: str) -> str:
    """Escape to pure 7-bit ASCII; printable ASCII passes through."""
    out = []
    for ch in text:
        cp = ord(ch)
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif 0x20 <= cp < 0x7F:
            out.append(ch)
        elif cp <= 0xFFFF:
            out.append(f"\\u{cp:04x}")
        else:
            out.append(f"\\U{cp:08x}")
    return "".join(out)


def _render_operand(op: tuple[str, object]) -> str:
    kind, value = op
    if kind == REGISTER:
        return f"v{value}"
    if kind == STRING_REF:
        return f'"{escape_text(value)}"'
    if kind == BRANCH_TARGET:
        return f"-> 0x{value:04x}" if isinstance(value, int) and value >= 0 else f"-> {value}"
    if kind in (TYPE_REF, METHOD_REF, FIELD_REF):
        return escape_text(str(value))
    return str(value)


def render_instruction(inst: Instruction, unit_offset: int) -> str:
    if inst.mnemonic.startswith("invoke"):
        regs = [o for o in inst.operands if o[0] == REGISTER]
        rest = [o for o in inst.operands if o[0] != REGISTER]
        if inst.mnemonic.endswith("/range") or inst.mnemonic in ("invoke-polymorphic/range",):
            count = next((v for k, v in rest if k == LITERAL and isinstance(v, int)), 0)
            first = regs[0][1] if regs else 0
            reg_str = f"{{v{first} .. v{first + max(count - 1, 0)}}}"
            rest = [o for o in rest if not (o[0] == LITERAL and isinstance(o[1], int))]
        else:
            reg_str = "{" + ", ".join(f"v{v}" for _, v in regs) + "}"
        tail = ", ".join(_render_operand(o) for o in rest)
        body = f"{inst.mnemonic} {reg_str}, {tail}" if tail else f"{inst.mnemonic} {reg_str}"
    elif inst.mnemonic.endswith("-payload"):
        count = inst.operands[0][1] if inst.operands else 0
        body = f"{inst.mnemonic} ({count} elements)"
    else:
        rendered = ", ".join(_render_operand(o) for o in inst.operands)
        body = f"{inst.mnemonic} {rendered}" if rendered else inst.mnemonic
    return f"  {unit_offset:04x}: {body}"


def method_signature(dex: DexFile, method_idx: int) -> str:
    return resolve_method(dex, method_idx).signature


def render_function(class_def: ClassDef, method: MethodDef, dex: DexFile,
                    source_ref: tuple[int, int, int],
                    warnings: list[str] | None = None) -> FunctionUnit:
    """Render one code-bearing method as an LLM-ready text unit."""
    ref = resolve_method(dex, method.method_idx)
    flags = access_flag_names(method.access_flags)
    header = f"method {flags} {ref.qualified()}" if flags else f"method {ref.qualified()}"
    code = method.code
    lines = [escape_text(header),
             f"registers: {code.registers_size}  ins: {code.ins_size}"]
    instructions = decode_instructions(code, dex, warnings)
    offset = 0
    for inst in instructions:
        lines.append(render_instruction(inst, offset))
        offset += inst.width
    return FunctionUnit(
        qualified_name=f"{ref.class_dotted}.{ref.name}",
        signature=ref.signature,
        rendered_text="\n".join(lines),
        source_ref=source_ref,
        instruction_count=len(instructions),
    )


def package_of(dotted_class: str) -> str:
    if "." in dotted_class:
        return dotted_class.rsplit(".", 1)[0]
    return DEFAULT_PACKAGE


def build_units(dex_files: list[DexFile],
                warnings: list[str] | None = None) -> list[PackageUnit]:
    """Group every class from every DEX into a package/class/function tree.

    Methods without code (abstract, native) appear as declared-only
    skeleton entries. Ordering is deterministic: package name, class
    name, then method index. Duplicate class definitions across DEX
    files keep the first occurrence.
    """
    classes: dict[str, ClassUnit] = {}
    for dex_ordinal, dex in enumerate(dex_files):
        for class_def_index, cdef in enumerate(dex.class_defs):
            descriptor = dex.type_descriptors[cdef.type_idx]
            dotted = descriptor_to_dotted(descriptor)
            if dotted in classes:
                if warnings is not None:
                    warnings.append(f"duplicate class {dotted} in dex {dex_ordinal}; keeping first")
                continue
            unit = ClassUnit(
                original_name=dotted,
                descriptor=descriptor,
                access_flags=cdef.access_flags,
                field_lines=[
                    f"field {access_flag_names(f.access_flags)} {f.name}:{f.descriptor}".replace("  ", " ")
                    for f in cdef.fields
                ],
                declared_only=[],
                functions=[],
            )
            for m in sorted(cdef.methods, key=lambda m: m.method_idx):
                if m.code is None:
                    sig = method_signature(dex, m.method_idx)
                    flags = access_flag_names(m.access_flags)
                    unit.declared_only.append(f"{flags} {sig}".strip())
                    continue
                unit.functions.append(render_function(
                    cdef, m, dex, (dex_ordinal, class_def_index, m.method_idx), warnings))
            classes[dotted] = unit

    packages: dict[str, PackageUnit] = {}
    for dotted in sorted(classes):
        pkg = package_of(dotted)
        packages.setdefault(pkg, PackageUnit(pkg, [])).classes.append(classes[dotted])
    return [packages[name] for name in sorted(packages)]
