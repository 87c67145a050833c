"""Synthetic DEX and APK construction.

Real malware cannot ship with the repository, so tests, demos, and the
desk-scale evaluation corpus use small valid DEX files assembled here.
The writer is deliberately independent of the parser: it carries its own
opcode numbers and operand packing, so a round-trip through both sides is
a meaningful cross-check rather than a tautology. ``DexWriter.stats()``
and ``DexWriter.invoke_targets`` expose construction-side ground truth
for oracle tests.

Emitted files follow the format's ordering rules (sorted string, type,
proto, field, and method pools) and carry a correct checksum, signature,
and map list.
"""

from __future__ import annotations

import hashlib
import struct
import zipfile
import zlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .leb128 import encode_uleb128

PUBLIC = 0x1
PRIVATE = 0x2
PROTECTED = 0x4
STATIC = 0x8
FINAL = 0x10
NATIVE = 0x100
INTERFACE = 0x200
ABSTRACT = 0x400
SYNTHETIC = 0x1000
CONSTRUCTOR = 0x10000

NO_INDEX = 0xFFFFFFFF

_PRIM_SHORTY = set("VZBSCIJFD")


@dataclass
class Label:
    name: str


@dataclass
class _Ins:
    emit: object           # callable(ctx, addr) -> list[int] code units
    width_fn: object       # callable() -> int
    refs: tuple = ()       # pool refs this instruction pulls in
    target: str | None = None
    is_payload: bool = False
    outs: int = 0          # argument words an invoke passes


@dataclass
class _Method:
    name: str
    return_type: str
    params: tuple[str, ...]
    access: int
    registers: int
    code: list | None


@dataclass
class _Class:
    descriptor: str
    access: int
    superclass: str
    fields: list = dc_field(default_factory=list)    # (name, type_desc, access)
    methods: list[_Method] = dc_field(default_factory=list)

    def add_field(self, name: str, type_desc: str, access: int = PRIVATE) -> None:
        self.fields.append((name, type_desc, access))

    def add_method(self, name: str, return_type: str, params: list[str],
                   access: int = PUBLIC, registers: int | None = None,
                   code: list | None = None) -> None:
        ins_width = sum(2 if p in ("J", "D") else 1 for p in params)
        if not access & STATIC:
            ins_width += 1
        if registers is None:
            registers = ins_width + 4
        if registers < ins_width:
            raise ValueError("registers_size smaller than ins_size")
        self.methods.append(_Method(name, return_type, tuple(params), access, registers, code))


def _shorty_char(desc: str) -> str:
    return desc if desc in _PRIM_SHORTY else "L"


def _proto_key(return_type: str, params: tuple[str, ...]) -> tuple:
    return (return_type, params)


class ins:
    """Instruction constructors. Operand packing per the published format
    layouts; opcode numbers are local to the writer on purpose."""

    @staticmethod
    def _unit1(op: int, hi: int = 0) -> _Ins:
        return _Ins(lambda ctx, addr, u=(op | (hi << 8)): [u], lambda: 1)

    @staticmethod
    def nop() -> _Ins:
        return ins._unit1(0x00)

    @staticmethod
    def return_void() -> _Ins:
        return ins._unit1(0x0E)

    @staticmethod
    def return_object(reg: int) -> _Ins:
        return ins._unit1(0x11, reg)

    @staticmethod
    def return_value(reg: int) -> _Ins:
        return ins._unit1(0x0F, reg)

    @staticmethod
    def return_wide(reg: int) -> _Ins:
        return ins._unit1(0x10, reg)

    @staticmethod
    def move_result(reg: int) -> _Ins:
        return ins._unit1(0x0A, reg)

    @staticmethod
    def move_result_object(reg: int) -> _Ins:
        return ins._unit1(0x0C, reg)

    @staticmethod
    def const4(reg: int, value: int) -> _Ins:
        return ins._unit1(0x12, (reg & 0xF) | ((value & 0xF) << 4))

    @staticmethod
    def const16(reg: int, value: int) -> _Ins:
        return _Ins(lambda ctx, addr: [0x13 | (reg << 8), value & 0xFFFF], lambda: 2)

    @staticmethod
    def const_wide(reg: int, value: int) -> _Ins:
        def emit(ctx, addr):
            v = value & 0xFFFFFFFFFFFFFFFF
            return [0x18 | (reg << 8), v & 0xFFFF, (v >> 16) & 0xFFFF,
                    (v >> 32) & 0xFFFF, (v >> 48) & 0xFFFF]
        return _Ins(emit, lambda: 5)

    @staticmethod
    def const_string(reg: int, text: str) -> _Ins:
        ref = ("string", text)
        return _Ins(lambda ctx, addr: [0x1A | (reg << 8), ctx.string_id(text)],
                    lambda: 2, refs=(ref,))

    @staticmethod
    def const_class(reg: int, desc: str) -> _Ins:
        ref = ("type", desc)
        return _Ins(lambda ctx, addr: [0x1C | (reg << 8), ctx.type_id(desc)],
                    lambda: 2, refs=(ref,))

    @staticmethod
    def new_instance(reg: int, desc: str) -> _Ins:
        ref = ("type", desc)
        return _Ins(lambda ctx, addr: [0x22 | (reg << 8), ctx.type_id(desc)],
                    lambda: 2, refs=(ref,))

    @staticmethod
    def check_cast(reg: int, desc: str) -> _Ins:
        ref = ("type", desc)
        return _Ins(lambda ctx, addr: [0x1F | (reg << 8), ctx.type_id(desc)],
                    lambda: 2, refs=(ref,))

    @staticmethod
    def _invoke(op: int, regs: list[int], owner: str, name: str,
                return_type: str, params: list[str]) -> _Ins:
        if len(regs) > 5:
            raise ValueError("35c takes at most 5 registers")
        ref = ("method", (owner, name, return_type, tuple(params)))

        def emit(ctx, addr):
            r = list(regs) + [0] * (5 - len(regs))
            u1 = op | ((r[4] & 0xF) << 8) | (len(regs) << 12)
            u3 = (r[0] & 0xF) | ((r[1] & 0xF) << 4) | ((r[2] & 0xF) << 8) | ((r[3] & 0xF) << 12)
            return [u1, ctx.method_id(ref[1]), u3]
        return _Ins(emit, lambda: 3, refs=(ref,), outs=len(regs))

    @staticmethod
    def invoke_virtual(regs, owner, name, return_type, params):
        return ins._invoke(0x6E, regs, owner, name, return_type, params)

    @staticmethod
    def invoke_super(regs, owner, name, return_type, params):
        return ins._invoke(0x6F, regs, owner, name, return_type, params)

    @staticmethod
    def invoke_direct(regs, owner, name, return_type, params):
        return ins._invoke(0x70, regs, owner, name, return_type, params)

    @staticmethod
    def invoke_static(regs, owner, name, return_type, params):
        return ins._invoke(0x71, regs, owner, name, return_type, params)

    @staticmethod
    def invoke_interface(regs, owner, name, return_type, params):
        return ins._invoke(0x72, regs, owner, name, return_type, params)

    @staticmethod
    def _field_op_21c(op: int, reg: int, owner: str, name: str, type_desc: str) -> _Ins:
        ref = ("field", (owner, name, type_desc))
        return _Ins(lambda ctx, addr: [op | (reg << 8), ctx.field_id(ref[1])],
                    lambda: 2, refs=(ref,))

    @staticmethod
    def sget_object(reg, owner, name, type_desc):
        return ins._field_op_21c(0x62, reg, owner, name, type_desc)

    @staticmethod
    def sput_object(reg, owner, name, type_desc):
        return ins._field_op_21c(0x69, reg, owner, name, type_desc)

    @staticmethod
    def _field_op_22c(op: int, reg_a: int, reg_b: int, owner: str, name: str, type_desc: str) -> _Ins:
        ref = ("field", (owner, name, type_desc))

        def emit(ctx, addr):
            return [op | ((reg_a & 0xF) << 8) | ((reg_b & 0xF) << 12), ctx.field_id(ref[1])]
        return _Ins(emit, lambda: 2, refs=(ref,))

    @staticmethod
    def iget_object(reg_a, reg_b, owner, name, type_desc):
        return ins._field_op_22c(0x54, reg_a, reg_b, owner, name, type_desc)

    @staticmethod
    def iput_object(reg_a, reg_b, owner, name, type_desc):
        return ins._field_op_22c(0x5B, reg_a, reg_b, owner, name, type_desc)

    @staticmethod
    def add_int(dest: int, a: int, b: int) -> _Ins:
        return _Ins(lambda ctx, addr: [0x90 | (dest << 8), a | (b << 8)], lambda: 2)

    @staticmethod
    def mul_int(dest: int, a: int, b: int) -> _Ins:
        return _Ins(lambda ctx, addr: [0x92 | (dest << 8), a | (b << 8)], lambda: 2)

    @staticmethod
    def add_int_lit8(dest: int, src: int, lit: int) -> _Ins:
        return _Ins(lambda ctx, addr: [0xD8 | (dest << 8), src | ((lit & 0xFF) << 8)], lambda: 2)

    @staticmethod
    def array_length(dest: int, src: int) -> _Ins:
        return ins._unit1(0x21, (dest & 0xF) | ((src & 0xF) << 4))

    @staticmethod
    def new_array(dest: int, size_reg: int, desc: str) -> _Ins:
        ref = ("type", desc)

        def emit(ctx, addr):
            return [0x23 | ((dest & 0xF) << 8) | ((size_reg & 0xF) << 12), ctx.type_id(desc)]
        return _Ins(emit, lambda: 2, refs=(ref,))

    @staticmethod
    def aput(src: int, array: int, index: int) -> _Ins:
        return _Ins(lambda ctx, addr: [0x4B | (src << 8), array | (index << 8)], lambda: 2)

    @staticmethod
    def goto(target: str) -> _Ins:
        def emit(ctx, addr):
            off = ctx.label_addr(target) - addr
            return [0x28 | ((off & 0xFF) << 8)]
        return _Ins(emit, lambda: 1, target=target)

    @staticmethod
    def if_eqz(reg: int, target: str) -> _Ins:
        def emit(ctx, addr):
            off = ctx.label_addr(target) - addr
            return [0x38 | (reg << 8), off & 0xFFFF]
        return _Ins(emit, lambda: 2, target=target)

    @staticmethod
    def if_eq(reg_a: int, reg_b: int, target: str) -> _Ins:
        def emit(ctx, addr):
            off = ctx.label_addr(target) - addr
            return [0x32 | ((reg_a & 0xF) << 8) | ((reg_b & 0xF) << 12), off & 0xFFFF]
        return _Ins(emit, lambda: 2, target=target)

    @staticmethod
    def packed_switch(reg: int, payload_label: str) -> _Ins:
        def emit(ctx, addr):
            off = ctx.label_addr(payload_label) - addr
            return [0x2B | (reg << 8), off & 0xFFFF, (off >> 16) & 0xFFFF]
        return _Ins(emit, lambda: 3, target=payload_label)

    @staticmethod
    def packed_switch_payload(first_key: int, anchor_label: str, case_labels: list[str]) -> _Ins:
        size = len(case_labels)

        def emit(ctx, addr):
            base = ctx.label_addr(anchor_label)
            units = [0x0100, size, first_key & 0xFFFF, (first_key >> 16) & 0xFFFF]
            for lab in case_labels:
                off = ctx.label_addr(lab) - base
                units += [off & 0xFFFF, (off >> 16) & 0xFFFF]
            return units
        return _Ins(emit, lambda: size * 2 + 4, is_payload=True)

    @staticmethod
    def fill_array_data(reg: int, payload_label: str) -> _Ins:
        def emit(ctx, addr):
            off = ctx.label_addr(payload_label) - addr
            return [0x26 | (reg << 8), off & 0xFFFF, (off >> 16) & 0xFFFF]
        return _Ins(emit, lambda: 3, target=payload_label)

    @staticmethod
    def fill_array_data_payload(element_width: int, values: list[int]) -> _Ins:
        data = b"".join(v.to_bytes(element_width, "little", signed=True) for v in values)
        if len(data) % 2:
            data += b"\x00"

        def emit(ctx, addr):
            units = [0x0300, element_width, len(values) & 0xFFFF, (len(values) >> 16) & 0xFFFF]
            for i in range(0, len(data), 2):
                units.append(int.from_bytes(data[i:i + 2], "little"))
            return units
        return _Ins(emit, lambda: len(data) // 2 + 4, is_payload=True)

    @staticmethod
    def raw_units(units: list[int]) -> _Ins:
        """Escape hatch for negative fixtures (undefined opcodes, etc.)."""
        return _Ins(lambda ctx, addr: list(units), lambda: len(units))


class _EncodeCtx:
    def __init__(self, writer: "DexWriter", labels: dict[str, int]):
        self._w = writer
        self._labels = labels

    def string_id(self, s: str) -> int:
        return self._w._string_ids[s]

    def type_id(self, d: str) -> int:
        return self._w._type_ids[d]

    def method_id(self, key) -> int:
        return self._w._method_ids[key]

    def field_id(self, key) -> int:
        return self._w._field_ids[key]

    def label_addr(self, name: str) -> int:
        return self._labels[name]


class DexWriter:
    """Assembles class specs into one valid DEX payload."""

    def __init__(self, version: bytes = b"035"):
        self.version = version
        self.classes: list[_Class] = []
        # construction-side ground truth, filled by build()
        self.invoke_targets: dict[str, set[str]] = {}
        self._stats: dict[str, int] = {}

    def add_class(self, descriptor: str, access: int = PUBLIC,
                  superclass: str = "Ljava/lang/Object;") -> _Class:
        cls = _Class(descriptor, access, superclass)
        self.classes.append(cls)
        return cls

    def stats(self) -> dict[str, int]:
        return dict(self._stats)

    # -- pool assembly -------------------------------------------------------

    def _collect_pools(self):
        strings: set[str] = set()
        types: set[str] = set()
        protos: set[tuple] = set()
        fields: set[tuple] = set()
        methods: set[tuple] = set()

        def note_proto(ret: str, params: tuple[str, ...]):
            shorty = _shorty_char(ret) + "".join(_shorty_char(p) for p in params)
            strings.add(shorty)
            types.add(ret)
            types.update(params)
            protos.add(_proto_key(ret, params))

        for cls in self.classes:
            types.add(cls.descriptor)
            types.add(cls.superclass)
            strings.add(cls.descriptor)
            strings.add(cls.superclass)
            for name, tdesc, _ in cls.fields:
                strings.update((name, tdesc))
                types.add(tdesc)
                fields.add((cls.descriptor, name, tdesc))
            for m in cls.methods:
                strings.add(m.name)
                note_proto(m.return_type, m.params)
                methods.add((cls.descriptor, m.name, m.return_type, m.params))
                for item in m.code or []:
                    if isinstance(item, Label):
                        continue
                    for kind, val in item.refs:
                        if kind == "string":
                            strings.add(val)
                        elif kind == "type":
                            types.add(val)
                            strings.add(val)
                        elif kind == "method":
                            owner, name, ret, params = val
                            strings.add(owner)
                            strings.add(name)
                            types.add(owner)
                            note_proto(ret, params)
                            methods.add(val)
                        elif kind == "field":
                            owner, name, tdesc = val
                            strings.update((owner, name, tdesc))
                            types.update((owner, tdesc))
                            fields.add(val)
        for t in types:
            strings.add(t)

        # pool ordering per the format's sorting rules
        sorted_strings = sorted(strings, key=lambda s: s.encode("utf-16-be"))
        self._string_ids = {s: i for i, s in enumerate(sorted_strings)}
        sorted_types = sorted(types, key=lambda t: self._string_ids[t])
        self._type_ids = {t: i for i, t in enumerate(sorted_types)}

        def proto_sort_key(pk):
            ret, params = pk
            return (self._type_ids[ret], tuple(self._type_ids[p] for p in params))
        sorted_protos = sorted(protos, key=proto_sort_key)
        self._proto_ids = {pk: i for i, pk in enumerate(sorted_protos)}
        self._protos = sorted_protos

        sorted_fields = sorted(
            fields, key=lambda f: (self._type_ids[f[0]], self._string_ids[f[1]], self._type_ids[f[2]]))
        self._field_ids = {f: i for i, f in enumerate(sorted_fields)}
        self._fields = sorted_fields

        def method_sort_key(mk):
            owner, name, ret, params = mk
            return (self._type_ids[owner], self._string_ids[name],
                    self._proto_ids[_proto_key(ret, params)])
        sorted_methods = sorted(methods, key=method_sort_key)
        self._method_ids = {mk: i for i, mk in enumerate(sorted_methods)}
        self._methods = sorted_methods
        self._strings = sorted_strings

    # -- code assembly -------------------------------------------------------

    def _assemble(self, method: _Method, owner: str) -> bytes:
        items = method.code or []
        # pass 1: assign unit offsets; payloads are 2-unit aligned via a nop,
        # and labels bind to the instruction's post-alignment address
        expanded: list[_Ins] = []
        offsets: dict[str, int] = {}
        pending: list[str] = []
        addr = 0
        for item in items:
            if isinstance(item, Label):
                pending.append(item.name)
                continue
            if item.is_payload and addr % 2:
                expanded.append(ins.nop())
                addr += 1
            for name in pending:
                offsets[name] = addr
            pending.clear()
            expanded.append(item)
            addr += item.width_fn()
        for name in pending:
            offsets[name] = addr

        ctx = _EncodeCtx(self, offsets)
        units: list[int] = []
        addr = 0
        outs = 0
        qualified = f"{_dotted(owner)}.{_signature(method)}"
        for item in expanded:
            emitted = item.emit(ctx, addr)
            units.extend(emitted)
            addr += len(emitted)
            outs = max(outs, item.outs)
            for kind, val in item.refs:
                if kind == "method":
                    t_owner, t_name, _, _ = val
                    self.invoke_targets.setdefault(qualified, set()).add(
                        f"{_dotted(t_owner)}.{t_name}")
        ins_size = (sum(2 if p in ("J", "D") else 1 for p in method.params)
                    + (0 if method.access & STATIC else 1))
        out = struct.pack("<HHHHII", method.registers, ins_size, outs, 0, 0, len(units))
        out += b"".join(struct.pack("<H", u) for u in units)
        return out

    # -- final layout ----------------------------------------------------------

    def build(self) -> bytes:
        self._collect_pools()
        self.invoke_targets = {}
        for cls in self.classes:
            for m in cls.methods:
                if m.code is not None:
                    self.invoke_targets.setdefault(
                        f"{_dotted(cls.descriptor)}.{_signature(m)}", set())

        header_size = 0x70
        string_ids_off = header_size
        type_ids_off = string_ids_off + 4 * len(self._strings)
        proto_ids_off = type_ids_off + 4 * len(self._type_ids)
        field_ids_off = proto_ids_off + 12 * len(self._protos)
        method_ids_off = field_ids_off + 8 * len(self._fields)
        class_defs_off = method_ids_off + 8 * len(self._methods)
        data_off = class_defs_off + 32 * len(self.classes)

        data = bytearray()

        def align4():
            while (data_off + len(data)) % 4:
                data.append(0)

        # type_lists for protos with parameters
        type_list_offs: dict[tuple, int] = {}
        for pk in self._protos:
            _, params = pk
            if not params:
                continue
            align4()
            type_list_offs[pk] = data_off + len(data)
            data += struct.pack("<I", len(params))
            for p in params:
                data += struct.pack("<H", self._type_ids[p])
        n_type_lists = len(type_list_offs)

        # code items
        code_offs: dict[tuple, int] = {}
        n_code = 0
        sorted_classes = sorted(self.classes, key=lambda c: self._type_ids[c.descriptor])
        for cls in sorted_classes:
            for m in cls.methods:
                if m.code is None:
                    continue
                align4()
                code_offs[(cls.descriptor, m.name, m.return_type, m.params)] = data_off + len(data)
                data += self._assemble(m, cls.descriptor)
                n_code += 1

        # class_data items
        class_data_offs: dict[str, int] = {}
        for cls in sorted_classes:
            blob = bytearray()
            sorted_fields = sorted(
                cls.fields, key=lambda f: self._field_ids[(cls.descriptor, f[0], f[1])])
            statics = [f for f in sorted_fields if f[2] & STATIC]
            instances = [f for f in sorted_fields if not f[2] & STATIC]

            def is_direct(m: _Method) -> bool:
                return bool(m.access & (STATIC | PRIVATE)) or m.name in ("<init>", "<clinit>")
            directs = sorted((m for m in cls.methods if is_direct(m)),
                             key=lambda m: self._method_ids[(cls.descriptor, m.name, m.return_type, m.params)])
            virtuals = sorted((m for m in cls.methods if not is_direct(m)),
                              key=lambda m: self._method_ids[(cls.descriptor, m.name, m.return_type, m.params)])

            blob += encode_uleb128(len(statics))
            blob += encode_uleb128(len(instances))
            blob += encode_uleb128(len(directs))
            blob += encode_uleb128(len(virtuals))
            for group in (statics, instances):
                prev = 0
                for name, tdesc, access in group:
                    idx = self._field_ids[(cls.descriptor, name, tdesc)]
                    blob += encode_uleb128(idx - prev)
                    blob += encode_uleb128(access)
                    prev = idx
            for group in (directs, virtuals):
                prev = 0
                for m in group:
                    key = (cls.descriptor, m.name, m.return_type, m.params)
                    idx = self._method_ids[key]
                    blob += encode_uleb128(idx - prev)
                    blob += encode_uleb128(m.access)
                    blob += encode_uleb128(code_offs.get(key, 0))
                    prev = idx
            class_data_offs[cls.descriptor] = data_off + len(data)
            data += blob

        # string data
        string_data_offs: list[int] = []
        for s in self._strings:
            string_data_offs.append(data_off + len(data))
            encoded = _encode_mutf8(s)
            data += encode_uleb128(len(s))  # utf16 length: fixtures stay in the BMP
            data += encoded + b"\x00"

        # map list
        align4()
        map_off = data_off + len(data)
        map_items = [(0x0000, 1, 0),
                     (0x0001, len(self._strings), string_ids_off),
                     (0x0002, len(self._type_ids), type_ids_off),
                     (0x0003, len(self._protos), proto_ids_off)]
        if self._fields:
            map_items.append((0x0004, len(self._fields), field_ids_off))
        map_items.append((0x0005, len(self._methods), method_ids_off))
        map_items.append((0x0006, len(self.classes), class_defs_off))
        if n_type_lists:
            map_items.append((0x1001, n_type_lists, min(type_list_offs.values())))
        if n_code:
            map_items.append((0x2001, n_code, min(code_offs.values())))
        map_items.append((0x2000, len(self.classes), min(class_data_offs.values())))
        map_items.append((0x2002, len(self._strings), string_data_offs[0]))
        map_items.append((0x1000, 1, map_off))
        map_items.sort(key=lambda it: it[2])
        data += struct.pack("<I", len(map_items))
        for t, size, off in map_items:
            data += struct.pack("<HHII", t, 0, size, off)

        # id tables
        body = bytearray()
        for off in string_data_offs:
            body += struct.pack("<I", off)
        for t in sorted(self._type_ids, key=self._type_ids.get):
            body += struct.pack("<I", self._string_ids[t])
        for pk in self._protos:
            ret, params = pk
            shorty = _shorty_char(ret) + "".join(_shorty_char(p) for p in params)
            body += struct.pack("<III", self._string_ids[shorty],
                                self._type_ids[ret], type_list_offs.get(pk, 0))
        for owner, name, tdesc in self._fields:
            body += struct.pack("<HHI", self._type_ids[owner], self._type_ids[tdesc],
                                self._string_ids[name])
        for owner, name, ret, params in self._methods:
            body += struct.pack("<HHI", self._type_ids[owner],
                                self._proto_ids[_proto_key(ret, params)],
                                self._string_ids[name])
        for cls in sorted_classes:
            body += struct.pack("<IIIIIIII",
                                self._type_ids[cls.descriptor],
                                cls.access,
                                self._type_ids[cls.superclass],
                                0, NO_INDEX, 0,
                                class_data_offs[cls.descriptor],
                                0)

        total_size = data_off + len(data)
        header = bytearray(0x70)
        header[0:4] = b"dex\n"
        header[4:7] = self.version
        header[7] = 0
        struct.pack_into("<I", header, 32, total_size)
        struct.pack_into("<I", header, 36, header_size)
        struct.pack_into("<I", header, 40, 0x12345678)
        struct.pack_into("<II", header, 44, 0, 0)                       # link
        struct.pack_into("<I", header, 52, map_off)
        struct.pack_into("<II", header, 56, len(self._strings), string_ids_off)
        struct.pack_into("<II", header, 64, len(self._type_ids), type_ids_off)
        struct.pack_into("<II", header, 72, len(self._protos), proto_ids_off)
        struct.pack_into("<II", header, 80, len(self._fields), field_ids_off)
        struct.pack_into("<II", header, 88, len(self._methods), method_ids_off)
        struct.pack_into("<II", header, 96, len(self.classes), class_defs_off)
        struct.pack_into("<II", header, 104, len(data), data_off)

        blob = bytes(header) + bytes(body) + bytes(data)
        assert len(body) == data_off - header_size
        digest = hashlib.sha1(blob[32:]).digest()
        blob = blob[:12] + digest + blob[32:]
        checksum = zlib.adler32(blob[12:]) & 0xFFFFFFFF
        blob = blob[:8] + struct.pack("<I", checksum) + blob[12:]

        self._stats = {
            "strings": len(self._strings),
            "types": len(self._type_ids),
            "protos": len(self._protos),
            "fields": len(self._fields),
            "methods": len(self._methods),
            "classes": len(self.classes),
        }
        return blob


def _dotted(descriptor: str) -> str:
    if descriptor.startswith("L") and descriptor.endswith(";"):
        return descriptor[1:-1].replace("/", ".")
    return descriptor


def _signature(method: _Method) -> str:
    return f"{method.name}({''.join(method.params)}){method.return_type}"


def _encode_mutf8(s: str) -> bytes:
    out = bytearray()
    for ch in s:
        cp = ord(ch)
        if cp == 0:
            out += b"\xc0\x80"
        elif cp < 0x80:
            out.append(cp)
        elif cp < 0x800:
            out += bytes((0xC0 | (cp >> 6), 0x80 | (cp & 0x3F)))
        elif cp < 0x10000:
            out += bytes((0xE0 | (cp >> 12), 0x80 | ((cp >> 6) & 0x3F), 0x80 | (cp & 0x3F)))
        else:
            cp -= 0x10000
            for unit in (0xD800 + (cp >> 10), 0xDC00 + (cp & 0x3FF)):
                out += bytes((0xE0 | (unit >> 12), 0x80 | ((unit >> 6) & 0x3F), 0x80 | (unit & 0x3F)))
    return bytes(out)


def write_apk(path: str | Path, dex_payloads: list[bytes],
              extra_entries: dict[str, bytes] | None = None) -> None:
    """Write a minimal APK-shaped ZIP with deterministic metadata."""
    path = Path(path)
    entries: list[tuple[str, bytes]] = [("AndroidManifest.xml", b"\x03\x00\x08\x00stub")]
    for i, payload in enumerate(dex_payloads):
        name = "classes.dex" if i == 0 else f"classes{i + 1}.dex"
        entries.append((name, payload))
    for name, payload in (extra_entries or {}).items():
        entries.append((name, payload))
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, payload in entries:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)


# -- ready-made samples -------------------------------------------------------

DYNLOAD_CLASS_NAME = "cn.engine.RootPermApi"


def rooting_sample_writer(variant: int = 0) -> DexWriter:
    """Classes mimicking a dynamic-loading rooting payload: a utility class
    whose synthetic ``b`` method loads ``cn.engine.RootPermApi`` through a
    ``DexClassLoader`` and drives it via reflection."""
    w = DexWriter()
    rt = w.add_class("Lcn/utils/RTUtils;")
    rt.add_field("a", "Ldalvik/system/DexClassLoader;", access=PRIVATE | STATIC)
    rt.add_method(
        "a", "Ljava/lang/String;", ["Landroid/content/Context;"],
        access=PRIVATE | STATIC, registers=3,
        code=[
            ins.const_string(0, f"rt_cfg_{variant}"),
            ins.return_object(0),
        ])
    rt.add_method(
        "initRoot", "V", ["Landroid/content/Context;"],
        access=PUBLIC | STATIC, registers=5,
        code=[
            ins.invoke_static([4], "Lcn/utils/RTUtils;", "a",
                              "Ljava/lang/String;", ["Landroid/content/Context;"]),
            ins.move_result_object(0),
            ins.new_instance(1, "Ljava/lang/Thread;"),
            ins.invoke_static([4, 0, 0], "Lcn/utils/RTUtils;", "b", "V",
                              ["Landroid/content/Context;", "Ljava/lang/String;", "Ljava/lang/String;"]),
            ins.invoke_virtual([1], "Ljava/lang/Thread;", "start", "V", []),
            ins.return_void(),
        ])
    rt.add_method(
        "b", "V",
        ["Landroid/content/Context;", "Ljava/lang/String;", "Ljava/lang/String;"],
        access=STATIC | SYNTHETIC, registers=8,
        code=[
            ins.const_string(0, DYNLOAD_CLASS_NAME),
            ins.new_instance(1, "Ldalvik/system/DexClassLoader;"),
            ins.const_string(2, "/data/local/tmp/root.jar"),
            ins.invoke_direct([1, 2, 2, 2, 2], "Ldalvik/system/DexClassLoader;", "<init>", "V",
                              ["Ljava/lang/String;", "Ljava/lang/String;",
                               "Ljava/lang/String;", "Ljava/lang/ClassLoader;"]),
            ins.sput_object(1, "Lcn/utils/RTUtils;", "a", "Ldalvik/system/DexClassLoader;"),
            ins.invoke_virtual([1, 0], "Ldalvik/system/DexClassLoader;", "loadClass",
                               "Ljava/lang/Class;", ["Ljava/lang/String;"]),
            ins.move_result_object(1),
            ins.const_string(2, "initRoot"),
            ins.invoke_virtual([1, 2, 3], "Ljava/lang/Class;", "getMethod",
                               "Ljava/lang/reflect/Method;",
                               ["Ljava/lang/String;", "[Ljava/lang/Class;"]),
            ins.move_result_object(2),
            ins.const4(3, 1),
            ins.invoke_virtual([2, 3], "Ljava/lang/reflect/Method;", "setAccessible", "V", ["Z"]),
            ins.invoke_virtual([2, 1, 5], "Ljava/lang/reflect/Method;", "invoke",
                               "Ljava/lang/Object;", ["Ljava/lang/Object;", "[Ljava/lang/Object;"]),
            ins.return_void(),
        ])
    rt.add_method(
        "executeRoot", "V",
        ["Landroid/content/Context;", "Ljava/lang/String;", "Z"],
        access=PUBLIC | STATIC, registers=6,
        code=[
            ins.invoke_static([], "Ljava/lang/Runtime;", "getRuntime", "Ljava/lang/Runtime;", []),
            ins.move_result_object(0),
            ins.const_string(1, "su"),
            ins.invoke_virtual([0, 1], "Ljava/lang/Runtime;", "exec",
                               "Ljava/lang/Process;", ["Ljava/lang/String;"]),
            ins.move_result_object(1),
            ins.const_string(2, "/system/bin/su"),
            ins.return_void(),
        ])

    app = w.add_class("Lcn/app/MainActivity;", superclass="Landroid/app/Activity;")
    app.add_method(
        "onCreate", "V", ["Landroid/os/Bundle;"],
        access=PUBLIC, registers=4,
        code=[
            ins.invoke_static([2], "Lcn/utils/RTUtils;", "initRoot", "V",
                              ["Landroid/content/Context;"]),
            ins.return_void(),
        ])
    app.add_method(
        "label", "Ljava/lang/String;", [],
        access=PUBLIC, registers=3,
        code=[
            ins.const_string(0, f"screen_{variant}"),
            ins.return_object(0),
        ])
    return w


def benign_sample_writer(variant: int = 0) -> DexWriter:
    """Harmless arithmetic/string classes; also exercises switch and
    fill-array payloads, branches, and wide constants."""
    w = DexWriter()
    calc = w.add_class(f"Lcom/example/calc/Calculator{variant};")
    calc.add_field("total", "I", access=PRIVATE)
    calc.add_method(
        "add", "I", ["I", "I"],
        access=PUBLIC, registers=5,
        code=[
            ins.add_int(0, 3, 4),
            ins.return_value(0),
        ])
    calc.add_method(
        "scale", "I", ["I"],
        access=PUBLIC, registers=5,
        code=[
            ins.const16(0, 100 + variant),
            ins.mul_int(0, 0, 4),
            ins.return_value(0),
        ])
    calc.add_method(
        "pick", "I", ["I"],
        access=PUBLIC, registers=4,
        code=[
            Label("start"),
            ins.packed_switch(3, "cases"),
            ins.const4(0, 0),
            Label("out"),
            ins.return_value(0),
            Label("case_a"),
            ins.const4(0, 1),
            ins.goto("out"),
            Label("case_b"),
            ins.const4(0, 2),
            ins.goto("out"),
            Label("cases"),
            ins.packed_switch_payload(0, "start", ["case_a", "case_b"]),
        ])
    calc.add_method(
        "table", "[I", [],
        access=PUBLIC, registers=4,
        code=[
            ins.const4(0, 4),
            ins.new_array(1, 0, "[I"),
            ins.fill_array_data(1, "tbl"),
            ins.return_object(1),
            Label("tbl"),
            ins.fill_array_data_payload(4, [1, 2, 3, 4]),
        ])
    calc.add_method(
        "big", "J", [],
        access=PUBLIC, registers=4,
        code=[
            ins.const_wide(0, 1_000_000_007),
            ins.return_wide(0),
        ])

    util = w.add_class(f"Lcom/example/util/Strings{variant};")
    util.add_method(
        "greet", "Ljava/lang/String;", ["Ljava/lang/String;"],
        access=PUBLIC | STATIC, registers=4,
        code=[
            ins.new_instance(0, "Ljava/lang/StringBuilder;"),
            ins.invoke_direct([0], "Ljava/lang/StringBuilder;", "<init>", "V", []),
            ins.const_string(1, f"hello-{variant}"),
            ins.invoke_virtual([0, 1], "Ljava/lang/StringBuilder;", "append",
                               "Ljava/lang/StringBuilder;", ["Ljava/lang/String;"]),
            ins.invoke_virtual([0, 3], "Ljava/lang/StringBuilder;", "append",
                               "Ljava/lang/StringBuilder;", ["Ljava/lang/String;"]),
            ins.invoke_virtual([0], "Ljava/lang/StringBuilder;", "toString",
                               "Ljava/lang/String;", []),
            ins.move_result_object(1),
            ins.return_object(1),
        ])
    util.add_method(
        "maybe", "I", ["I"],
        access=PUBLIC | STATIC, registers=3,
        code=[
            ins.if_eqz(2, "zero"),
            ins.const4(0, 7),
            ins.return_value(0),
            Label("zero"),
            ins.const4(0, 0),
            ins.return_value(0),
        ])
    iface = w.add_class(f"Lcom/example/util/Visitor{variant};",
                        access=PUBLIC | INTERFACE | ABSTRACT)
    iface.add_method("visit", "V", ["Ljava/lang/Object;"], access=PUBLIC | ABSTRACT, code=None)
    return w


def rooting_sample_dex(variant: int = 0) -> bytes:
    return rooting_sample_writer(variant).build()


def benign_sample_dex(variant: int = 0) -> bytes:
    return benign_sample_writer(variant).build()
