import re

from apktriage.dexfile import parse_dex
from apktriage.dexgen import STATIC, DexWriter, ins
from apktriage.disasm import (
    build_units,
    decode_instructions,
    escape_text,
    render_function,
    render_instruction,
)

_INVOKE_TARGET = re.compile(r"invoke-[\w/-]+ \{[^}]*\}, ([^(\s]+)\(")


def _function_units(dex_bytes):
    units = build_units([parse_dex(dex_bytes)])
    return [(fn, cls) for pkg in units for cls in pkg.classes for fn in cls.functions]


def test_const_string_operand(rooting_dex):
    dex = parse_dex(rooting_dex)
    found = []
    for cdef in dex.class_defs:
        for m in cdef.methods:
            if m.code is None:
                continue
            for inst in decode_instructions(m.code, dex):
                if inst.mnemonic == "const-string":
                    found.append(inst.operands[-1])
    assert ("string_ref", "cn.engine.RootPermApi") in found


def test_empty_insns_decodes_empty():
    w = DexWriter()
    cls = w.add_class("Lt/Empty;")
    cls.add_method("nothing", "V", [], access=STATIC, registers=1, code=[])
    dex = parse_dex(w.build())
    method = dex.class_defs[0].methods[0]
    assert decode_instructions(method.code, dex) == []
    unit = render_function(dex.class_defs[0], method, dex, (0, 0, 0))
    lines = unit.rendered_text.splitlines()
    assert len(lines) == 2  # header + registers, nothing else
    assert unit.instruction_count == 0


def test_unknown_opcode_keeps_decoding():
    w = DexWriter()
    cls = w.add_class("Lt/Weird;")
    cls.add_method("odd", "V", [], access=STATIC, registers=2,
                   code=[ins.raw_units([0x003E]), ins.const4(0, 1), ins.return_void()])
    dex = parse_dex(w.build())
    method = dex.class_defs[0].methods[0]
    instructions = decode_instructions(method.code, dex)
    assert [i.mnemonic for i in instructions] == ["unknown-0x3e", "const/4", "return-void"]


def test_truncated_stream_warns_and_returns_partial():
    w = DexWriter()
    cls = w.add_class("Lt/Cut;")
    # const/16 needs two units; supply only the first
    cls.add_method("cut", "V", [], access=STATIC, registers=2,
                   code=[ins.const4(0, 1), ins.raw_units([0x13])])
    dex = parse_dex(w.build())
    method = dex.class_defs[0].methods[0]
    warnings = []
    instructions = decode_instructions(method.code, dex, warnings)
    assert [i.mnemonic for i in instructions] == ["const/4"]
    assert any("truncated" in w for w in warnings)


def test_width_sum_covers_insns(all_fixture_writers):
    for name, writer in all_fixture_writers:
        dex = parse_dex(writer.build())
        for cdef in dex.class_defs:
            for m in cdef.methods:
                if m.code is None:
                    continue
                instructions = decode_instructions(m.code, dex)
                assert sum(i.width for i in instructions) == m.code.insns_count, name


def test_rendered_b_contains_loader_calls(rooting_dex):
    fns = _function_units(rooting_dex)
    b = next(fn for fn, _ in fns if fn.qualified_name == "cn.utils.RTUtils.b")
    assert "DexClassLoader" in b.rendered_text
    assert "loadClass" in b.rendered_text
    assert '"cn.engine.RootPermApi"' in b.rendered_text


def test_invoke_targets_match_construction(all_fixture_writers):
    for name, writer in all_fixture_writers:
        blob = writer.build()
        for fn, _ in _function_units(blob):
            paren = fn.signature.index("(")
            key = fn.qualified_name + fn.signature[paren:]
            want = writer.invoke_targets[key]
            got = set(_INVOKE_TARGET.findall(fn.rendered_text))
            assert got == want, (name, key)


def test_payload_rendered_as_summary_line(benign_dex):
    fns = _function_units(benign_dex)
    pick = next(fn for fn, _ in fns if fn.signature.startswith("pick("))
    assert "packed-switch-payload (2 elements)" in pick.rendered_text
    table = next(fn for fn, _ in fns if fn.signature.startswith("table("))
    assert "fill-array-data-payload (4 elements)" in table.rendered_text
    assert "1, 2, 3, 4" not in table.rendered_text  # raw data stays out


def test_branch_targets_resolve(benign_dex):
    fns = _function_units(benign_dex)
    maybe = next(fn for fn, _ in fns if fn.signature.startswith("maybe("))
    assert re.search(r"if-eqz v\d+, -> 0x[0-9a-f]{4}", maybe.rendered_text)


def test_synthetic_methods_kept(rooting_dex):
    fns = _function_units(rooting_dex)
    b = next(fn for fn, _ in fns if fn.qualified_name == "cn.utils.RTUtils.b")
    assert "synthetic" in b.rendered_text.splitlines()[0]


def test_grouping_rules():
    w = DexWriter()
    for desc in ("Lcom/a/X;", "Lcom/a/Y;", "Lcom/b/Z;", "LMain;"):
        cls = w.add_class(desc)
        cls.add_method("go", "V", [], access=STATIC, registers=1,
                       code=[ins.return_void()])
    units = build_units([parse_dex(w.build())])
    names = {pkg.package_name: [c.original_name for c in pkg.classes] for pkg in units}
    assert names == {
        "(default)": ["Main"],
        "com.a": ["com.a.X", "com.a.Y"],
        "com.b": ["com.b.Z"],
    }


def test_interface_with_abstract_methods_present(benign_dex):
    units = build_units([parse_dex(benign_dex)])
    iface = next(cls for pkg in units for cls in pkg.classes
                 if "Visitor" in cls.original_name)
    assert iface.functions == []
    assert iface.declared_only, "abstract methods appear in the skeleton"


def test_multidex_merge(rooting_dex, benign_dex):
    units = build_units([parse_dex(rooting_dex), parse_dex(benign_dex)])
    packages = [pkg.package_name for pkg in units]
    assert packages == sorted(packages)
    assert "cn.utils" in packages and "com.example.calc" in packages


def test_rendering_deterministic(rooting_dex):
    first = {fn.qualified_name: fn.rendered_text for fn, _ in _function_units(rooting_dex)}
    second = {fn.qualified_name: fn.rendered_text for fn, _ in _function_units(rooting_dex)}
    assert first == second


def test_function_count_equals_code_bearing_methods(all_fixture_writers):
    for name, writer in all_fixture_writers:
        dex = parse_dex(writer.build())
        expected = sum(1 for cdef in dex.class_defs for m in cdef.methods
                       if m.code is not None)
        got = sum(len(cls.functions) for pkg in build_units([dex]) for cls in pkg.classes)
        assert got == expected, name


def test_const_strings_appear_exactly_where_referenced(all_fixture_writers):
    for name, writer in all_fixture_writers:
        blob = writer.build()
        dex = parse_dex(blob)
        fns = _function_units(blob)
        refs: dict[int, set[str]] = {}    # method_idx -> const-string literals
        for cdef in dex.class_defs:
            for m in cdef.methods:
                if m.code is None:
                    continue
                refs[m.method_idx] = {
                    op[1] for inst in decode_instructions(m.code, dex)
                    for op in inst.operands
                    if op[0] == "string_ref" and inst.mnemonic.startswith("const-string")}
        all_literals = set().union(*refs.values()) if refs else set()
        for fn, _ in fns:
            referenced = refs[fn.source_ref[2]]
            for lit in all_literals:
                present = f'"{lit}"' in fn.rendered_text
                assert present == (lit in referenced), (name, fn.qualified_name, lit)


def test_escape_text_is_seven_bit():
    text = 'quote " backslash \\ newline \n unicode é emoji \U0001f600'
    escaped = escape_text(text)
    assert all(ord(c) < 128 for c in escaped)
    assert '\\"' in escaped and "\\\\" in escaped
    assert "\\u00e9" in escaped and "\\U0001f600" in escaped


def test_rendered_text_pure_ascii(all_fixture_writers):
    for name, writer in all_fixture_writers:
        for fn, _ in _function_units(writer.build()):
            assert all(ord(c) < 128 for c in fn.rendered_text), name


def _code(units):
    import struct as _struct
    insns = b"".join(_struct.pack("<H", u & 0xFFFF) for u in units)
    from apktriage.dexfile import CodeItem
    return CodeItem(registers_size=4, ins_size=0, insns=insns, insns_count=len(units))


def test_decode_const_string_jumbo(rooting_dex):
    dex = parse_dex(rooting_dex)
    idx = dex.strings.index("cn.engine.RootPermApi")
    instructions = decode_instructions(
        _code([0x1B, idx & 0xFFFF, idx >> 16, 0x0E]), dex)
    assert instructions[0].mnemonic == "const-string/jumbo"
    assert instructions[0].operands[-1] == ("string_ref", "cn.engine.RootPermApi")
    assert instructions[0].width == 3
    assert instructions[1].mnemonic == "return-void"


def test_decode_wide_and_high16(rooting_dex):
    dex = parse_dex(rooting_dex)
    # const/high16 v0, 0x7fff0000 ; const-wide/high16 v1, 0x0001000000000000
    instructions = decode_instructions(
        _code([0x15, 0x7FFF, 0x19 | (1 << 8), 0x0001]), dex)
    assert instructions[0].operands == (("register", 0), ("literal", 0x7FFF << 16))
    assert instructions[1].operands == (("register", 1), ("literal", 1 << 48))


def test_decode_long_branches(rooting_dex):
    dex = parse_dex(rooting_dex)
    # goto/16 +5 ; goto/32 -2 (relative to its own start at unit 2)
    instructions = decode_instructions(
        _code([0x29, 0x0005, 0x2A, 0xFFFE, 0xFFFF]), dex)
    assert instructions[0].operands == (("branch_target", 5),)
    assert instructions[1].operands == (("branch_target", 0),)


def test_decode_move16_and_22t(rooting_dex):
    dex = parse_dex(rooting_dex)
    # move/16 v256, v257 ; if-eq v1, v2, +3
    instructions = decode_instructions(
        _code([0x03, 256, 257, 0x32 | (1 << 8) | (2 << 12), 0x0003]), dex)
    assert instructions[0].operands == (("register", 256), ("register", 257))
    assert instructions[1].operands == (
        ("register", 1), ("register", 2), ("branch_target", 6))


def test_decode_invoke_polymorphic(rooting_dex):
    dex = parse_dex(rooting_dex)
    midx = 0
    # invoke-polymorphic {v0, v1}, meth@0, proto@2
    instructions = decode_instructions(
        _code([0xFA | (2 << 12), midx, 0x0010, 0x0002]), dex)
    inst = instructions[0]
    assert inst.mnemonic == "invoke-polymorphic"
    assert inst.width == 4
    kinds = [k for k, _ in inst.operands]
    assert kinds.count("register") == 2
    assert "method_ref" in kinds


def test_decode_invoke_range(rooting_dex):
    dex = parse_dex(rooting_dex)
    # invoke-static/range {v4 .. v6}, meth@1
    instructions = decode_instructions(_code([0x77 | (3 << 8), 1, 4]), dex)
    inst = instructions[0]
    assert inst.mnemonic == "invoke-static/range"
    line = render_instruction(inst, 0)
    assert "{v4 .. v6}" in line


def test_decode_sparse_switch_payload(rooting_dex):
    dex = parse_dex(rooting_dex)
    # ident, size=2, keys (2 x s4), targets (2 x s4)
    units = [0x0200, 2, 1, 0, 2, 0, 10, 0, 12, 0]
    instructions = decode_instructions(_code(units), dex)
    assert instructions[0].mnemonic == "sparse-switch-payload"
    assert instructions[0].width == len(units)


def test_writer_scales_to_many_classes():
    from apktriage.dexgen import DexWriter, PUBLIC, STATIC
    w = DexWriter()
    for c in range(120):
        cls = w.add_class(f"Lbulk/p{c % 7}/C{c};")
        for m in range(9):
            cls.add_method(f"m{m}", "I", ["I"], access=PUBLIC | STATIC, registers=4,
                           code=[ins.const16(0, c * 31 + m), ins.return_value(0)])
    blob = w.build()
    dex = parse_dex(blob)
    assert dex.header_checksum_ok
    assert len(dex.class_defs) == 120
    units = build_units([dex])
    assert sum(len(cls.functions) for pkg in units for cls in pkg.classes) == 120 * 9
    assert len(units) == 7
