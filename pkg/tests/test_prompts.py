import pytest

from apktriage.dexfile import parse_dex
from apktriage.disasm import build_units
from apktriage.errors import BudgetExceeded
from apktriage.prompts import (
    API_SCOPED,
    MALWARE_SCOPED,
    SCOPES,
    VANILLA,
    PromptEngine,
    TierBudgets,
    estimate_tokens,
)
from apktriage.report import SummaryNode


@pytest.fixture(scope="module")
def engine():
    return PromptEngine()


def _rooting_functions(rooting_dex):
    units = build_units([parse_dex(rooting_dex)])
    cls = next(c for pkg in units for c in pkg.classes
               if c.original_name == "cn.utils.RTUtils")
    return cls


def _fn_node(name, text):
    return SummaryNode(node_id=f"fn:{name}", tier="FUNCTION", subject_name=name, text=text)


def _cls_node(name, text):
    return SummaryNode(node_id=f"cls:{name}", tier="CLASS", subject_name=name, text=text)


def test_estimate_tokens():
    assert estimate_tokens("") == 0
    assert estimate_tokens("x" * 4000) == 1000
    assert estimate_tokens("x" * 4001) == 1001
    a, b = "alpha", "longer text fragment"
    assert estimate_tokens(a + b) >= max(estimate_tokens(a), estimate_tokens(b))


def test_three_scopes_exist(engine):
    assert set(SCOPES) == {VANILLA, API_SCOPED, MALWARE_SCOPED}
    for scope in SCOPES:
        assert engine.template_set(scope).version == engine.version


def test_scope_knowledge_invariants(engine):
    assert engine.template_set(VANILLA).knowledge_blocks == ()
    assert engine.template_set(VANILLA).package_knowledge_blocks == ()
    api = "\n".join(engine.template_set(API_SCOPED).knowledge_blocks)
    assert "DexClassLoader" in api
    assert "reflect" in api.lower()
    mal = "\n".join(engine.template_set(MALWARE_SCOPED).knowledge_blocks)
    assert "Privilege Escalation and Control" in mal


def test_malware_function_prompt_has_taxonomy(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    prompt = engine.render_function_prompt(MALWARE_SCOPED, cls.original_name,
                                           cls.functions[:1])
    assert "Privilege Escalation and Control" in prompt.text
    assert prompt.tier == "FUNCTION"
    assert prompt.estimated_tokens <= engine.budgets.function


def test_vanilla_function_prompt_is_clean(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    prompt = engine.render_function_prompt(VANILLA, cls.original_name, cls.functions[:1])
    for block in (engine.template_set(API_SCOPED).knowledge_blocks
                  + engine.template_set(MALWARE_SCOPED).knowledge_blocks):
        for sentence in block.split("."):
            sentence = sentence.strip()
            if len(sentence) > 20:
                assert sentence not in prompt.text
    assert "taxonomy" not in prompt.text.lower()


def test_api_function_prompt_lists_sensitive_apis(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    prompt = engine.render_function_prompt(API_SCOPED, cls.original_name,
                                           cls.functions[:1])
    assert "DexClassLoader" in prompt.text
    assert "reflect" in prompt.text.lower()


def test_function_prompt_demands_sections(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    prompt = engine.render_function_prompt(VANILLA, cls.original_name, cls.functions)
    for fn in cls.functions:
        assert f"### {fn.signature}" in prompt.text


def test_class_prompt_embeds_summaries_in_order(engine):
    nodes = [_fn_node("initRoot(Landroid/content/Context;)V", "first summary"),
             _fn_node("executeRoot(...)V", "second summary"),
             _fn_node("b(...)V", "third summary")]
    prompt = engine.render_class_prompt(MALWARE_SCOPED, "cn.utils.RTUtils", nodes)
    a = prompt.text.index("first summary")
    b = prompt.text.index("second summary")
    c = prompt.text.index("third summary")
    assert a < b < c
    assert "ALIAS:" in prompt.text


def test_class_prompt_rejects_empty(engine):
    with pytest.raises(ValueError):
        engine.render_class_prompt(VANILLA, "X", [])


def test_class_prompt_rejects_wrong_tier(engine):
    with pytest.raises(ValueError):
        engine.render_class_prompt(VANILLA, "X", [_cls_node("X", "t")])


def test_package_prompt_sentinels_all_scopes(engine):
    for scope in SCOPES:
        prompt = engine.render_package_prompt(scope, "cn.utils",
                                              [_cls_node("cn.utils.RTUtils", "summary")])
        assert "(MALWARE)" in prompt.text
        assert "(BENIGN)" in prompt.text


def test_malware_package_prompt_known_examples(engine):
    prompt = engine.render_package_prompt(MALWARE_SCOPED, "cn.utils",
                                          [_cls_node("cn.utils.RTUtils", "summary")])
    assert "Towelroot, KingRoot, Magisk" in prompt.text


def test_vanilla_package_prompt_no_external_knowledge(engine):
    prompt = engine.render_package_prompt(VANILLA, "cn.utils",
                                          [_cls_node("cn.utils.RTUtils", "summary")])
    assert "Towelroot" not in prompt.text
    assert "Known" not in prompt.text


def test_rendering_deterministic(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    one = engine.render_function_prompt(MALWARE_SCOPED, cls.original_name, cls.functions)
    two = engine.render_function_prompt(MALWARE_SCOPED, cls.original_name, cls.functions)
    assert one.text == two.text
    assert one.system_text == two.system_text


def test_budget_exceeded(rooting_dex):
    tight = PromptEngine(budgets=TierBudgets(function=100, class_=100, package=100))
    cls = _rooting_functions(rooting_dex)
    with pytest.raises(BudgetExceeded):
        tight.render_function_prompt(VANILLA, cls.original_name, cls.functions)


def test_template_version_flows(engine, rooting_dex):
    cls = _rooting_functions(rooting_dex)
    prompt = engine.render_function_prompt(VANILLA, cls.original_name, cls.functions[:1])
    assert prompt.template_version == engine.version
    assert prompt.template_version
