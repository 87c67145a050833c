import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apktriage.backend import (
    CachingBackend,
    ChatRequest,
    HttpBackend,
    MockBackend,
    ResponseCache,
    cache_key,
)
from apktriage.errors import AuthFailure, BackendUnavailable, ResponseMalformed


class FakeResponse:
    def __init__(self, status_code, payload=None, body=None):
        self.status_code = status_code
        self._payload = payload
        self._body = body

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


def _ok_payload(text="fine", reason="stop"):
    return {"choices": [{"message": {"content": text}, "finish_reason": reason}]}


class FakePost:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _request(text="hello"):
    return ChatRequest(model_id="m", system_text="sys", user_text=text)


def _backend(post, **kwargs):
    sleeps = []
    backend = HttpBackend("https://example.invalid/v1/chat/completions", "k",
                          post=post, sleep=sleeps.append, **kwargs)
    return backend, sleeps


def test_request_body_shape():
    post = FakePost([FakeResponse(200, _ok_payload())])
    backend, _ = _backend(post)
    response = backend.complete(_request())
    assert response.text == "fine"
    body = post.calls[0]["json"]
    assert body["model"] == "m"
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert body["messages"][0]["content"] == "sys"
    assert body["messages"][1]["content"] == "hello"
    assert body["temperature"] == 0
    assert "max_tokens" in body
    assert post.calls[0]["headers"]["Authorization"] == "Bearer k"


def test_temperature_default_zero():
    assert ChatRequest(model_id="m", system_text="", user_text="x").temperature == 0


def test_empty_user_text_rejected():
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", system_text="", user_text="")


def test_retry_on_429_then_success():
    post = FakePost([FakeResponse(429), FakeResponse(200, _ok_payload())])
    backend, sleeps = _backend(post)
    response = backend.complete(_request())
    assert response.text == "fine"
    assert len(post.calls) == 2
    assert sleeps == [1.0]


def test_three_429s_then_success_backoff():
    post = FakePost([FakeResponse(429)] * 3 + [FakeResponse(200, _ok_payload())])
    backend, sleeps = _backend(post)
    backend.complete(_request())
    assert len(post.calls) == 4
    assert sleeps == [1.0, 2.0, 4.0]


def test_backoff_nondecreasing_and_capped():
    backend, _ = _backend(FakePost([]), max_attempts=10)
    delays = backend.backoff_delays()
    assert delays == sorted(delays)
    assert max(delays) <= 30.0


def test_unavailable_after_max_attempts():
    post = FakePost([FakeResponse(500)] * 5)
    backend, sleeps = _backend(post)
    with pytest.raises(BackendUnavailable):
        backend.complete(_request())
    assert len(post.calls) == 5
    assert len(sleeps) == 4


def test_auth_failure_no_retry():
    post = FakePost([FakeResponse(401)])
    backend, _ = _backend(post)
    with pytest.raises(AuthFailure):
        backend.complete(_request())
    assert len(post.calls) == 1


def test_other_4xx_malformed():
    post = FakePost([FakeResponse(404)])
    backend, _ = _backend(post)
    with pytest.raises(ResponseMalformed):
        backend.complete(_request())


def test_missing_choices_malformed():
    post = FakePost([FakeResponse(200, {"nope": []})])
    backend, _ = _backend(post)
    with pytest.raises(ResponseMalformed):
        backend.complete(_request())


def test_length_finish_reason():
    post = FakePost([FakeResponse(200, _ok_payload(reason="length"))])
    backend, _ = _backend(post)
    assert backend.complete(_request()).finish_reason == "LENGTH"


# -- cache ---------------------------------------------------------------------


def test_cache_key_stability_and_composition():
    req = _request("prompt body")
    k1 = cache_key(req, "1.0.0", "MALWARE_SCOPED")
    k2 = cache_key(req, "1.0.0", "MALWARE_SCOPED")
    assert k1 == k2
    assert len(k1) == 64 and set(k1) <= set("0123456789abcdef")
    assert cache_key(req, "2.0.0", "MALWARE_SCOPED") != k1
    assert cache_key(req, "1.0.0", "VANILLA") != k1
    other = ChatRequest(model_id="m2", system_text="sys", user_text="prompt body")
    assert cache_key(other, "1.0.0", "MALWARE_SCOPED") != k1


def test_cache_hit_skips_backend(tmp_path):
    calls = []

    class Inner:
        def complete(self, request):
            calls.append(request)
            from apktriage.backend import ModelResponse
            return ModelResponse(text="computed")

    cache = ResponseCache(tmp_path / "cache")
    backend = CachingBackend(Inner(), cache, scope="VANILLA", template_version="1")
    first = backend.complete(_request())
    second = backend.complete(_request())
    assert first.text == second.text == "computed"
    assert first.from_cache is False
    assert second.from_cache is True
    assert len(calls) == 1
    assert backend.prompt_count == 2 and backend.cached_count == 1


def test_cache_entry_records_prompt(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    backend = CachingBackend(MockBackend(), cache, scope="VANILLA", template_version="1")
    backend.complete(_request("the full prompt text"))
    files = list((tmp_path / "cache").glob("*.json"))
    assert len(files) == 1
    entry = json.loads(files[0].read_text())
    assert entry["user_text"] == "the full prompt text"
    assert entry["system_text"] == "sys"
    assert entry["key"] == files[0].stem


def test_corrupt_cache_entry_is_miss(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    backend = CachingBackend(MockBackend(), cache, scope="VANILLA", template_version="1")
    backend.complete(_request())
    entry_file = next((tmp_path / "cache").glob("*.json"))
    entry_file.write_text("{not json")
    response = backend.complete(_request())
    assert response.from_cache is False
    assert json.loads(entry_file.read_text())["response_text"] == response.text


@given(st.text(min_size=0, max_size=500))
def test_cache_round_trip_arbitrary_text(tmp_path_factory, text):
    cache = ResponseCache(tmp_path_factory.mktemp("cache"))
    cache.put("k" * 64, {"response_text": text})
    assert cache.get("k" * 64)["response_text"] == text


# -- mock rules ------------------------------------------------------------------


def _mock(user_text):
    return MockBackend().complete(
        ChatRequest(model_id="m", system_text="", user_text=user_text)).text


def test_mock_function_dynload():
    prompt = ("instructions here\n=== INPUT ===\n"
              "### b(L;)V\n"
              '  0000: const-string v0, "cn.engine.RootPermApi"\n'
              "  0002: invoke-virtual {v1, v0}, dalvik.system.DexClassLoader.loadClass(...)\n")
    reply = _mock(prompt)
    assert reply.startswith("### b(L;)V")
    assert "(Dynamic Code Execution)" in reply
    assert "(Rooting)" in reply and "(Privilege Escalation and Control)" in reply


def test_mock_function_benign():
    prompt = ("instructions\n=== INPUT ===\n### add(II)I\n  0000: add-int v0, v1, v2\n")
    reply = _mock(prompt)
    assert "(" not in reply.split("\n", 1)[1] or "no flagged" in reply


def test_mock_ignores_knowledge_region():
    prompt = ("Watch for DexClassLoader and loadClass and RootPermApi.\n"
              "=== INPUT ===\n### f()V\n  0000: return-void\n")
    reply = _mock(prompt)
    assert "(Dynamic Code Execution)" not in reply


def test_mock_package_malicious_child():
    prompt = ("conclude with (MALWARE) or (BENIGN)\n=== INPUT ===\n"
              "### cn.utils.RTUtils\nsummary with (Rooting) present\n")
    reply = _mock(prompt)
    assert "(MALWARE)" in reply and "(Rooting)" in reply


def test_mock_package_benign_when_tag_free():
    prompt = ("conclude with (MALWARE) or (BENIGN)\n=== INPUT ===\n"
              "### com.example\nnothing flagged here\n")
    reply = _mock(prompt)
    assert "(BENIGN)" in reply and "(MALWARE)" not in reply


def test_mock_exec_su_rule():
    prompt = ("instructions\n=== INPUT ===\n### run()V\n"
              '  0000: const-string v1, "su"\n'
              "  0002: invoke-virtual {v0, v1}, java.lang.Runtime.exec(...)\n")
    reply = _mock(prompt)
    assert "(Rooting)" in reply


def test_mock_reflection_rule():
    prompt = ("instructions\n=== INPUT ===\n### r()V\n"
              "  0000: invoke-virtual {v1, v2}, java.lang.Class.getMethod(...)\n"
              "  0003: invoke-virtual {v2, v1}, java.lang.reflect.Method.invoke(...)\n")
    reply = _mock(prompt)
    assert "(Obfuscated Code)" in reply


def test_mock_deterministic():
    prompt = ("x\n=== INPUT ===\n### f()V\n  0000: const-string v0, \"RootPermApi\"\n")
    assert _mock(prompt) == _mock(prompt)
