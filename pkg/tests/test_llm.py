import hashlib
import json
import threading
import time

import httpx
import pytest

from lingokit.errors import BackendError, ConfigError
from lingokit.llm import (
    ChatMessage,
    CompletionRequest,
    HttpBackend,
    completion_fn,
    fingerprint,
    load_mock_script,
    make_mock,
)

SYS = ChatMessage("system", "You are helpful.")
USER = ChatMessage("user", "Translate: kala")


def req(*messages, **kw):
    return CompletionRequest(messages or (SYS, USER), **kw)


def ok_body(*texts):
    return {"choices": [{"index": i, "message": {"role": "assistant", "content": t}} for i, t in enumerate(texts)]}


def test_message_validation():
    with pytest.raises(ValueError):
        ChatMessage("tool", "x")
    with pytest.raises(ValueError):
        ChatMessage("user", "")
    assert ChatMessage("assistant", "").content == ""


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest(())
    with pytest.raises(ValueError):
        CompletionRequest((USER, SYS))
    with pytest.raises(ValueError):
        req(n_samples=0)
    with pytest.raises(ValueError):
        req(temperature=3)
    assert req().temperature == 0.8


def test_fingerprint_is_sha256_of_roles_and_contents():
    expected = hashlib.sha256(
        b"system\x1fYou are helpful.\x1euser\x1fTranslate: kala\x1e"
    ).hexdigest()
    assert fingerprint([SYS, USER]) == expected
    assert fingerprint([SYS, ChatMessage("user", "Translate: kalb")]) != expected


def test_mock_script_hit_and_echo():
    key = fingerprint([SYS, USER])
    mock = make_mock({key: "### dog ###"})
    assert mock.complete(req()).text == "### dog ###"
    other = req(SYS, ChatMessage("user", "something else"))
    assert mock.complete(other).text == "something else"


def test_mock_fixed_and_fail():
    fixed = make_mock({}, "fixed-string", "### X ###")
    assert fixed.complete(req()).text == "### X ###"
    assert fixed.complete(req(n_samples=3)).texts == ("### X ###",) * 3
    with pytest.raises(BackendError) as info:
        make_mock({}, "fail").complete(req())
    assert info.value.kind == "protocol"
    with pytest.raises(ConfigError):
        make_mock({}, "sometimes")


def test_mock_is_referentially_transparent():
    mock = make_mock({}, "echo-last-user")
    assert mock.complete(req()) == mock.complete(req())


def test_load_mock_script(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"abc": "### ok ###"}))
    assert load_mock_script(p) == {"abc": "### ok ###"}
    p.write_text("[1]")
    with pytest.raises(ConfigError):
        load_mock_script(p)


def backend(handler, **kw):
    kw.setdefault("sleep", lambda s: None)
    return HttpBackend("http://llm.test/v1/", "secret", "m1", transport=httpx.MockTransport(handler), **kw)


def test_http_wire_format():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body("### hi ###"))

    resp = backend(handler).complete(req(temperature=0.8, n_samples=1))
    assert resp.texts == ("### hi ###",)
    assert resp.attempts == 1
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {
        "model": "m1",
        "messages": [{"role": "system", "content": "You are helpful."}, {"role": "user", "content": "Translate: kala"}],
        "temperature": 0.8,
        "n": 1,
    }


def test_http_retries_then_succeeds():
    calls = []
    waits = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(503)
        if len(calls) == 2:
            return httpx.Response(429, text="slow down")
        return httpx.Response(200, json=ok_body("ok"))

    resp = backend(handler, retries=2, backoff=0.5, sleep=waits.append).complete(req())
    assert resp.text == "ok"
    assert resp.attempts == 3
    assert waits == [0.5, 1.0]
    assert resp.backoff_s == (0.5, 1.0)


def test_http_gives_up_after_retries():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused")

    with pytest.raises(BackendError) as info:
        backend(handler, retries=2).complete(req())
    assert info.value.kind == "transport"
    assert len(calls) == 3


def test_http_timeout_kind():
    def handler(request):
        raise httpx.ReadTimeout("slow")

    with pytest.raises(BackendError) as info:
        backend(handler, retries=0).complete(req())
    assert info.value.kind == "timeout"


@pytest.mark.parametrize("status", [400, 401, 404])
def test_http_4xx_never_retried(status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status, text="bad")

    with pytest.raises(BackendError) as info:
        backend(handler, retries=3).complete(req())
    assert info.value.kind == "protocol" and info.value.status == status
    assert len(calls) == 1


@pytest.mark.parametrize(
    "body",
    [{"nope": 1}, {"choices": []}, {"choices": [{"message": {"content": None}}]}],
)
def test_http_malformed_body(body):
    with pytest.raises(BackendError) as info:
        backend(lambda r: httpx.Response(200, json=body)).complete(req())
    assert info.value.kind == "protocol"


def test_http_n_samples():
    b = backend(lambda r: httpx.Response(200, json=ok_body("a", "b")))
    assert b.complete(req(n_samples=2)).texts == ("a", "b")


def test_in_flight_cap():
    active = []
    peak = [0]
    lock = threading.Lock()

    def handler(request):
        with lock:
            active.append(1)
            peak[0] = max(peak[0], len(active))
        time.sleep(0.02)
        with lock:
            active.pop()
        return httpx.Response(200, json=ok_body("x"))

    b = backend(handler, max_in_flight=2)
    threads = [threading.Thread(target=b.complete, args=(req(),)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2


def test_from_env(monkeypatch):
    monkeypatch.delenv("LLM_BASE_URL", raising=False)
    with pytest.raises(ConfigError):
        HttpBackend.from_env()
    monkeypatch.setenv("LLM_BASE_URL", "http://x")
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    with pytest.raises(ConfigError):
        HttpBackend.from_env()
    monkeypatch.setenv("LLM_API_KEY", "k")
    monkeypatch.setenv("LLM_MODEL", "mm")
    b = HttpBackend.from_env()
    assert b.model == "mm" and b.base_url == "http://x"


def test_completion_fn():
    call = completion_fn(make_mock({}, "fixed-string", "S"), temperature=0.2)
    assert call([SYS, USER]) == "S"
