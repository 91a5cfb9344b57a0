import json
import logging
import threading
import time

import httpx
import pytest

from conftest import path
from owlbench.gateway import (
    AuthError,
    ChatRequest,
    ChatResponse,
    GatewayError,
    HttpChatBackend,
    MalformedResponseError,
    MockFixedBackend,
    MockOracleBackend,
    ResponseCache,
    RetryPolicy,
    TransientError,
    cached_send,
    dispatch,
    make_backend,
    send,
)
from owlbench.prompts import assemble_prompt
from owlbench.tasks import NO_PATH, Query, TaskInstance

SECRET = "sk-test-very-secret-0123456789"


def _req(user="hello", model="m1", temperature=0.0, iid="i-1"):
    return ChatRequest(model, (("system", "sys"), ("user", user)), temperature, 64, iid)


def _instance(truth=3, iid="sp-1"):
    g = path(6)
    return TaskInstance(iid, g, "shortest_path", Query(pair=(0, truth)), truth, {})


class CountingBackend:
    name = "counting"

    def __init__(self, delay=0.0):
        self.calls = 0
        self.in_flight = 0
        self.peak = 0
        self.delay = delay
        self._lock = threading.Lock()

    def complete(self, request):
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        time.sleep(self.delay)
        with self._lock:
            self.in_flight -= 1
        return ChatResponse(f"echo {request.messages[-1][1]}", self.name)


def no_sleep_policy(**kw):
    slept = []
    return RetryPolicy(sleep=slept.append, **kw), slept


# -- request -----------------------------------------------------------------

def test_request_invariants():
    with pytest.raises(ValueError):
        ChatRequest("m", (("user", "x"),))
    with pytest.raises(ValueError):
        ChatRequest("m", (("system", "a"), ("system", "b"), ("user", "x")))
    with pytest.raises(ValueError):
        ChatRequest("m", (("system", "a"),))
    with pytest.raises(ValueError):
        _req(temperature=-0.1)


def test_request_from_prompt():
    inst = _instance()
    bundle = assemble_prompt(inst, "cl_owl")
    req = ChatRequest.from_prompt(bundle, "gpt-x")
    assert req.instance_id == inst.id
    assert req.messages == (("system", bundle.system_text), ("user", bundle.user_text))
    assert req.wire()["temperature"] == 0.0


def test_request_json_round_trip():
    r = _req()
    assert ChatRequest.from_json(json.loads(json.dumps(r.to_json()))) == r


def test_key_covers_parameters():
    base = _req()
    assert base.key == _req().key
    assert base.key != _req(model="m2").key
    assert base.key != _req(temperature=0.7).key
    assert base.key != _req(user="hello!").key
    assert base.key != ChatRequest("m1", base.messages, 0.0, 65, "i-1").key
    # provenance does not change the request sent to the model
    assert base.key == _req(iid="other").key


# -- backends ----------------------------------------------------------------

def test_mock_oracle_echo():
    inst = _instance(truth=3)
    resp = MockOracleBackend([inst]).complete(_req(iid=inst.id))
    assert resp.text == "<<ANSWER>> 3"
    assert resp.backend == "mock_oracle"


def test_mock_oracle_no_path_and_missing():
    from owlbench.graph import new_graph

    g = new_graph(4, [(0, 1), (2, 3)])
    inst = TaskInstance("x", g, "shortest_path", Query(pair=(0, 3)), NO_PATH, {})
    backend = MockOracleBackend({"x": inst})
    assert backend.complete(_req(iid="x")).text == "<<ANSWER>> inf"
    with pytest.raises(GatewayError):
        backend.complete(_req(iid="nope"))


def test_mock_fixed():
    text = "garbage with no marker"
    assert MockFixedBackend(text).complete(_req()).text == text


def test_make_backend():
    assert isinstance(make_backend({"kind": "mock_fixed", "text": "x"}), MockFixedBackend)
    assert isinstance(make_backend({"kind": "mock_oracle"}, [_instance()]), MockOracleBackend)
    assert isinstance(make_backend({"kind": "http_chat", "endpoint": "http://e", "credential_env": "K"}), HttpChatBackend)
    with pytest.raises(ValueError):
        make_backend({"kind": "http_chat"})
    with pytest.raises(ValueError):
        make_backend({"kind": "carrier_pigeon"})


# -- http --------------------------------------------------------------------

def _http(handler, monkeypatch, env=SECRET):
    if env is None:
        monkeypatch.delenv("OWL_TEST_KEY", raising=False)
    else:
        monkeypatch.setenv("OWL_TEST_KEY", env)
    return HttpChatBackend("https://llm.example/v1/chat/completions", "OWL_TEST_KEY",
                           transport=httpx.MockTransport(handler))


def _ok(text="<<ANSWER>> 3"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}],
                                     "usage": {"prompt_tokens": 10, "completion_tokens": 2, "total_tokens": 12}})


def test_http_wire_shape(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["Authorization"]
        seen["body"] = json.loads(request.content)
        return _ok()

    resp = _http(handler, monkeypatch).complete(_req())
    assert resp.text == "<<ANSWER>> 3"
    assert resp.token_usage == {"prompt_tokens": 10, "completion_tokens": 2}
    assert seen["auth"] == f"Bearer {SECRET}"
    assert seen["body"] == {
        "model": "m1",
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "hello"}],
        "temperature": 0.0,
        "max_tokens": 64,
    }


def test_http_missing_credential_before_network(monkeypatch):
    calls = []

    def handler(request):
        calls.append(request)
        return _ok()

    with pytest.raises(AuthError):
        _http(handler, monkeypatch, env=None).complete(_req())
    assert calls == []


def test_http_auth_rejected_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad key"})

    policy, slept = no_sleep_policy()
    with pytest.raises(AuthError) as info:
        send(_req(), _http(handler, monkeypatch), policy)
    assert len(calls) == 1 and slept == []
    assert len(info.value.attempts) == 1


@pytest.mark.parametrize("status", [429, 500, 503])
def test_http_transient_then_success(monkeypatch, status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status) if len(calls) < 3 else _ok("<<ANSWER>> Yes")

    policy, slept = no_sleep_policy(jitter=0.0)
    resp = send(_req(), _http(handler, monkeypatch), policy)
    assert resp.text == "<<ANSWER>> Yes"
    assert len(calls) == 3
    assert slept == [1.0, 2.0]


def test_http_attempt_cap(monkeypatch):
    def handler(request):
        return httpx.Response(502)

    policy, slept = no_sleep_policy(jitter=0.0)
    with pytest.raises(GatewayError) as info:
        send(_req(), _http(handler, monkeypatch), policy)
    assert len(info.value.attempts) == 5
    assert slept == [1.0, 2.0, 4.0, 8.0]


def test_http_timeout_is_transient(monkeypatch):
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(TransientError):
        _http(handler, monkeypatch).complete(_req())


@pytest.mark.parametrize("body", [b"not json", b'{"choices": []}', b'{"choices": [{"message": {"content": 5}}]}'])
def test_http_malformed(monkeypatch, body):
    def handler(request):
        return httpx.Response(200, content=body)

    with pytest.raises(MalformedResponseError):
        _http(handler, monkeypatch).complete(_req())


def test_http_client_error_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad request")

    policy, _ = no_sleep_policy()
    with pytest.raises(GatewayError):
        send(_req(), _http(handler, monkeypatch), policy)
    assert len(calls) == 1


def test_jitter_bounds():
    policy = RetryPolicy(jitter=0.1)
    for attempt in range(1, 5):
        base = 2.0 ** (attempt - 1)
        assert 0.9 * base <= policy.delay(attempt) <= 1.1 * base


# -- cache -------------------------------------------------------------------

def test_cache_hit_skips_backend(tmp_path):
    cache = ResponseCache(tmp_path / "cache.jsonl")
    backend = CountingBackend()
    first = cached_send(_req(), backend, cache)
    second = cached_send(_req(), backend, cache)
    assert backend.calls == 1
    assert not first.cached and second.cached
    assert second.text == first.text


def test_cache_distinct_keys_dispatch(tmp_path):
    cache = ResponseCache(tmp_path / "cache.jsonl")
    backend = CountingBackend()
    for r in (_req(), _req(model="m2"), _req(temperature=0.7)):
        cached_send(r, backend, cache)
    assert backend.calls == 3


def test_cache_persists_and_rehashes(tmp_path):
    p = tmp_path / "cache.jsonl"
    cache = ResponseCache(p)
    cached_send(_req("a"), CountingBackend(), cache)
    cached_send(_req("b"), CountingBackend(), cache)
    reopened = ResponseCache(p)
    assert len(reopened) == 2 and reopened.skipped == 0
    for line in p.read_text().splitlines():
        rec = json.loads(line)
        assert set(rec) == {"key", "request", "response", "checksum", "timestamp"}
        assert ChatRequest.from_json(rec["request"]).key == rec["key"]
    backend = CountingBackend()
    assert cached_send(_req("a"), backend, reopened).cached
    assert backend.calls == 0


def test_cached_text_byte_identical(tmp_path):
    p = tmp_path / "cache.jsonl"
    text = "  <<ANSWER>> ünïcode\n\ttabs "
    cached_send(_req(), MockFixedBackend(text), ResponseCache(p))
    assert ResponseCache(p).get(_req()).text == text


def test_cache_corruption_skipped(tmp_path, caplog):
    p = tmp_path / "cache.jsonl"
    cache = ResponseCache(p)
    cached_send(_req("a"), CountingBackend(), cache)
    cached_send(_req("b"), CountingBackend(), cache)
    lines = p.read_text().splitlines()
    tampered = json.loads(lines[0])
    tampered["response"]["text"] = "tampered"
    p.write_text(json.dumps(tampered) + "\n" + "{truncated\n" + lines[1] + "\n")
    with caplog.at_level(logging.WARNING):
        reopened = ResponseCache(p)
    assert reopened.skipped == 2
    assert "corrupt cache record" in caplog.text
    backend = CountingBackend()
    resp = cached_send(_req("a"), backend, reopened)
    assert backend.calls == 1 and resp.text == "echo a"
    assert cached_send(_req("b"), backend, reopened).cached


def test_in_memory_cache():
    cache = ResponseCache()
    backend = CountingBackend()
    cached_send(_req(), backend, cache)
    assert cached_send(_req(), backend, cache).cached


# -- dispatch ----------------------------------------------------------------

def test_dispatch_bounded_and_ordered(tmp_path):
    backend = CountingBackend(delay=0.01)
    cache = ResponseCache(tmp_path / "c.jsonl")
    reqs = [_req(f"q{i}", iid=str(i)) for i in range(40)]
    reqs += reqs[:10]
    out, stats = dispatch(reqs, backend, cache, max_in_flight=3)
    assert [r.text for r in out] == [f"echo q{i}" for i in range(40)] + [f"echo q{i}" for i in range(10)]
    assert backend.peak <= 3
    assert stats.hits + stats.misses == len(reqs)
    assert backend.calls == stats.misses


def test_dispatch_second_pass_all_hits(tmp_path):
    cache = ResponseCache(tmp_path / "c.jsonl")
    reqs = [_req(f"q{i}") for i in range(12)]
    dispatch(reqs, CountingBackend(), cache, max_in_flight=4)
    backend = CountingBackend()
    _, stats = dispatch(reqs, backend, cache, max_in_flight=4)
    assert (stats.hits, stats.misses, backend.calls) == (12, 0, 0)


def test_dispatch_rejects_zero_workers():
    with pytest.raises(ValueError):
        dispatch([], CountingBackend(), ResponseCache(), max_in_flight=0)


def test_no_credential_persisted(tmp_path, monkeypatch, caplog):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) == 1 else _ok()

    backend = _http(handler, monkeypatch)
    p = tmp_path / "cache.jsonl"
    policy, _ = no_sleep_policy()
    with caplog.at_level(logging.DEBUG):
        dispatch([_req("a"), _req("b")], backend, ResponseCache(p), policy, max_in_flight=1)
    assert SECRET not in p.read_text()
    assert SECRET not in caplog.text
    assert "OWL_TEST_KEY" not in p.read_text()
