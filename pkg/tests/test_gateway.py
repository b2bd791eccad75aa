import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from appatch.gateway import (
    CachedProvider,
    ConfigurationError,
    HttpChatProvider,
    ProviderError,
    ScriptExhaustedError,
    accounting_report,
    complete,
    exchange_digest,
    load_providers,
)

from conftest import scripted


def test_scripted_responses_replay_in_order():
    provider = scripted(["first", "second", "third"])
    assert provider.complete("a").response == "first"
    assert provider.complete("b").response == "second"
    assert provider.complete("c").response == "third"


def test_scripted_queue_exhaustion_fails_loudly():
    provider = scripted(["only"])
    provider.complete("a")
    with pytest.raises(ScriptExhaustedError):
        provider.complete("b")


def test_scripted_error_entries_consume_retries():
    provider = scripted([{"error": "boom"}, {"error": "boom"}, "recovered"],
                        attempts=3)
    exchange = provider.complete("p")
    assert exchange.response == "recovered"


def test_retries_exhausted_becomes_nontransient_error():
    provider = scripted([{"error": "boom"}] * 3, attempts=3)
    with pytest.raises(ProviderError) as err:
        provider.complete("p")
    assert not err.value.transient


def test_exchange_digest_covers_provider_model_and_prompt():
    a = exchange_digest("p1", "m", "prompt")
    assert a == exchange_digest("p1", "m", "prompt")
    assert a != exchange_digest("p2", "m", "prompt")
    assert a != exchange_digest("p1", "m2", "prompt")
    assert a != exchange_digest("p1", "m", "prompt!")


def test_token_estimates_are_flagged():
    provider = scripted(["two words"])
    exchange = provider.complete("one two three")
    assert exchange.estimated is True
    assert exchange.input_tokens == 3
    assert exchange.output_tokens == 2


def test_cache_hit_returns_identical_exchange(tmp_path):
    inner = scripted(["cached answer"])
    provider = CachedProvider("c", inner, tmp_path / "cache")
    first = provider.complete("the prompt")
    second = provider.complete("the prompt")
    assert second == first
    assert inner.remaining() == 0  # the script served exactly one call

    digest = exchange_digest(inner.id, inner.model, "the prompt")
    entry = tmp_path / "cache" / digest[:2] / f"{digest}.json"
    assert entry.is_file()
    stored = json.loads(entry.read_text())
    assert stored["response"] == "cached answer"


def test_cache_distinguishes_prompts(tmp_path):
    inner = scripted(["one", "two"])
    provider = CachedProvider("c", inner, tmp_path / "cache")
    assert provider.complete("a").response == "one"
    assert provider.complete("b").response == "two"
    assert provider.complete("a").response == "one"


def test_accounting_empty_is_all_zero():
    assert accounting_report([]) == {}


def test_accounting_sums_are_exact():
    provider = scripted(["x " * 10, "y " * 20])
    e1 = provider.complete("a " * 100)
    e2 = provider.complete("b " * 200)
    report = accounting_report([e1, e2])
    entry = report["scripted"]
    assert entry["calls"] == 2
    assert entry["input_tokens"] == 300
    assert entry["output_tokens"] == 30
    assert entry["wall_seconds"] == pytest.approx(e1.latency + e2.latency)


class _StubHandler(BaseHTTPRequestHandler):
    failures_left = 0
    body = {
        "choices": [{"message": {"content": "stub says hello"}}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
    }

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if type(self).failures_left > 0:
            type(self).failures_left -= 1
            self.send_response(500)
            self.end_headers()
            return
        payload = json.dumps(type(self).body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat"
    server.shutdown()


def test_http_chat_reads_stub_body(stub_server):
    _StubHandler.failures_left = 0
    provider = HttpChatProvider("h", "test-model", stub_server, backoff=0.0)
    exchange = complete(provider, "hello")
    assert exchange.response == "stub says hello"
    assert exchange.input_tokens == 7
    assert exchange.output_tokens == 3
    assert exchange.estimated is False


def test_http_chat_retries_transient_failures(stub_server):
    _StubHandler.failures_left = 2
    provider = HttpChatProvider("h", "test-model", stub_server,
                                attempts=3, backoff=0.0)
    assert complete(provider, "hello").response == "stub says hello"


def test_http_chat_missing_auth_names_the_env_var(stub_server, monkeypatch):
    monkeypatch.delenv("STUB_KEY", raising=False)
    provider = HttpChatProvider("h", "m", stub_server, auth_env="STUB_KEY",
                                backoff=0.0)
    with pytest.raises(ConfigurationError) as err:
        provider.complete("x")
    assert "STUB_KEY" in str(err.value)


def test_load_providers_resolves_cached_inner(tmp_path):
    script = tmp_path / "responses.json"
    script.write_text(json.dumps(["a", "b"]))
    providers = load_providers(
        [
            {"id": "raw", "kind": "scripted", "script": "responses.json"},
            {"id": "front", "kind": "cached", "inner": "raw",
             "cache_dir": "cache"},
        ],
        base_dir=tmp_path,
    )
    assert providers["front"].complete("p").response == "a"
    assert (tmp_path / "cache").is_dir()


@pytest.mark.parametrize("config,fragment", [
    ([{"id": "x", "kind": "mystery"}], "unknown provider kind"),
    ([{"id": "x", "kind": "scripted"}], "responses"),
    ([{"id": "x", "kind": "http-chat"}], "endpoint"),
    ([{"id": "x", "kind": "cached", "inner": "nope", "cache_dir": "c"}], "inner"),
    ([{"id": "x", "kind": "scripted", "responses": []},
      {"id": "x", "kind": "scripted", "responses": []}], "duplicate"),
])
def test_load_providers_rejects_bad_config(config, fragment):
    with pytest.raises(ConfigurationError) as err:
        load_providers(config)
    assert fragment in str(err.value)


def test_history_records_every_exchange(tmp_path):
    inner = scripted(["a", "b"])
    provider = CachedProvider("c", inner, tmp_path / "cache")
    provider.complete("p1")
    provider.complete("p1")
    provider.complete("p2")
    assert [e.response for e in provider.history] == ["a", "a", "b"]


def test_rpm_limit_paces_consecutive_calls():
    import time

    provider = scripted(["a", "b", "c"], rpm_limit=3000)  # 20ms interval
    started = time.monotonic()
    for prompt in ("1", "2", "3"):
        provider.complete(prompt)
    assert time.monotonic() - started >= 0.04


def test_no_rpm_limit_means_no_pacing():
    provider = scripted(["a"])
    provider._pace()  # must not raise or sleep
