import http.server
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from rulemap.client import (
    ChatClient,
    ChatRequest,
    ChatResponse,
    DecodingConfig,
    cache_key,
    canonical_request,
)
from rulemap.errors import CacheMiss, ConfigError, TransportError
from rulemap.stub import stub_transport

# computed once from the fixture request below and frozen
GOLDEN_KEY = "6aa8cb34f1b0d6fa3d76e95f8eeb08de3144f056d6a0a0733fc1ef6059ee9c0d"


def _request(system="Du bist ein Test.", user="Hallo Welt",
             model="stub-model", seed=640):
    return ChatRequest(system=system, user=user,
                       decoding=DecodingConfig(model=model, seed=seed))


# --------------------------------------------------------------------------
# cache keys


def test_cache_key_matches_golden_digest():
    assert cache_key(_request()) == GOLDEN_KEY


def test_cache_key_sensitivity():
    base = cache_key(_request())
    assert cache_key(_request(user="Hallo Welt!")) != base
    assert cache_key(_request(seed=641)) != base
    assert cache_key(_request(model="other")) != base


def test_cache_key_equality():
    assert cache_key(_request()) == cache_key(_request())


def test_canonical_request_stable():
    text = canonical_request(_request())
    assert '"seed":640' in text
    assert '"top_p":0.01' in text


def test_user_message_must_be_non_empty():
    with pytest.raises(ValueError):
        ChatRequest(system="s", user="", decoding=DecodingConfig(model="m"))


# --------------------------------------------------------------------------
# configuration


def test_live_requires_endpoint_and_key():
    with pytest.raises(ConfigError):
        ChatClient(mode="live", api_key="k")
    with pytest.raises(ConfigError):
        ChatClient(mode="live", api_base="https://x.invalid")


def test_replay_requires_cache_dir():
    with pytest.raises(ConfigError):
        ChatClient(mode="replay")


def test_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LLM_MODE", "replay")
    monkeypatch.setenv("LLM_CACHE_DIR", str(tmp_path))
    client = ChatClient.from_env()
    assert client.cache_dir == tmp_path
    monkeypatch.setenv("LLM_MODE", "live")
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    monkeypatch.setenv("LLM_API_BASE", "https://x.invalid")
    with pytest.raises(ConfigError):
        ChatClient.from_env()


# --------------------------------------------------------------------------
# record / replay


def test_record_then_replay_identical(tmp_path):
    request = _request()
    recorder = ChatClient(mode="record", api_base="https://stub.invalid",
                          api_key="secret-key", cache_dir=tmp_path,
                          transport=stub_transport)
    recorded = recorder.complete(request)
    assert recorded.latency_ms is not None

    replayer = ChatClient(mode="replay", cache_dir=tmp_path)
    replayed = replayer.complete(request)
    assert replayed.text == recorded.text
    assert replayed.latency_ms is None  # live-only metric
    assert replayer.complete(request) == replayed  # bit-deterministic


def test_replay_miss(tmp_path):
    client = ChatClient(mode="replay", cache_dir=tmp_path)
    with pytest.raises(CacheMiss) as err:
        client.complete(_request())
    assert err.value.key == GOLDEN_KEY


def test_replay_never_touches_transport(tmp_path):
    recorder = ChatClient(mode="record", api_base="https://stub.invalid",
                          api_key="k", cache_dir=tmp_path,
                          transport=stub_transport)
    recorder.complete(_request())

    def forbidden(*args, **kwargs):
        raise AssertionError("replay must not call the transport")

    replayer = ChatClient(mode="replay", cache_dir=tmp_path,
                          api_base="https://stub.invalid", api_key="k",
                          transport=forbidden)
    assert replayer.complete(_request()).text


def test_no_credentials_in_cache_files(tmp_path):
    client = ChatClient(mode="record", api_base="https://stub.invalid",
                        api_key="super-secret-token", cache_dir=tmp_path,
                        transport=stub_transport)
    client.complete(_request())
    for path in tmp_path.iterdir():
        assert "super-secret-token" not in path.read_text(encoding="utf-8")
    assert not list(tmp_path.glob("*.tmp.*"))


def test_cache_layout_and_index(tmp_path):
    client = ChatClient(mode="record", api_base="https://stub.invalid",
                        api_key="k", cache_dir=tmp_path,
                        transport=stub_transport)
    first = _request()
    second = _request(user="Zweiter Beitrag")
    client.complete(first)
    client.complete(second)
    entry = json.loads((tmp_path / f"{cache_key(first)}.json").read_text())
    assert entry["key"] == cache_key(first)
    assert entry["request"]["user"] == "Hallo Welt"
    assert "recorded_at" in entry
    index = json.loads((tmp_path / "index.json").read_text())
    assert set(index["entries"]) == {cache_key(first), cache_key(second)}


def test_concurrent_record(tmp_path):
    client = ChatClient(mode="record", api_base="https://stub.invalid",
                        api_key="k", cache_dir=tmp_path,
                        transport=stub_transport, parallelism=4)
    requests = [_request(user=f"Beitrag Nummer {i}") for i in range(16)]
    with ThreadPoolExecutor(max_workers=8) as pool:
        responses = list(pool.map(client.complete, requests))
    assert all(isinstance(r, ChatResponse) for r in responses)
    index = json.loads((tmp_path / "index.json").read_text())
    assert len(index["entries"]) == 16


# --------------------------------------------------------------------------
# capability table


def test_capability_drop_noted():
    captured = {}

    def transport(url, headers, payload, timeout):
        captured.update(payload)
        return {"choices": [{"message": {"content": "ok"}}],
                "usage": {"prompt_tokens": 1, "completion_tokens": 1}}

    client = ChatClient(mode="live", api_base="https://stub.invalid",
                        api_key="k", transport=transport,
                        capabilities={"stub-model": ("temperature", "seed")})
    response = client.complete(_request())
    assert response.dropped_params == ("temperature", "seed")
    assert "temperature" not in captured and "seed" not in captured
    assert captured["top_p"] == 0.01


# --------------------------------------------------------------------------
# real HTTP path


class _Handler(http.server.BaseHTTPRequestHandler):
    status = 200

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        assert self.headers["Authorization"].startswith("Bearer ")
        if self.path != "/v1/chat/completions":
            self.send_response(404)
            self.end_headers()
            return
        body = {
            "choices": [{"message": {
                "role": "assistant",
                "content": f"echo:{payload['messages'][1]['content']}"}}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 3},
        }
        data = json.dumps(body).encode()
        self.send_response(type(self).status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def local_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.status = 200
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


def test_live_http_roundtrip(local_server):
    client = ChatClient(mode="live", api_base=local_server, api_key="k")
    response = client.complete(_request(user="ping"))
    assert response.text == "echo:ping"
    assert response.prompt_tokens == 7
    assert response.completion_tokens == 3
    assert response.latency_ms is not None and response.latency_ms >= 0


def test_live_http_error_status(local_server):
    _Handler.status = 500
    client = ChatClient(mode="live", api_base=local_server, api_key="k")
    with pytest.raises(TransportError) as err:
        client.complete(_request())
    assert err.value.status == 500


def test_malformed_body_raises():
    def transport(url, headers, payload, timeout):
        return {"unexpected": "shape"}

    client = ChatClient(mode="live", api_base="https://stub.invalid",
                        api_key="k", transport=transport)
    with pytest.raises(TransportError):
        client.complete(_request())
