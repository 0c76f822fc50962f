"""Backends: scripted replay, rate limiting, and the HTTP chat client."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from mwpeval import (
    BackendError,
    ConfigurationError,
    DataError,
    GenerationParams,
    HttpChatBackend,
    ModelSpec,
    RateLimiter,
    RetryPolicy,
    ScriptedBackend,
    ScriptedLookupError,
    create_backend,
    render,
    scripted_key,
)
from mwpeval.prompting import CORRECTION_MODES, REASONING_MODE, DopLevel, TemplateRegistry

from conftest import make_triplet

REGISTRY = TemplateRegistry.load()


def prompt_for(triplet, mode=REASONING_MODE):
    return render(triplet, mode, registry=REGISTRY)


# scripted backend


def test_scripted_lookup_by_composite_key(fixture_dataset, scripted_path):
    backend = ScriptedBackend(scripted_path)
    t01 = fixture_dataset.by_id["t01"]
    result = backend.complete(prompt_for(t01))
    assert "224" in result.text
    assert backend.calls == 1
    result = backend.complete(prompt_for(t01, CORRECTION_MODES[DopLevel.SP]))
    assert "Final answer: 224" in result.text
    assert backend.calls == 2


def test_scripted_lookup_by_content_hash(tmp_path):
    triplet = make_triplet()
    prompt = prompt_for(triplet)
    path = tmp_path / "responses.jsonl"
    path.write_text(
        json.dumps({"key": prompt.content_hash, "response": "#### 24"}) + "\n",
        encoding="utf-8",
    )
    backend = ScriptedBackend(path)
    assert backend.complete(prompt).text == "#### 24"


def test_scripted_miss_raises_lookup_error(scripted_path):
    backend = ScriptedBackend(scripted_path)
    stranger = make_triplet(id="zz99")
    with pytest.raises(ScriptedLookupError, match="zz99"):
        backend.complete(prompt_for(stranger))


def test_scripted_key_format():
    assert scripted_key("t07", "reasoning", None) == "t07|reasoning|-"
    assert scripted_key("t07", "correction", "sp") == "t07|correction|sp"


def test_scripted_duplicate_keys_rejected(tmp_path):
    path = tmp_path / "responses.jsonl"
    row = json.dumps({"key": "a|reasoning|-", "response": "x"})
    path.write_text(row + "\n" + row + "\n", encoding="utf-8")
    with pytest.raises(DataError, match="duplicate"):
        ScriptedBackend(path)


def test_scripted_schema_is_strict(tmp_path):
    path = tmp_path / "responses.jsonl"
    path.write_text(json.dumps({"key": "a", "text": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(DataError):
        ScriptedBackend(path)


def test_scripted_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        ScriptedBackend(tmp_path / "absent.jsonl")


def test_create_backend_picks_scripted_for_scripted_endpoints(scripted_path):
    spec = ModelSpec(name="m", endpoint=f"scripted:{scripted_path}")
    backend = create_backend(spec)
    assert isinstance(backend, ScriptedBackend)


# rate limiter


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.slept: list[float] = []

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.slept.append(seconds)
        self.now += seconds


def test_rate_limiter_spaces_slots():
    clock = FakeClock()
    limiter = RateLimiter(2.0, clock=clock, sleep=clock.sleep)
    slots = [limiter.acquire() for _ in range(6)]
    diffs = [b - a for a, b in zip(slots, slots[1:])]
    assert all(abs(d - 0.5) < 1e-9 for d in diffs), diffs
    # no half-open 1 second window ever holds more than 2 slots
    for start in slots:
        inside = [s for s in slots if start <= s < start + 1.0]
        assert len(inside) <= 2


def test_rate_limiter_does_not_penalize_idle_time():
    clock = FakeClock()
    limiter = RateLimiter(2.0, clock=clock, sleep=clock.sleep)
    limiter.acquire()
    clock.now = 50.0
    slot = limiter.acquire()
    assert slot == 50.0
    assert clock.slept == []  # neither call had to wait


def test_rate_limiter_rejects_bad_rate():
    with pytest.raises(ConfigurationError):
        RateLimiter(0)


# http chat backend


def ok_payload(text: str) -> dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"total_tokens": 11},
    }


@pytest.fixture()
def chat_server():
    """A throwaway chat-completions endpoint driven by a response script."""
    state = {"script": [], "seen": []}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
            state["seen"].append(
                {
                    "path": self.path,
                    "body": body,
                    "auth": self.headers.get("Authorization"),
                }
            )
            if state["script"]:
                status, payload = state["script"].pop(0)
            else:
                status, payload = 200, ok_payload("unscripted")
            raw = (
                payload.encode("utf-8")
                if isinstance(payload, str)
                else json.dumps(payload).encode("utf-8")
            )
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def log_message(self, fmt, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", state
    finally:
        server.shutdown()
        server.server_close()


def fast_spec(url: str, **overrides) -> ModelSpec:
    fields = dict(
        name="stub-model",
        endpoint=url,
        params=GenerationParams(temperature=0.25, max_tokens=64),
        timeout=5.0,
        retry=RetryPolicy(max_attempts=3, base_delay=1.0),
        requests_per_second=10_000.0,
    )
    fields.update(overrides)
    return ModelSpec(**fields)


def backend_for(spec: ModelSpec, seed: int = 0):
    sleeps: list[float] = []
    backend = HttpChatBackend(spec, sleep=sleeps.append, rng=random.Random(seed))
    return backend, sleeps


def test_http_happy_path_sends_the_documented_body(chat_server):
    url, state = chat_server
    state["script"].append((200, ok_payload("Final answer: 24")))
    backend, sleeps = backend_for(fast_spec(url))
    prompt = prompt_for(make_triplet())

    result = backend.complete(prompt)

    assert result.text == "Final answer: 24"
    assert result.attempts == 1
    assert result.usage == {"total_tokens": 11}
    assert sleeps == []
    request = state["seen"][0]
    assert request["path"] == "/chat/completions"
    assert request["body"] == {
        "model": "stub-model",
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": 0.25,
        "max_tokens": 64,
    }
    assert request["auth"] is None


def test_http_bearer_token_from_environment(chat_server, monkeypatch):
    url, state = chat_server
    monkeypatch.setenv("STUB_MODEL_KEY", "s3cret")
    backend, _ = backend_for(fast_spec(url, auth_env="STUB_MODEL_KEY"))
    backend.complete(prompt_for(make_triplet()))
    assert state["seen"][0]["auth"] == "Bearer s3cret"


def test_http_missing_credential_fails_at_construction(chat_server, monkeypatch):
    url, _ = chat_server
    monkeypatch.delenv("STUB_MODEL_KEY", raising=False)
    with pytest.raises(ConfigurationError, match="STUB_MODEL_KEY"):
        HttpChatBackend(fast_spec(url, auth_env="STUB_MODEL_KEY"))


def test_http_retries_transient_statuses(chat_server):
    url, state = chat_server
    state["script"] += [
        (429, {"error": "slow down"}),
        (503, {"error": "busy"}),
        (200, ok_payload("#### 24")),
    ]
    backend, sleeps = backend_for(fast_spec(url))

    result = backend.complete(prompt_for(make_triplet()))

    assert result.text == "#### 24"
    assert result.attempts == 3
    assert len(state["seen"]) == 3
    # full jitter: each delay drawn from [0, base * multiplier^(n-2)]
    assert len(sleeps) == 2
    assert 0.0 <= sleeps[0] <= 1.0
    assert 0.0 <= sleeps[1] <= 2.0


def test_http_gives_up_after_max_attempts(chat_server):
    url, state = chat_server
    state["script"] += [(500, {}), (500, {}), (500, {})]
    backend, _ = backend_for(fast_spec(url))
    with pytest.raises(BackendError, match="giving up after 3 attempts"):
        backend.complete(prompt_for(make_triplet()))
    assert len(state["seen"]) == 3


def test_http_other_4xx_is_permanent(chat_server):
    url, state = chat_server
    state["script"].append((400, {"error": "bad request"}))
    backend, _ = backend_for(fast_spec(url))
    with pytest.raises(BackendError, match="permanent HTTP 400"):
        backend.complete(prompt_for(make_triplet()))
    assert len(state["seen"]) == 1  # no retry

def test_http_malformed_success_body_is_an_error(chat_server):
    url, state = chat_server
    state["script"].append((200, {"unexpected": "shape"}))
    backend, _ = backend_for(fast_spec(url))
    with pytest.raises(BackendError, match="malformed"):
        backend.complete(prompt_for(make_triplet()))
    assert len(state["seen"]) == 1


def test_http_non_string_content_is_an_error(chat_server):
    url, state = chat_server
    state["script"].append((200, {"choices": [{"message": {"content": 42}}]}))
    backend, _ = backend_for(fast_spec(url))
    with pytest.raises(BackendError, match="not a string"):
        backend.complete(prompt_for(make_triplet()))


def test_http_transport_failures_retry_then_give_up():
    # nothing listens on port 1; every attempt is a connection error
    spec = fast_spec("http://127.0.0.1:1", retry=RetryPolicy(max_attempts=2))
    backend, sleeps = backend_for(spec)
    with pytest.raises(BackendError, match="transport failure"):
        backend.complete(prompt_for(make_triplet()))
    assert len(sleeps) == 1


def test_jitter_shifts_timing_never_content(chat_server):
    url, state = chat_server
    results = []
    timings = []
    for seed in (1, 2):
        state["script"] += [(429, {}), (200, ok_payload("Final answer: 7"))]
        backend, sleeps = backend_for(fast_spec(url), seed=seed)
        results.append(backend.complete(prompt_for(make_triplet())).text)
        timings.append(tuple(sleeps))
    assert results[0] == results[1] == "Final answer: 7"
    assert timings[0] != timings[1]


# retry policy and model spec


def test_retry_policy_delay_schedule():
    policy = RetryPolicy(max_attempts=5, base_delay=1.0, multiplier=2.0, max_delay=60.0)
    assert [policy.delay_before(n) for n in (2, 3, 4, 5)] == [1.0, 2.0, 4.0, 8.0]
    capped = RetryPolicy(base_delay=40.0, multiplier=2.0, max_delay=60.0)
    assert capped.delay_before(3) == 60.0


def test_model_spec_round_trips_through_dict():
    spec = fast_spec("http://example.invalid", auth_env="KEY")
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_model_spec_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown model config keys"):
        ModelSpec.from_dict({"name": "m", "endpoint": "x", "api_key": "nope"})


def test_model_spec_rejects_unknown_nested_keys():
    with pytest.raises(ConfigurationError, match="bad model config"):
        ModelSpec.from_dict(
            {"name": "m", "endpoint": "x", "params": {"temp": 0.5}}
        )


def test_model_spec_never_stores_secrets():
    spec = fast_spec("http://example.invalid", auth_env="KEY")
    assert "s3cret" not in json.dumps(spec.to_dict())
