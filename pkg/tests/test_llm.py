import pytest

from neuroagent.coordinator import build_coordinator_prompt
from neuroagent.domain import TaskKind
from neuroagent.llm import (
    BackendUnreachableError,
    ChatMessage,
    MalformedBackendReplyError,
    RemoteBackend,
    Role,
    RuleBackend,
    ScriptedBackend,
    TranscriptExhaustedError,
    backend_from_config,
    complete,
)

from helpers import ok_outcome


def _messages(user="hello"):
    return [ChatMessage(Role.SYSTEM, "system prompt"), ChatMessage(Role.USER, user)]


class TestChatMessage:
    def test_system_and_user_content_must_be_non_empty(self):
        with pytest.raises(ValueError):
            ChatMessage(Role.SYSTEM, "")
        with pytest.raises(ValueError):
            ChatMessage(Role.USER, "")
        ChatMessage(Role.ASSISTANT, "")  # assistant may be empty

    def test_first_message_must_be_system(self):
        backend = ScriptedBackend(["x"])
        with pytest.raises(ValueError):
            complete(backend, [ChatMessage(Role.USER, "hi")])
        with pytest.raises(ValueError):
            complete(backend, [])


class TestScripted:
    def test_replays_in_order(self):
        backend = ScriptedBackend(["FINAL: AD", "second"])
        assert complete(backend, _messages()) == "FINAL: AD"
        assert complete(backend, _messages()) == "second"

    def test_over_consumption_raises(self):
        backend = ScriptedBackend(["only"])
        complete(backend, _messages())
        with pytest.raises(TranscriptExhaustedError):
            complete(backend, _messages())

    def test_deterministic_across_instances(self):
        a = ScriptedBackend(["x", "y"])
        b = ScriptedBackend(["x", "y"])
        assert [complete(a, _messages()), complete(a, _messages())] == [
            complete(b, _messages()), complete(b, _messages()),
        ]


class TestEchoVoteRule:
    def test_majority_label_echoed(self):
        outcomes = [
            ok_outcome("m1", (0.1, 0.7, 0.2)),
            ok_outcome("m2", (0.2, 0.5, 0.3)),
            ok_outcome("m3", (0.6, 0.2, 0.2)),
        ]
        messages = build_coordinator_prompt(TaskKind.DIAGNOSIS, outcomes)
        assert RuleBackend("echo-vote").complete(messages) == "FINAL: MCI"

    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError):
            RuleBackend("no-such-rule")

    def test_no_table_yields_non_grammar_reply(self):
        reply = RuleBackend("echo-vote").complete(_messages("no table here"))
        assert "FINAL:" not in reply


class _FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        pass

    def json(self):
        return self._payload


class TestRemote:
    def test_single_request_no_retry(self, monkeypatch):
        calls = []

        def fake_post(url, json=None, headers=None, timeout=None):
            calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
            return _FakeResponse({"choices": [{"message": {"content": "FINAL: CN"}}]})

        monkeypatch.setattr("neuroagent.llm.httpx.post", fake_post)
        monkeypatch.setenv("NEUROAGENT_LLM_API_KEY", "sk-secret-123")
        backend = RemoteBackend(endpoint="http://llm.local/v1", model_name="any-model")
        assert backend.complete(_messages()) == "FINAL: CN"
        assert len(calls) == 1
        assert calls[0]["url"] == "http://llm.local/v1/chat/completions"
        assert calls[0]["json"]["temperature"] == 0.0
        assert calls[0]["json"]["model"] == "any-model"
        assert calls[0]["headers"]["Authorization"] == "Bearer sk-secret-123"

    def test_unreachable_raises_without_leaking_credential(self, monkeypatch):
        import httpx

        def fake_post(url, **kwargs):
            raise httpx.ConnectError("boom")

        monkeypatch.setattr("neuroagent.llm.httpx.post", fake_post)
        monkeypatch.setenv("NEUROAGENT_LLM_API_KEY", "sk-secret-123")
        backend = RemoteBackend(endpoint="http://llm.local/v1")
        with pytest.raises(BackendUnreachableError) as err:
            backend.complete(_messages())
        assert "sk-secret-123" not in str(err.value)

    def test_malformed_reply_shape(self, monkeypatch):
        monkeypatch.setattr(
            "neuroagent.llm.httpx.post",
            lambda url, **kwargs: _FakeResponse({"unexpected": True}),
        )
        backend = RemoteBackend(endpoint="http://llm.local/v1")
        with pytest.raises(MalformedBackendReplyError):
            backend.complete(_messages())

    def test_temperature_bounds(self):
        with pytest.raises(ValueError):
            RemoteBackend(endpoint="http://x", temperature=2.5)


class TestBackendFromConfig:
    def test_scripted(self):
        backend = backend_from_config({"kind": "scripted", "transcript": ["a"]})
        assert isinstance(backend, ScriptedBackend)

    def test_rule(self):
        backend = backend_from_config({"kind": "rule", "tag": "echo-vote"})
        assert isinstance(backend, RuleBackend)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            backend_from_config({"kind": "telepathy"})
