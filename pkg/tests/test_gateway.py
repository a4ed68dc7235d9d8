"""Prompt rendering, structured block extraction, and providers (incl. live HTTP)."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from ucm import plantuml
from ucm.gateway.blocks import StructuredBlockError, extract_structured_block
from ucm.gateway.providers import (
    CompletionRequest,
    CompletionResponse,
    GatewayError,
    HttpError,
    LiveProvider,
    NoFixtureError,
    RecordingProvider,
    ReplayProvider,
    ScriptedProvider,
    request_hash,
)
from ucm.gateway.templates import (
    PromptTemplate,
    TemplateError,
    load_builtin_templates,
    render_prompt,
)


def simple_template(**overrides) -> PromptTemplate:
    fields = dict(
        id="t",
        role_preamble="You are an expert in software engineering.",
        knowledge_block="",
        negative_constraints=("Do not guess.", "Do not add prose.", "Do not repeat."),
        task_instruction="Extract actors from:\n{{requirements}}",
        output_schema="Reply with one fenced JSON block.",
    )
    fields.update(overrides)
    return PromptTemplate(**fields)


class TestRenderPrompt:
    def test_no_placeholders_passes_task_verbatim(self):
        template = simple_template(task_instruction="Say hello.")
        request = render_prompt(template, {})
        assert request.messages[1][1] == "Say hello.\n\nReply with one fenced JSON block."

    def test_variable_substituted_exactly_once(self):
        request = render_prompt(simple_template(), {"requirements": "<text>"})
        assert request.messages[1][1].count("<text>") == 1

    def test_unbound_variable(self):
        with pytest.raises(TemplateError) as exc:
            render_prompt(simple_template(), {})
        assert exc.value.code == "E-UNBOUND-VAR"
        assert "requirements" in str(exc.value)

    def test_unknown_variable_strict(self):
        with pytest.raises(TemplateError) as exc:
            render_prompt(simple_template(), {"requirements": "x", "stray": "y"})
        assert exc.value.code == "E-UNKNOWN-VAR"
        render_prompt(simple_template(), {"requirements": "x", "stray": "y"}, strict=False)

    def test_deterministic_rendering(self):
        first = render_prompt(simple_template(), {"requirements": "same"})
        second = render_prompt(simple_template(), {"requirements": "same"})
        assert first == second
        assert request_hash(first) == request_hash(second)

    def test_system_message_structure(self):
        template = simple_template(knowledge_block="Some facts.")
        system = render_prompt(template, {"requirements": "x"}).messages[0][1]
        assert system.startswith("You are an expert in software engineering.")
        assert "Some facts." in system
        assert "1. Do not guess." in system and "3. Do not repeat." in system


class TestBuiltinTemplates:
    def test_all_four_ship(self):
        templates = load_builtin_templates()
        assert set(templates) == {
            "actor_extraction",
            "usecase_extraction",
            "model_generation",
            "description_generation",
        }

    def test_every_template_carries_the_patterns(self):
        for template in load_builtin_templates().values():
            assert "expert in software engineering" in template.role_preamble
            assert len(template.negative_constraints) >= 3

    def test_model_template_embeds_renderer_grammar(self):
        templates = load_builtin_templates()
        assert plantuml.GRAMMAR_GUIDE in templates["model_generation"].knowledge_block


class TestExtractStructuredBlock:
    def test_single_block(self):
        assert extract_structured_block('```json\n[1, 2]\n```') == [1, 2]

    def test_prose_around_block(self):
        content = 'Sure!\n\n```json\n{"a": 1}\n```\n\nHope that helps.'
        assert extract_structured_block(content) == {"a": 1}

    def test_no_block(self):
        with pytest.raises(StructuredBlockError) as exc:
            extract_structured_block("no fence here")
        assert exc.value.code == "E-NO-BLOCK"

    def test_malformed_json_reports_position(self):
        with pytest.raises(StructuredBlockError) as exc:
            extract_structured_block("```json\n{broken\n```")
        assert exc.value.code == "E-MALFORMED"
        assert exc.value.position is not None

    def test_text_format_returns_raw_body(self):
        content = "```\n@startuml\n@enduml\n```"
        assert extract_structured_block(content, "text") == "@startuml\n@enduml\n"

    def test_first_block_wins(self):
        content = "```json\n1\n```\n```json\n2\n```"
        assert extract_structured_block(content) == 1


def make_request(text: str = "hi") -> CompletionRequest:
    return CompletionRequest(messages=(("system", "sys"), ("user", text)))


class TestRequestValidation:
    def test_first_message_must_be_system(self):
        with pytest.raises(ValueError):
            CompletionRequest(messages=(("user", "x"),))

    def test_needs_messages(self):
        with pytest.raises(ValueError):
            CompletionRequest(messages=())

    def test_hash_ignores_max_tokens(self):
        a = CompletionRequest(messages=(("system", "s"), ("user", "u")), max_tokens=10)
        b = CompletionRequest(messages=(("system", "s"), ("user", "u")), max_tokens=999)
        assert request_hash(a) == request_hash(b)


class TestReplayProvider:
    def test_fixture_echo(self, tmp_path):
        request = make_request()
        (tmp_path / f"{request_hash(request)}.json").write_text(
            json.dumps({"content": "X"}), "utf-8"
        )
        assert ReplayProvider(tmp_path).complete(request).content == "X"

    def test_missing_fixture_reports_hash(self, tmp_path):
        request = make_request()
        with pytest.raises(NoFixtureError) as exc:
            ReplayProvider(tmp_path).complete(request)
        assert exc.value.code == "E-NO-FIXTURE"
        assert exc.value.request_hash == request_hash(request)

    def test_record_then_replay_round_trip(self, tmp_path):
        recorder = RecordingProvider(ScriptedProvider(["answer"]), tmp_path)
        request = make_request("roundtrip")
        recorded = recorder.complete(request)
        replayed = ReplayProvider(tmp_path).complete(request)
        assert replayed.content == recorded.content == "answer"


class TestScriptedProvider:
    def test_queued_responses_in_order(self):
        provider = ScriptedProvider(["one", CompletionResponse(content="two")])
        assert provider.complete(make_request()).content == "one"
        assert provider.complete(make_request()).content == "two"
        with pytest.raises(GatewayError):
            provider.complete(make_request())
        assert len(provider.requests) == 3


class _StubHandler(BaseHTTPRequestHandler):
    behavior: list = []  # (status, body) per call, shared mutable script
    calls: list = []

    def do_POST(self):  # noqa: N802 - http.server API
        length = int(self.headers.get("Content-Length", 0))
        _StubHandler.calls.append(json.loads(self.rfile.read(length)))
        status, body = (
            _StubHandler.behavior.pop(0) if _StubHandler.behavior else (200, {})
        )
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep test output quiet
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.behavior = []
    _StubHandler.calls = []
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join(timeout=5)


GOOD_BODY = {"id": "r1", "model": "m", "choices": [{"message": {"content": "hello"}}]}


class TestLiveProvider:
    def test_success_parses_content(self, stub_server):
        _StubHandler.behavior = [(200, GOOD_BODY)]
        provider = LiveProvider(stub_server, api_key="k", sleep=lambda s: None)
        response = provider.complete(make_request())
        assert response.content == "hello"
        assert response.provider_meta["model"] == "m"
        assert _StubHandler.calls[0]["model"] == "default"

    def test_http_500_thrice_raises_after_three_attempts(self, stub_server):
        _StubHandler.behavior = [(500, {}), (500, {}), (500, {})]
        sleeps: list[float] = []
        provider = LiveProvider(stub_server, sleep=sleeps.append)
        with pytest.raises(HttpError) as exc:
            provider.complete(make_request())
        assert exc.value.status == 500
        assert len(_StubHandler.calls) == 3
        assert sleeps == [0.5, 1.0]

    def test_retry_then_success(self, stub_server):
        _StubHandler.behavior = [(500, {}), (200, GOOD_BODY)]
        provider = LiveProvider(stub_server, sleep=lambda s: None)
        assert provider.complete(make_request()).content == "hello"
        assert len(_StubHandler.calls) == 2

    def test_client_error_fails_fast(self, stub_server):
        _StubHandler.behavior = [(401, {})]
        provider = LiveProvider(stub_server, sleep=lambda s: None)
        with pytest.raises(HttpError) as exc:
            provider.complete(make_request())
        assert exc.value.status == 401
        assert len(_StubHandler.calls) == 1

    def test_unreachable_endpoint_is_transport_error(self):
        provider = LiveProvider("http://127.0.0.1:1", sleep=lambda s: None)
        with pytest.raises(GatewayError) as exc:
            provider.complete(make_request())
        assert exc.value.code in ("E-TRANSPORT", "E-TIMEOUT")
