"""Prompt templates and provider-agnostic completion clients."""

from ucm.gateway.blocks import StructuredBlockError, extract_structured_block
from ucm.gateway.providers import (
    CompletionRequest,
    CompletionResponse,
    GatewayError,
    HttpError,
    GatewayTimeout,
    LiveProvider,
    NoFixtureError,
    RecordingProvider,
    ReplayProvider,
    ScriptedProvider,
    TransportError,
    request_hash,
)
from ucm.gateway.templates import (
    PromptTemplate,
    TemplateError,
    load_builtin_templates,
    render_prompt,
)

__all__ = [
    "CompletionRequest",
    "CompletionResponse",
    "GatewayError",
    "GatewayTimeout",
    "HttpError",
    "LiveProvider",
    "NoFixtureError",
    "PromptTemplate",
    "RecordingProvider",
    "ReplayProvider",
    "ScriptedProvider",
    "StructuredBlockError",
    "TemplateError",
    "TransportError",
    "extract_structured_block",
    "load_builtin_templates",
    "render_prompt",
    "request_hash",
]
