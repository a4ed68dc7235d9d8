"""Prompt template engine: role preamble + knowledge block + negative constraints.

Built-in templates live as versioned JSON data files next to this module; the
``{{plantuml.grammar}}`` include token in a knowledge block is expanded at load
time so the diagram-generation prompt always carries the current renderer
grammar.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from ucm import plantuml
from ucm.gateway.providers import CompletionRequest

E_UNBOUND_VAR = "E-UNBOUND-VAR"
E_UNKNOWN_VAR = "E-UNKNOWN-VAR"

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 2048

_PLACEHOLDER_RE = re.compile(r"\{\{([a-z_][a-z0-9_]*)\}\}")
_GRAMMAR_INCLUDE = "{{plantuml.grammar}}"

BUILTIN_TEMPLATE_IDS = (
    "actor_extraction",
    "usecase_extraction",
    "model_generation",
    "description_generation",
)


class TemplateError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")
        self.message = message


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    role_preamble: str
    knowledge_block: str
    negative_constraints: tuple[str, ...]
    task_instruction: str
    output_schema: str
    version: str = "1"

    def __post_init__(self) -> None:
        if not self.task_instruction.strip():
            raise ValueError(f"template {self.id!r} has an empty task instruction")
        object.__setattr__(
            self, "negative_constraints", tuple(self.negative_constraints)
        )

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in _PLACEHOLDER_RE.findall(self.task_instruction):
            if name not in seen:
                seen.append(name)
        return tuple(seen)


def load_builtin_templates() -> dict[str, PromptTemplate]:
    """Load the four shipping templates from their data files."""
    templates: dict[str, PromptTemplate] = {}
    data_dir = resources.files("ucm.gateway") / "data"
    for template_id in BUILTIN_TEMPLATE_IDS:
        raw = json.loads((data_dir / f"{template_id}.json").read_text("utf-8"))
        knowledge = raw.get("knowledge_block", "").replace(
            _GRAMMAR_INCLUDE, plantuml.GRAMMAR_GUIDE
        )
        templates[template_id] = PromptTemplate(
            id=raw["id"],
            role_preamble=raw["role_preamble"],
            knowledge_block=knowledge,
            negative_constraints=tuple(raw.get("negative_constraints", [])),
            task_instruction=raw["task_instruction"],
            output_schema=raw.get("output_schema", ""),
            version=str(raw.get("version", "1")),
        )
    return templates


def render_system_message(template: PromptTemplate) -> str:
    parts = [template.role_preamble]
    if template.knowledge_block:
        parts.append(template.knowledge_block)
    if template.negative_constraints:
        numbered = "\n".join(
            f"{i}. {constraint}"
            for i, constraint in enumerate(template.negative_constraints, start=1)
        )
        parts.append("Avoid the following common mistakes:\n" + numbered)
    return "\n\n".join(parts)


def render_prompt(
    template: PromptTemplate,
    variables: Mapping[str, str],
    *,
    model_name: str = "default",
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    strict: bool = True,
) -> CompletionRequest:
    """Substitute placeholders and assemble the deterministic two-message request.

    Raises E-UNBOUND-VAR for a placeholder without a value and, in strict
    mode, E-UNKNOWN-VAR for a supplied variable no placeholder uses.
    """
    placeholders = template.placeholders
    for name in placeholders:
        if name not in variables:
            raise TemplateError(E_UNBOUND_VAR, f"no value for placeholder {name!r}")
    if strict:
        for name in sorted(variables):
            if name not in placeholders:
                raise TemplateError(E_UNKNOWN_VAR, f"variable {name!r} has no placeholder")

    task = _PLACEHOLDER_RE.sub(lambda m: str(variables[m.group(1)]), template.task_instruction)
    user = task if not template.output_schema else f"{task}\n\n{template.output_schema}"
    return CompletionRequest(
        messages=(("system", render_system_message(template)), ("user", user)),
        temperature=temperature,
        max_tokens=max_tokens,
        model_name=model_name,
    )
