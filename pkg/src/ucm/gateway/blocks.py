"""Extraction of the structured payload from free-form LLM replies.

Models wrap their answer in prose; only the first fenced code block counts.
"""

from __future__ import annotations

import json
import re
from typing import Any

E_NO_BLOCK = "E-NO-BLOCK"
E_MALFORMED = "E-MALFORMED"

_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\r?\n(.*?)```", re.DOTALL)


class StructuredBlockError(ValueError):
    def __init__(self, code: str, message: str, position: int | None = None):
        self.code = code
        self.position = position
        super().__init__(f"{code}: {message}")
        self.message = message


def extract_structured_block(content: str, fmt: str = "json") -> Any:
    """Return the first fenced block's payload; surrounding prose is ignored.

    ``fmt`` is "json" (parsed, E-MALFORMED carries the parse position) or
    "text" (raw block body, e.g. PlantUML source).
    """
    match = _FENCE_RE.search(content)
    if match is None:
        raise StructuredBlockError(E_NO_BLOCK, "reply contains no fenced code block")
    body = match.group(1)
    if fmt == "text":
        return body
    if fmt == "json":
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise StructuredBlockError(
                E_MALFORMED,
                f"fenced block is not valid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}",
                position=exc.pos,
            ) from exc
    raise ValueError(f"unknown structured format {fmt!r}")
