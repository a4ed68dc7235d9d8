"""Renderer, tolerant parser, and linter for the use-case-diagram subset of PlantUML.

The renderer emits one frozen, canonical grammar so that text round-trips are
bit-exact.  The parser accepts that grammar plus the tolerances LLM output
needs (missing aliases, either arrow direction, declarations outside the
boundary rectangle, comments, decorative directives).  The linter never
raises; it reports rule findings with stable codes and severities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from ucm.model import (
    ACTOR_ID_PREFIX,
    USECASE_ID_PREFIX,
    Actor,
    ActorKind,
    Association,
    InvalidModelError,
    RelationKind,
    UseCase,
    UseCaseModel,
    UseCaseRelation,
    clean_name,
    next_id,
    normalize,
    validate_model,
)

# Parser error codes.
E_NO_START = "E-NO-START"
E_NO_END = "E-NO-END"
E_UNDEF_REF = "E-UNDEF-REF"
E_SYNTAX = "E-SYNTAX"

# Lint rule codes.  L-UNKNOWN-LINE is informational: anything the grammar does
# not know (skinparam, title, malformed lines) is surfaced but never fatal.
L_NO_START = "L-NO-START"
L_NO_END = "L-NO-END"
L_UNDEF_REF = "L-UNDEF-REF"
L_DUP_ALIAS = "L-DUP-ALIAS"
L_ACTOR_ACTOR = "L-ACTOR-ACTOR"
L_ORPHAN_UC = "L-ORPHAN-UC"
L_EMPTY_NAME = "L-EMPTY-NAME"
L_DANGLING_REL = "L-DANGLING-REL"
L_UNKNOWN_LINE = "L-UNKNOWN-LINE"

DEFAULT_BOUNDARY = "System"

GRAMMAR_GUIDE = """\
A use case diagram is written in the following PlantUML subset, one
declaration per line:

@startuml
left to right direction
actor "<Actor name>" as A1
actor "<Actor name>" as A2 <<external_system>>
rectangle "<System name>" {
  usecase "<Use case title>" as UC1
}
A1 --> UC1
UC1 ..> UC2 : <<include>>
@enduml

Rules:
- The first line is @startuml and the last line is @enduml.
- Declare every actor with: actor "<name>" as <alias>. Aliases are short
  identifiers (A1, A2, ...). Non-human actors carry a trailing
  <<external_system>> or <<hardware>> stereotype.
- Declare every use case inside the rectangle block with:
  usecase "<title>" as <alias> (aliases UC1, UC2, ...), indented two spaces.
- The rectangle "<system name>" { ... } block is the system boundary.
- Connect an actor to a use case with: <actor_alias> --> <usecase_alias>.
  Never connect two actors or two use cases with -->.
- Optional include/extend relations between two different use cases:
  <alias> ..> <alias> : <<include>> or : <<extend>>.
- Every alias used in an arrow must have been declared.
- A double quote inside a name is written as two double quotes ("")."""


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class DiagramSource:
    """Raw PlantUML text; may be arbitrary, possibly invalid, LLM output."""

    text: str


@dataclass(frozen=True)
class LintFinding:
    code: str
    message: str
    line: int
    severity: Severity = Severity.ERROR

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "line": self.line,
            "severity": self.severity.value,
        }


class ParseError(ValueError):
    """A diagram source the parser cannot turn into a model."""

    def __init__(self, code: str, message: str, line: int | None = None):
        self.code = code
        self.line = line
        at = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}: {message}{at}")
        self.message = message


def _escape(name: str) -> str:
    return name.replace('"', '""')


def _unescape(name: str) -> str:
    return name.replace('""', '"')


def render_model(model: UseCaseModel) -> DiagramSource:
    """Emit the canonical PlantUML text for a valid model (normalized order)."""
    violations = validate_model(model)
    if violations:
        raise InvalidModelError(violations)
    m = normalize(model)
    lines = ["@startuml", "left to right direction"]
    for actor in m.actors:
        decl = f'actor "{_escape(actor.name)}" as {actor.id}'
        if actor.kind is not ActorKind.HUMAN:
            decl += f" <<{actor.kind.value}>>"
        lines.append(decl)
    lines.append(f'rectangle "{_escape(m.system_name)}" {{')
    for usecase in m.use_cases:
        lines.append(f'  usecase "{_escape(usecase.title)}" as {usecase.id}')
    lines.append("}")
    for edge in m.associations:
        lines.append(f"{edge.actor_id} --> {edge.usecase_id}")
    for rel in m.relations:
        lines.append(f"{rel.from_id} ..> {rel.to_id} : <<{rel.kind.value}>>")
    lines.append("@enduml")
    return DiagramSource("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Line scanner shared by parser and linter
# ---------------------------------------------------------------------------

_NAME = r'(?:"(?P<quoted>(?:[^"]|"")*)"|(?P<bare>\w+))'
_ACTOR_RE = re.compile(
    rf"^actor\s+{_NAME}(?:\s+as\s+(?P<alias>\w+))?(?:\s*<<\s*(?P<stereo>\w+)\s*>>)?\s*$"
)
_USECASE_RE = re.compile(
    rf"^usecase\s+{_NAME}(?:\s+as\s+(?P<alias>\w+))?(?:\s*<<\s*(?P<stereo>\w+)\s*>>)?\s*$"
)
_RECT_RE = re.compile(rf"^rectangle(?:\s+{_NAME})?\s*\{{\s*$")
_RECT_CLOSE_RE = re.compile(r"^\}\s*$")
_EDGE_RE = re.compile(r"^(?P<a>\w+)\s*(?P<back><)?-{1,2}(?P<fwd>>)?\s*(?P<b>\w+)\s*$")
_RELATION_RE = re.compile(
    r"^(?P<a>\w+)\s*(?P<back><)?\.{1,2}(?P<fwd>>)?\s*(?P<b>\w+)\s*:\s*"
    r"(?:<<\s*)?(?P<kind>include|extend)(?:\s*>>)?\s*$",
    re.IGNORECASE,
)
_DIRECTION_RE = re.compile(r"^(left\s+to\s+right|top\s+to\s+bottom)\s+direction$")
_START_RE = re.compile(r"^@startuml\b.*$")
_END_RE = re.compile(r"^@enduml\s*$")

# Decorative directives real PlantUML files carry; never structural for us.
_DECORATIVE_PREFIXES = (
    "skinparam",
    "title",
    "caption",
    "header",
    "footer",
    "scale",
    "hide",
    "show",
    "legend",
    "end legend",
    "autonumber",
    "note",
    "end note",
    "!",
)

_STEREO_KINDS = {
    "human": ActorKind.HUMAN,
    "person": ActorKind.HUMAN,
    "external_system": ActorKind.EXTERNAL_SYSTEM,
    "system": ActorKind.EXTERNAL_SYSTEM,
    "hardware": ActorKind.HARDWARE,
    "device": ActorKind.HARDWARE,
}


@dataclass(frozen=True)
class _Token:
    kind: str  # blank|comment|start|end|direction|actor|usecase|rect_open|rect_close|edge|relation|decorative|unknown
    line: int
    name: str | None = None
    alias: str | None = None
    stereo: str | None = None
    a: str | None = None
    b: str | None = None
    reversed_arrow: bool = False
    rel_kind: str | None = None


def _scan(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    in_block_comment = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().rstrip("\r")
        if in_block_comment:
            if "'/" in line:
                in_block_comment = False
            tokens.append(_Token("comment", lineno))
            continue
        if not line:
            tokens.append(_Token("blank", lineno))
            continue
        if line.startswith("'"):
            tokens.append(_Token("comment", lineno))
            continue
        if line.startswith("/'"):
            if "'/" not in line:
                in_block_comment = True
            tokens.append(_Token("comment", lineno))
            continue
        if _START_RE.match(line):
            tokens.append(_Token("start", lineno))
            continue
        if _END_RE.match(line):
            tokens.append(_Token("end", lineno))
            continue
        if _DIRECTION_RE.match(line):
            tokens.append(_Token("direction", lineno))
            continue
        m = _ACTOR_RE.match(line)
        if m:
            name = _unescape(m.group("quoted")) if m.group("quoted") is not None else m.group("bare")
            alias = m.group("alias") or (m.group("bare") if m.group("quoted") is None else None)
            tokens.append(_Token("actor", lineno, name=name, alias=alias, stereo=m.group("stereo")))
            continue
        m = _USECASE_RE.match(line)
        if m:
            name = _unescape(m.group("quoted")) if m.group("quoted") is not None else m.group("bare")
            alias = m.group("alias") or (m.group("bare") if m.group("quoted") is None else None)
            tokens.append(_Token("usecase", lineno, name=name, alias=alias, stereo=m.group("stereo")))
            continue
        m = _RECT_RE.match(line)
        if m:
            name = None
            if m.group("quoted") is not None:
                name = _unescape(m.group("quoted"))
            elif m.group("bare") is not None:
                name = m.group("bare")
            tokens.append(_Token("rect_open", lineno, name=name))
            continue
        if _RECT_CLOSE_RE.match(line):
            tokens.append(_Token("rect_close", lineno))
            continue
        m = _RELATION_RE.match(line)
        if m:
            tokens.append(
                _Token(
                    "relation",
                    lineno,
                    a=m.group("a"),
                    b=m.group("b"),
                    reversed_arrow=bool(m.group("back")) and not m.group("fwd"),
                    rel_kind=m.group("kind").lower(),
                )
            )
            continue
        m = _EDGE_RE.match(line)
        if m:
            tokens.append(
                _Token(
                    "edge",
                    lineno,
                    a=m.group("a"),
                    b=m.group("b"),
                    reversed_arrow=bool(m.group("back")) and not m.group("fwd"),
                )
            )
            continue
        if any(line.lower().startswith(prefix) for prefix in _DECORATIVE_PREFIXES):
            tokens.append(_Token("decorative", lineno))
            continue
        tokens.append(_Token("unknown", lineno))
    return tokens


def _declarations(tokens: list[_Token]) -> Iterator[_Token]:
    for token in tokens:
        if token.kind in ("actor", "usecase"):
            yield token


def _source_text(src: DiagramSource | str) -> str:
    return src.text if isinstance(src, DiagramSource) else src


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def parse_model(src: DiagramSource | str) -> UseCaseModel:
    """Parse diagram text into a model, tolerating common LLM sloppiness.

    Aliases missing an ``as`` clause are auto-assigned; declarations outside a
    rectangle fall into the default "System" boundary; arrows work in either
    direction.  Structural problems raise ParseError with a stable code.
    """
    text = _source_text(src)
    tokens = _scan(text)

    start_index = None
    for i, token in enumerate(tokens):
        if token.kind == "start":
            start_index = i
            break
        if token.kind not in ("blank", "comment"):
            raise ParseError(E_SYNTAX, "content before @startuml", token.line)
    if start_index is None:
        raise ParseError(E_NO_START, "missing @startuml")

    end_index = None
    for i in range(start_index + 1, len(tokens)):
        if tokens[i].kind == "end":
            end_index = i
            break
    if end_index is None:
        raise ParseError(E_NO_END, "missing @enduml")
    for token in tokens[end_index + 1 :]:
        if token.kind not in ("blank", "comment"):
            raise ParseError(E_SYNTAX, "content after @enduml", token.line)

    body = tokens[start_index + 1 : end_index]

    # Pre-pass: every explicitly named alias, so auto-assignment never collides
    # and edges may reference declarations made later in the file.
    taken = {token.alias for token in _declarations(body) if token.alias}

    actors: dict[str, Actor] = {}
    usecases: dict[str, UseCase] = {}
    order_actors: list[str] = []
    order_usecases: list[str] = []
    edges: list[tuple[str, str, int]] = []
    relations: list[tuple[str, str, str, int]] = []
    boundary: str | None = None
    depth = 0

    for token in body:
        if token.kind in ("blank", "comment", "direction", "decorative", "start"):
            continue
        if token.kind == "actor":
            alias = token.alias
            if alias is None:
                alias = next_id(ACTOR_ID_PREFIX, taken)
                taken.add(alias)
            if alias in actors or alias in usecases:
                raise ParseError(E_SYNTAX, f"alias {alias!r} already declared", token.line)
            if not clean_name(token.name or ""):
                raise ParseError(E_SYNTAX, "actor name is empty", token.line)
            kind = _STEREO_KINDS.get((token.stereo or "").lower(), ActorKind.HUMAN)
            actors[alias] = Actor(id=alias, name=token.name, kind=kind)
            order_actors.append(alias)
        elif token.kind == "usecase":
            alias = token.alias
            if alias is None:
                alias = next_id(USECASE_ID_PREFIX, taken)
                taken.add(alias)
            if alias in actors or alias in usecases:
                raise ParseError(E_SYNTAX, f"alias {alias!r} already declared", token.line)
            if not clean_name(token.name or ""):
                raise ParseError(E_SYNTAX, "use case title is empty", token.line)
            usecases[alias] = UseCase(id=alias, title=token.name)
            order_usecases.append(alias)
        elif token.kind == "rect_open":
            depth += 1
            if boundary is None and token.name and clean_name(token.name):
                boundary = token.name
        elif token.kind == "rect_close":
            depth -= 1
            if depth < 0:
                raise ParseError(E_SYNTAX, "unmatched '}'", token.line)
        elif token.kind == "edge":
            left, right = token.a, token.b
            if token.reversed_arrow:
                left, right = right, left
            for endpoint in (left, right):
                if endpoint not in actors and endpoint not in usecases:
                    raise ParseError(
                        E_UNDEF_REF, f"edge references undeclared alias {endpoint!r}", token.line
                    )
            if left in actors and right in usecases:
                edges.append((left, right, token.line))
            elif left in usecases and right in actors:
                edges.append((right, left, token.line))
            else:
                what = "actors" if left in actors else "use cases"
                raise ParseError(
                    E_SYNTAX,
                    f"association must connect an actor and a use case, not two {what}",
                    token.line,
                )
        elif token.kind == "relation":
            left, right = token.a, token.b
            if token.reversed_arrow:
                left, right = right, left
            for endpoint in (left, right):
                if endpoint not in actors and endpoint not in usecases:
                    raise ParseError(
                        E_UNDEF_REF,
                        f"relation references undeclared alias {endpoint!r}",
                        token.line,
                    )
                if endpoint in actors:
                    raise ParseError(
                        E_SYNTAX,
                        f"include/extend endpoint {endpoint!r} is not a use case",
                        token.line,
                    )
            if left == right:
                raise ParseError(
                    E_SYNTAX, f"relation on {left!r} targets itself", token.line
                )
            relations.append((left, right, token.rel_kind, token.line))
        else:  # unknown
            raise ParseError(E_SYNTAX, "unrecognized line", token.line)

    if depth != 0:
        raise ParseError(E_SYNTAX, "unclosed rectangle", tokens[end_index].line)

    unique_edges: list[Association] = []
    seen_edges: set[tuple[str, str]] = set()
    for actor_id, usecase_id, _ in edges:
        if (actor_id, usecase_id) not in seen_edges:
            seen_edges.add((actor_id, usecase_id))
            unique_edges.append(Association(actor_id, usecase_id))

    unique_relations: list[UseCaseRelation] = []
    seen_relations: set[tuple[str, str, str]] = set()
    for from_id, to_id, kind, _ in relations:
        if (from_id, to_id, kind) not in seen_relations:
            seen_relations.add((from_id, to_id, kind))
            unique_relations.append(UseCaseRelation(from_id, to_id, RelationKind(kind)))

    links: dict[str, set[str]] = {}
    for edge in unique_edges:
        links.setdefault(edge.usecase_id, set()).add(edge.actor_id)

    return UseCaseModel(
        system_name=boundary if boundary else DEFAULT_BOUNDARY,
        actors=tuple(actors[a] for a in order_actors),
        use_cases=tuple(
            UseCase(
                id=alias,
                title=usecases[alias].title,
                actor_ids=tuple(sorted(links.get(alias, set()))),
            )
            for alias in order_usecases
        ),
        associations=tuple(unique_edges),
        relations=tuple(unique_relations),
    )


# ---------------------------------------------------------------------------
# Linter
# ---------------------------------------------------------------------------

def lint(src: DiagramSource | str) -> list[LintFinding]:
    """Apply every lint rule; never raises.  Findings sorted by (line, code)."""
    text = _source_text(src)
    tokens = _scan(text)
    findings: list[LintFinding] = []
    line_count = max((t.line for t in tokens), default=1)

    if not any(t.kind == "start" for t in tokens):
        findings.append(LintFinding(L_NO_START, "missing @startuml", 1))
    if not any(t.kind == "end" for t in tokens):
        findings.append(LintFinding(L_NO_END, "missing @enduml", line_count))

    declared: dict[str, str] = {}  # alias -> "actor" | "usecase"
    decl_line: dict[str, int] = {}
    auto_taken = {t.alias for t in _declarations(tokens) if t.alias}
    for token in tokens:
        if token.kind not in ("actor", "usecase"):
            continue
        alias = token.alias
        if alias is None:
            prefix = ACTOR_ID_PREFIX if token.kind == "actor" else USECASE_ID_PREFIX
            alias = next_id(prefix, auto_taken)
            auto_taken.add(alias)
        if alias in declared:
            findings.append(
                LintFinding(L_DUP_ALIAS, f"alias {alias!r} already declared", token.line)
            )
        else:
            declared[alias] = token.kind
            decl_line[alias] = token.line
        if not clean_name(token.name or ""):
            findings.append(
                LintFinding(L_EMPTY_NAME, "declaration has an empty name", token.line)
            )

    linked_usecases: set[str] = set()
    for token in tokens:
        if token.kind == "edge":
            kinds = []
            for endpoint in (token.a, token.b):
                kind = declared.get(endpoint)
                if kind is None:
                    findings.append(
                        LintFinding(
                            L_UNDEF_REF,
                            f"edge references undeclared alias {endpoint!r}",
                            token.line,
                        )
                    )
                kinds.append(kind)
            if kinds[0] is not None and kinds[0] == kinds[1]:
                what = "actors" if kinds[0] == "actor" else "use cases"
                findings.append(
                    LintFinding(
                        L_ACTOR_ACTOR,
                        f"association connects two {what}; it must join an actor and a use case",
                        token.line,
                    )
                )
            for endpoint, kind in zip((token.a, token.b), kinds):
                if kind == "usecase":
                    linked_usecases.add(endpoint)
        elif token.kind == "relation":
            for endpoint in (token.a, token.b):
                kind = declared.get(endpoint)
                if kind is None:
                    findings.append(
                        LintFinding(
                            L_DANGLING_REL,
                            f"include/extend references undeclared alias {endpoint!r}",
                            token.line,
                        )
                    )
                elif kind != "usecase":
                    findings.append(
                        LintFinding(
                            L_DANGLING_REL,
                            f"include/extend endpoint {endpoint!r} is not a use case",
                            token.line,
                        )
                    )
            if token.a == token.b:
                findings.append(
                    LintFinding(
                        L_DANGLING_REL,
                        "include/extend endpoints must be two distinct use cases",
                        token.line,
                    )
                )
        elif token.kind in ("unknown", "decorative"):
            findings.append(
                LintFinding(
                    L_UNKNOWN_LINE,
                    "line is not part of the use case diagram grammar",
                    token.line,
                    Severity.INFO,
                )
            )

    for alias, kind in declared.items():
        if kind == "usecase" and alias not in linked_usecases:
            findings.append(
                LintFinding(
                    L_ORPHAN_UC,
                    f"use case {alias!r} has no association to any actor",
                    decl_line[alias],
                    Severity.WARNING,
                )
            )

    findings.sort(key=lambda f: (f.line, f.code))
    return findings


def has_errors(findings: list[LintFinding]) -> bool:
    return any(f.severity is Severity.ERROR for f in findings)
