"""Domain types for use case models plus structural validation and normalization.

A use case model bundles actors, use cases, actor-to-use-case associations and
optional include/extend relations inside a named system boundary.  All types
here are immutable values; operations return new models instead of mutating.

Within an assembled model the association list is authoritative for linkage:
``normalize`` rederives each use case's ``actor_ids`` from the associations so
that serialization, diffing and diagram round-trips agree.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Sequence

# Violation codes reported by validate_model.
E_DUP_ID = "E-DUP-ID"
E_EMPTY_NAME = "E-EMPTY-NAME"
E_REF_ACTOR = "E-REF-ACTOR"
E_REF_USECASE = "E-REF-USECASE"
E_DUP_EDGE = "E-DUP-EDGE"
E_SELF_REL = "E-SELF-REL"
E_SPAN = "E-SPAN"
E_UNLINKED_UC = "E-UNLINKED-UC"

ACTOR_ID_PREFIX = "A"
USECASE_ID_PREFIX = "UC"

_WS_RUN = re.compile(r"\s+")


def clean_name(name: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WS_RUN.sub(" ", name).strip()


def next_id(prefix: str, taken: Iterable[str]) -> str:
    """Next unused numeric id for a prefix: A1, A2, ... / UC1, UC2, ..."""
    pattern = re.compile(rf"^{re.escape(prefix)}(\d+)$")
    highest = 0
    for existing in taken:
        m = pattern.match(existing)
        if m:
            highest = max(highest, int(m.group(1)))
    return f"{prefix}{highest + 1}"


class ActorKind(str, Enum):
    HUMAN = "human"
    EXTERNAL_SYSTEM = "external_system"
    HARDWARE = "hardware"


class RelationKind(str, Enum):
    INCLUDE = "include"
    EXTEND = "extend"


Span = tuple[int, int]


def _spans(value: Sequence[Sequence[int]]) -> tuple[Span, ...]:
    return tuple((int(s), int(e)) for s, e in value)


@dataclass(frozen=True)
class Actor:
    """An entity outside the system boundary that interacts with the system."""

    id: str
    name: str
    kind: ActorKind = ActorKind.HUMAN
    source_spans: tuple[Span, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActorKind(self.kind))
        object.__setattr__(self, "source_spans", _spans(self.source_spans))


@dataclass(frozen=True)
class UseCase:
    """A user-facing functional goal, linked to the actors that drive it."""

    id: str
    title: str
    actor_ids: tuple[str, ...] = ()
    source_spans: tuple[Span, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "actor_ids", tuple(self.actor_ids))
        object.__setattr__(self, "source_spans", _spans(self.source_spans))


@dataclass(frozen=True)
class Association:
    """An interaction edge between one actor and one use case."""

    actor_id: str
    usecase_id: str


@dataclass(frozen=True)
class UseCaseRelation:
    """An include/extend edge between two use cases."""

    from_id: str
    to_id: str
    kind: RelationKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RelationKind(self.kind))


@dataclass(frozen=True)
class UseCaseModel:
    """Actors, use cases and their edges inside a named system boundary."""

    system_name: str
    actors: tuple[Actor, ...] = ()
    use_cases: tuple[UseCase, ...] = ()
    associations: tuple[Association, ...] = ()
    relations: tuple[UseCaseRelation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "actors", tuple(self.actors))
        object.__setattr__(self, "use_cases", tuple(self.use_cases))
        object.__setattr__(self, "associations", tuple(self.associations))
        object.__setattr__(self, "relations", tuple(self.relations))

    def actor_by_id(self, actor_id: str) -> Actor | None:
        for actor in self.actors:
            if actor.id == actor_id:
                return actor
        return None

    def usecase_by_id(self, usecase_id: str) -> UseCase | None:
        for usecase in self.use_cases:
            if usecase.id == usecase_id:
                return usecase
        return None


@dataclass(frozen=True)
class UseCaseDescription:
    """Structured flow text complementing one use case of the diagram."""

    usecase_id: str
    preconditions: tuple[str, ...] = ()
    main_flow: tuple[str, ...] = ()
    alternative_flows: tuple[tuple[str, tuple[str, ...]], ...] = ()
    postconditions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "preconditions", tuple(self.preconditions))
        object.__setattr__(self, "main_flow", tuple(self.main_flow))
        object.__setattr__(
            self,
            "alternative_flows",
            tuple((label, tuple(steps)) for label, steps in self.alternative_flows),
        )
        object.__setattr__(self, "postconditions", tuple(self.postconditions))


@dataclass(frozen=True)
class RequirementsDoc:
    """A requirements text under analysis."""

    id: str
    title: str
    text: str


@dataclass(frozen=True)
class Violation:
    """One structural defect found in a model; data, not an exception."""

    code: str
    element_id: str | None
    message: str


class InvalidModelError(ValueError):
    """Raised when an operation requires a structurally valid model."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        summary = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(f"model is invalid: {summary}")


def validate_model(
    model: UseCaseModel,
    *,
    requirements_text: str | None = None,
    confirmed: bool = False,
) -> list[Violation]:
    """Check every structural invariant; returns an empty list iff all hold.

    ``requirements_text`` enables source-span bound checks.  ``confirmed``
    additionally requires every use case to reference at least one actor,
    which only holds for models past the confirmation gate.
    """
    violations: list[Violation] = []

    if not clean_name(model.system_name):
        violations.append(Violation(E_EMPTY_NAME, None, "system name is empty"))

    actor_ids: set[str] = set()
    for actor in model.actors:
        if actor.id in actor_ids:
            violations.append(
                Violation(E_DUP_ID, actor.id, f"duplicate actor id {actor.id!r}")
            )
        actor_ids.add(actor.id)
        if not clean_name(actor.name):
            violations.append(
                Violation(E_EMPTY_NAME, actor.id, f"actor {actor.id!r} has an empty name")
            )
        violations.extend(_span_violations(actor.id, actor.source_spans, requirements_text))

    usecase_ids: set[str] = set()
    for usecase in model.use_cases:
        if usecase.id in usecase_ids or usecase.id in actor_ids:
            violations.append(
                Violation(E_DUP_ID, usecase.id, f"duplicate element id {usecase.id!r}")
            )
        usecase_ids.add(usecase.id)
        if not clean_name(usecase.title):
            violations.append(
                Violation(
                    E_EMPTY_NAME, usecase.id, f"use case {usecase.id!r} has an empty title"
                )
            )
        for ref in usecase.actor_ids:
            if ref not in actor_ids:
                violations.append(
                    Violation(
                        E_REF_ACTOR,
                        usecase.id,
                        f"use case {usecase.id!r} references unknown actor {ref!r}",
                    )
                )
        if confirmed and not usecase.actor_ids:
            violations.append(
                Violation(
                    E_UNLINKED_UC,
                    usecase.id,
                    f"use case {usecase.id!r} references no actor",
                )
            )
        violations.extend(
            _span_violations(usecase.id, usecase.source_spans, requirements_text)
        )

    seen_edges: set[tuple[str, str]] = set()
    for assoc in model.associations:
        if assoc.actor_id not in actor_ids:
            violations.append(
                Violation(
                    E_REF_ACTOR,
                    assoc.actor_id,
                    f"association references unknown actor {assoc.actor_id!r}",
                )
            )
        if assoc.usecase_id not in usecase_ids:
            violations.append(
                Violation(
                    E_REF_USECASE,
                    assoc.usecase_id,
                    f"association references unknown use case {assoc.usecase_id!r}",
                )
            )
        pair = (assoc.actor_id, assoc.usecase_id)
        if pair in seen_edges:
            violations.append(
                Violation(
                    E_DUP_EDGE,
                    assoc.actor_id,
                    f"duplicate association {assoc.actor_id!r} -> {assoc.usecase_id!r}",
                )
            )
        seen_edges.add(pair)

    seen_relations: set[tuple[str, str, RelationKind]] = set()
    for rel in model.relations:
        for endpoint in (rel.from_id, rel.to_id):
            if endpoint not in usecase_ids:
                violations.append(
                    Violation(
                        E_REF_USECASE,
                        endpoint,
                        f"relation references unknown use case {endpoint!r}",
                    )
                )
        if rel.from_id == rel.to_id:
            violations.append(
                Violation(
                    E_SELF_REL, rel.from_id, f"relation on {rel.from_id!r} targets itself"
                )
            )
        key = (rel.from_id, rel.to_id, rel.kind)
        if key in seen_relations:
            violations.append(
                Violation(
                    E_DUP_EDGE,
                    rel.from_id,
                    f"duplicate relation {rel.from_id!r} -> {rel.to_id!r}",
                )
            )
        seen_relations.add(key)

    return violations


def _span_violations(
    element_id: str, spans: tuple[Span, ...], text: str | None
) -> list[Violation]:
    out = []
    for start, end in spans:
        if start < 0 or end < start or (text is not None and end > len(text)):
            out.append(
                Violation(
                    E_SPAN,
                    element_id,
                    f"span ({start}, {end}) of {element_id!r} is out of bounds",
                )
            )
    return out


def normalize(model: UseCaseModel) -> UseCaseModel:
    """Return the canonical form of a model.

    Names are whitespace-cleaned, duplicate edges dropped, actors sorted by
    (name, id), use cases by (title, id), edges lexicographically, and each
    use case's actor link set rederived from the associations.  Models with
    defects that cleaning cannot repair are rejected with their violations.
    """
    actors = tuple(
        sorted(
            (replace(a, name=clean_name(a.name)) for a in model.actors),
            key=lambda a: (a.name, a.id),
        )
    )
    associations = tuple(
        sorted(set(model.associations), key=lambda e: (e.actor_id, e.usecase_id))
    )
    relations = tuple(
        sorted(set(model.relations), key=lambda r: (r.from_id, r.to_id, r.kind.value))
    )
    links: dict[str, set[str]] = {}
    for edge in associations:
        links.setdefault(edge.usecase_id, set()).add(edge.actor_id)
    use_cases = tuple(
        sorted(
            (
                replace(
                    uc,
                    title=clean_name(uc.title),
                    actor_ids=tuple(sorted(links.get(uc.id, set()))),
                )
                for uc in model.use_cases
            ),
            key=lambda uc: (uc.title, uc.id),
        )
    )
    normalized = UseCaseModel(
        system_name=clean_name(model.system_name),
        actors=actors,
        use_cases=use_cases,
        associations=associations,
        relations=relations,
    )
    violations = validate_model(normalized)
    if violations:
        raise InvalidModelError(violations)
    return normalized


# ---------------------------------------------------------------------------
# Canonical JSON interchange
# ---------------------------------------------------------------------------

def actor_to_dict(actor: Actor) -> dict[str, Any]:
    return {
        "id": actor.id,
        "name": actor.name,
        "kind": actor.kind.value,
        "source_spans": [list(span) for span in actor.source_spans],
    }


def usecase_to_dict(usecase: UseCase) -> dict[str, Any]:
    return {
        "id": usecase.id,
        "title": usecase.title,
        "actor_ids": list(usecase.actor_ids),
        "source_spans": [list(span) for span in usecase.source_spans],
    }


def model_to_dict(model: UseCaseModel) -> dict[str, Any]:
    return {
        "system_name": model.system_name,
        "actors": [actor_to_dict(a) for a in model.actors],
        "use_cases": [usecase_to_dict(uc) for uc in model.use_cases],
        "associations": [
            {"actor_id": e.actor_id, "usecase_id": e.usecase_id} for e in model.associations
        ],
        "relations": [
            {"from_id": r.from_id, "to_id": r.to_id, "kind": r.kind.value}
            for r in model.relations
        ],
    }


def description_to_dict(description: UseCaseDescription) -> dict[str, Any]:
    return {
        "usecase_id": description.usecase_id,
        "preconditions": list(description.preconditions),
        "main_flow": list(description.main_flow),
        "alternative_flows": [
            {"label": label, "steps": list(steps)}
            for label, steps in description.alternative_flows
        ],
        "postconditions": list(description.postconditions),
    }


def actor_from_dict(data: dict[str, Any]) -> Actor:
    return Actor(
        id=data["id"],
        name=data["name"],
        kind=ActorKind(data.get("kind", "human")),
        source_spans=_spans(data.get("source_spans", [])),
    )


def usecase_from_dict(data: dict[str, Any]) -> UseCase:
    return UseCase(
        id=data["id"],
        title=data["title"],
        actor_ids=tuple(data.get("actor_ids", [])),
        source_spans=_spans(data.get("source_spans", [])),
    )


def model_from_dict(data: dict[str, Any]) -> UseCaseModel:
    try:
        return UseCaseModel(
            system_name=data["system_name"],
            actors=tuple(actor_from_dict(a) for a in data.get("actors", [])),
            use_cases=tuple(usecase_from_dict(uc) for uc in data.get("use_cases", [])),
            associations=tuple(
                Association(e["actor_id"], e["usecase_id"])
                for e in data.get("associations", [])
            ),
            relations=tuple(
                UseCaseRelation(r["from_id"], r["to_id"], RelationKind(r["kind"]))
                for r in data.get("relations", [])
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc


def description_from_dict(data: dict[str, Any]) -> UseCaseDescription:
    return UseCaseDescription(
        usecase_id=data["usecase_id"],
        preconditions=tuple(data.get("preconditions", [])),
        main_flow=tuple(data.get("main_flow", [])),
        alternative_flows=tuple(
            (flow["label"], tuple(flow["steps"]))
            for flow in data.get("alternative_flows", [])
        ),
        postconditions=tuple(data.get("postconditions", [])),
    )


def model_to_json(model: UseCaseModel) -> str:
    """Canonical JSON for a model: normalized order, two-space indent."""
    return json.dumps(model_to_dict(normalize(model)), indent=2, ensure_ascii=False) + "\n"


def model_from_json(text: str) -> UseCaseModel:
    return model_from_dict(json.loads(text))
