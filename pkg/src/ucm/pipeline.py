"""Session state machine: four generation stages with a validation gate each.

Stages run in order (actors, use cases, model, descriptions); a proposal must
be confirmed before the next stage may run, and confirmation may loop back to
re-propose.  Every stage performs at most one corrective re-prompt when the
reply cannot be used, then fails with E-REPAIR-FAILED.

The clock and id factory are injectable so replayed sessions export
byte-identical JSON.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Sequence
from uuid import uuid4

from ucm.evaluate import normalize_phrase
from ucm.gateway.blocks import StructuredBlockError, extract_structured_block
from ucm.gateway.providers import CompletionRequest, Provider, ENV_MODEL
from ucm.gateway.templates import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
    PromptTemplate,
    load_builtin_templates,
    render_prompt,
)
from ucm.model import (
    ACTOR_ID_PREFIX,
    USECASE_ID_PREFIX,
    Actor,
    ActorKind,
    Association,
    InvalidModelError,
    RequirementsDoc,
    UseCase,
    UseCaseDescription,
    UseCaseModel,
    UseCaseRelation,
    clean_name,
    description_from_dict,
    description_to_dict,
    model_from_dict,
    model_to_dict,
    next_id,
    normalize,
    validate_model,
)
from ucm.plantuml import (
    DEFAULT_BOUNDARY,
    DiagramSource,
    L_ORPHAN_UC,
    LintFinding,
    ParseError,
    Severity,
    lint,
    parse_model,
    render_model,
)

E_EMPTY_REQUIREMENTS = "E-EMPTY-REQUIREMENTS"
E_STAGE_ORDER = "E-STAGE-ORDER"
E_REPAIR_FAILED = "E-REPAIR-FAILED"
E_UNKNOWN_USECASE = "E-UNKNOWN-USECASE"
E_UNKNOWN_TARGET = "E-UNKNOWN-TARGET"
E_EMPTY_NAME = "E-EMPTY-NAME"
E_NO_MODEL = "E-NO-MODEL"

W_EMPTY_STAGE = "W-EMPTY-STAGE"
W_DROPPED_USECASE = "W-DROPPED-USECASE"
W_UNKNOWN_ACTOR_REF = "W-UNKNOWN-ACTOR-REF"
W_DROPPED_ENTRY = "W-DROPPED-ENTRY"
W_EXTRA_ACTOR = "W-EXTRA-ACTOR"
W_EXTRA_USECASE = "W-EXTRA-USECASE"
W_MISSING_ACTOR = "W-MISSING-ACTOR"
W_MISSING_USECASE = "W-MISSING-USECASE"
W_REPAIRED = "W-REPAIRED"
F_ORPHANED = "F-ORPHANED"


class Stage(str, Enum):
    CREATED = "created"
    ACTORS_PROPOSED = "actors_proposed"
    ACTORS_CONFIRMED = "actors_confirmed"
    USECASES_PROPOSED = "usecases_proposed"
    USECASES_CONFIRMED = "usecases_confirmed"
    MODEL_PROPOSED = "model_proposed"
    MODEL_CONFIRMED = "model_confirmed"
    DESCRIPTIONS_DONE = "descriptions_done"


STAGE_ORDER = tuple(Stage)

# Stages from which each generation step may (re-)run.
RUNNABLE_FROM: dict[str, frozenset[Stage]] = {
    "actors": frozenset({Stage.CREATED, Stage.ACTORS_PROPOSED}),
    "usecases": frozenset({Stage.ACTORS_CONFIRMED, Stage.USECASES_PROPOSED}),
    "model": frozenset({Stage.USECASES_CONFIRMED, Stage.MODEL_PROPOSED}),
    "descriptions": frozenset({Stage.MODEL_CONFIRMED, Stage.DESCRIPTIONS_DONE}),
}


class EditKind(str, Enum):
    ADD = "add"
    REMOVE = "remove"
    RENAME = "rename"
    RELINK = "relink"


class PipelineError(Exception):
    """A pipeline failure with a stable code."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class IllegalStageError(PipelineError):
    def __init__(self, message: str):
        super().__init__(E_STAGE_ORDER, message)


class RepairFailedError(PipelineError):
    def __init__(self, message: str, findings: Sequence[LintFinding] = ()):
        self.findings = list(findings)
        super().__init__(E_REPAIR_FAILED, message)


@dataclass
class Edit:
    stage: Stage
    kind: EditKind
    target_id: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage.value,
            "kind": self.kind.value,
            "target_id": self.target_id,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Edit":
        return cls(
            stage=Stage(data["stage"]),
            kind=EditKind(data["kind"]),
            target_id=data.get("target_id"),
            payload=dict(data.get("payload", {})),
        )


@dataclass
class TimingRecord:
    label: str  # actors | usecases | model | descriptions | total
    started_at: datetime
    ended_at: datetime | None = None

    @property
    def minutes(self) -> float | None:
        if self.ended_at is None:
            return None
        return (self.ended_at - self.started_at).total_seconds() / 60.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "started_at": self.started_at.isoformat(),
            "ended_at": self.ended_at.isoformat() if self.ended_at else None,
            "minutes": self.minutes,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TimingRecord":
        return cls(
            label=data["label"],
            started_at=datetime.fromisoformat(data["started_at"]),
            ended_at=datetime.fromisoformat(data["ended_at"]) if data.get("ended_at") else None,
        )


@dataclass
class SessionWarning:
    code: str
    message: str
    stage: Stage
    target_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "message": self.message,
            "stage": self.stage.value,
            "target_id": self.target_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SessionWarning":
        return cls(
            code=data["code"],
            message=data["message"],
            stage=Stage(data["stage"]),
            target_id=data.get("target_id"),
        )


@dataclass
class Session:
    """The pipeline's persistent state for one requirements document."""

    id: str
    requirements: RequirementsDoc
    created_at: datetime
    stage: Stage = Stage.CREATED
    proposed_actors: list[Actor] = field(default_factory=list)
    confirmed_actors: list[Actor] = field(default_factory=list)
    proposed_usecases: list[UseCase] = field(default_factory=list)
    confirmed_usecases: list[UseCase] = field(default_factory=list)
    model_source: str | None = None
    model: UseCaseModel | None = None
    descriptions: list[UseCaseDescription] = field(default_factory=list)
    edit_log: list[Edit] = field(default_factory=list)
    timings: list[TimingRecord] = field(default_factory=list)
    warnings: list[SessionWarning] = field(default_factory=list)

    def add_warning(self, warning: SessionWarning) -> None:
        for existing in self.warnings:
            if (
                existing.code == warning.code
                and existing.target_id == warning.target_id
                and existing.stage == warning.stage
                and existing.message == warning.message
            ):
                return
        self.warnings.append(warning)


def _total_timing(timings: Sequence[TimingRecord]) -> TimingRecord | None:
    closed = [t for t in timings if t.ended_at is not None and t.label != "total"]
    if not closed:
        return None
    total = TimingRecord(
        label="total",
        started_at=min(t.started_at for t in closed),
        ended_at=max(t.ended_at for t in closed),
    )
    return total


def session_to_dict(session: Session) -> dict[str, Any]:
    """Canonical session serialization; appends the derived total timing."""
    from ucm.model import actor_to_dict, usecase_to_dict

    timings = [t.to_dict() for t in session.timings if t.label != "total"]
    total = _total_timing(session.timings)
    if total is not None:
        record = total.to_dict()
        record["minutes"] = sum(
            t.minutes for t in session.timings if t.minutes is not None and t.label != "total"
        )
        timings.append(record)
    return {
        "id": session.id,
        "requirements": {
            "id": session.requirements.id,
            "title": session.requirements.title,
            "text": session.requirements.text,
        },
        "stage": session.stage.value,
        "proposed_actors": [actor_to_dict(a) for a in session.proposed_actors],
        "confirmed_actors": [actor_to_dict(a) for a in session.confirmed_actors],
        "proposed_usecases": [usecase_to_dict(uc) for uc in session.proposed_usecases],
        "confirmed_usecases": [usecase_to_dict(uc) for uc in session.confirmed_usecases],
        "model_source": session.model_source,
        "model": model_to_dict(session.model) if session.model else None,
        "descriptions": [description_to_dict(d) for d in session.descriptions],
        "edit_log": [e.to_dict() for e in session.edit_log],
        "timings": timings,
        "warnings": [w.to_dict() for w in session.warnings],
        "created_at": session.created_at.isoformat(),
    }


def session_from_dict(data: dict[str, Any]) -> Session:
    from ucm.model import actor_from_dict, usecase_from_dict

    return Session(
        id=data["id"],
        requirements=RequirementsDoc(
            id=data["requirements"]["id"],
            title=data["requirements"]["title"],
            text=data["requirements"]["text"],
        ),
        created_at=datetime.fromisoformat(data["created_at"]),
        stage=Stage(data["stage"]),
        proposed_actors=[actor_from_dict(a) for a in data.get("proposed_actors", [])],
        confirmed_actors=[actor_from_dict(a) for a in data.get("confirmed_actors", [])],
        proposed_usecases=[usecase_from_dict(u) for u in data.get("proposed_usecases", [])],
        confirmed_usecases=[usecase_from_dict(u) for u in data.get("confirmed_usecases", [])],
        model_source=data.get("model_source"),
        model=model_from_dict(data["model"]) if data.get("model") else None,
        descriptions=[description_from_dict(d) for d in data.get("descriptions", [])],
        edit_log=[Edit.from_dict(e) for e in data.get("edit_log", [])],
        timings=[
            TimingRecord.from_dict(t)
            for t in data.get("timings", [])
            if t.get("label") != "total"
        ],
        warnings=[SessionWarning.from_dict(w) for w in data.get("warnings", [])],
    )


def session_to_json(session: Session) -> str:
    return json.dumps(session_to_dict(session), indent=2, ensure_ascii=False) + "\n"


_KIND_ALIASES = {
    "human": ActorKind.HUMAN,
    "person": ActorKind.HUMAN,
    "user": ActorKind.HUMAN,
    "external_system": ActorKind.EXTERNAL_SYSTEM,
    "external system": ActorKind.EXTERNAL_SYSTEM,
    "external-system": ActorKind.EXTERNAL_SYSTEM,
    "system": ActorKind.EXTERNAL_SYSTEM,
    "hardware": ActorKind.HARDWARE,
    "device": ActorKind.HARDWARE,
}


def _coerce_kind(value: Any) -> ActorKind:
    if isinstance(value, str):
        return _KIND_ALIASES.get(value.strip().lower(), ActorKind.HUMAN)
    return ActorKind.HUMAN


def _dedupe_key(name: str) -> str:
    norm = normalize_phrase(name)
    return norm if norm else clean_name(name).lower()


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class _LintFailure(Exception):
    def __init__(self, findings: list[LintFinding]):
        self.findings = findings
        detail = "; ".join(f"{f.code} at line {f.line}: {f.message}" for f in findings)
        super().__init__(f"the diagram has lint errors: {detail}")


class Engine:
    """Runs the staged workflow against a completion provider."""

    def __init__(
        self,
        provider: Provider,
        *,
        templates: dict[str, PromptTemplate] | None = None,
        clock: Callable[[], datetime] | None = None,
        session_ids: Callable[[], str] | None = None,
        model_name: str | None = None,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ):
        self.provider = provider
        self.templates = templates if templates is not None else load_builtin_templates()
        self.clock = clock or _utcnow
        self._session_ids = session_ids or (lambda: uuid4().hex[:12])
        self.model_name = model_name or os.environ.get(ENV_MODEL) or "default"
        self.temperature = temperature
        self.max_tokens = max_tokens

    # -- session lifecycle ---------------------------------------------------

    def start_session(self, doc: RequirementsDoc) -> Session:
        """New session in `created`; the stopwatch starts at the first stage run."""
        if not doc.text.strip():
            raise PipelineError(E_EMPTY_REQUIREMENTS, "requirements text is empty")
        return Session(id=self._session_ids(), requirements=doc, created_at=self.clock())

    # -- prompt plumbing -----------------------------------------------------

    def _render(self, template_id: str, variables: dict[str, str]) -> CompletionRequest:
        return render_prompt(
            self.templates[template_id],
            variables,
            model_name=self.model_name,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )

    @staticmethod
    def _corrective_request(request: CompletionRequest, error_text: str) -> CompletionRequest:
        system = request.messages[0][1]
        user = request.messages[-1][1]
        corrected = (
            f"{user}\n\nYour previous reply could not be used: {error_text}\n"
            "Reply again and follow the required output format exactly."
        )
        return replace(request, messages=(("system", system), ("user", corrected)))

    def _record_repair(self, session: Session, stage: Stage, reason: str) -> None:
        session.warnings.append(
            SessionWarning(W_REPAIRED, f"corrective re-prompt issued: {reason}", stage)
        )

    def _complete_structured(
        self,
        session: Session,
        stage: Stage,
        request: CompletionRequest,
        fmt: str,
        check: Callable[[Any], None] | None = None,
    ) -> Any:
        """Complete and extract, with exactly one corrective re-prompt."""

        def attempt(content: str) -> Any:
            payload = extract_structured_block(content, fmt)
            if check is not None:
                check(payload)
            return payload

        first = self.provider.complete(request)
        try:
            return attempt(first.content)
        except StructuredBlockError as error:
            retry = self._corrective_request(request, str(error))
            second = self.provider.complete(retry)
            try:
                payload = attempt(second.content)
            except StructuredBlockError as final:
                raise RepairFailedError(
                    f"reply unusable after one corrective re-prompt: {final}"
                ) from final
            self._record_repair(session, stage, str(error))
            return payload

    def _require_stage(self, session: Session, step: str) -> None:
        allowed = RUNNABLE_FROM[step]
        if session.stage not in allowed:
            expected = ", ".join(sorted(s.value for s in allowed))
            raise IllegalStageError(
                f"cannot run {step} stage at {session.stage.value!r} (needs {expected})"
            )

    def _open_timer(self, session: Session, label: str) -> None:
        for record in session.timings:
            if record.label == label and record.ended_at is None:
                return
        session.timings.append(TimingRecord(label=label, started_at=self.clock()))

    def _close_timer(self, session: Session, label: str) -> None:
        for record in reversed(session.timings):
            if record.label == label and record.ended_at is None:
                record.ended_at = self.clock()
                return

    # -- stage 1: actors -----------------------------------------------------

    def run_actor_stage(self, session: Session) -> list[Actor]:
        """Propose actors from the requirements text, deduped by normalized name."""
        self._require_stage(session, "actors")
        self._open_timer(session, "actors")
        request = self._render(
            "actor_extraction", {"requirements": session.requirements.text}
        )
        payload = self._complete_structured(
            session, Stage.ACTORS_PROPOSED, request, "json", check=_check_actor_payload
        )

        actors: list[Actor] = []
        seen: set[str] = set()
        taken: set[str] = set()
        for entry in payload:
            name = clean_name(entry if isinstance(entry, str) else entry.get("name", ""))
            if not name:
                session.add_warning(
                    SessionWarning(
                        W_DROPPED_ENTRY,
                        "actor entry with an empty name was dropped",
                        Stage.ACTORS_PROPOSED,
                    )
                )
                continue
            key = _dedupe_key(name)
            if key in seen:
                continue
            seen.add(key)
            actor_id = next_id(ACTOR_ID_PREFIX, taken)
            taken.add(actor_id)
            kind = _coerce_kind(entry.get("kind")) if isinstance(entry, dict) else ActorKind.HUMAN
            actors.append(Actor(id=actor_id, name=name, kind=kind))
        if not actors:
            session.add_warning(
                SessionWarning(
                    W_EMPTY_STAGE, "the actor stage proposed nothing", Stage.ACTORS_PROPOSED
                )
            )
        session.proposed_actors = actors
        session.stage = Stage.ACTORS_PROPOSED
        return actors

    # -- stage 2: use cases --------------------------------------------------

    def run_usecase_stage(self, session: Session) -> list[UseCase]:
        """Propose use cases; entries tied only to unknown actors are dropped."""
        self._require_stage(session, "usecases")
        self._open_timer(session, "usecases")
        actor_lines = "\n".join(f"- {actor.name}" for actor in session.confirmed_actors)
        request = self._render(
            "usecase_extraction",
            {"actors": actor_lines, "requirements": session.requirements.text},
        )
        payload = self._complete_structured(
            session, Stage.USECASES_PROPOSED, request, "json", check=_check_usecase_payload
        )

        by_norm: dict[str, str] = {}
        for actor in session.confirmed_actors:
            by_norm.setdefault(_dedupe_key(actor.name), actor.id)

        proposals: dict[str, UseCase] = {}
        taken: set[str] = set()
        for entry in payload:
            title = clean_name(entry.get("title", ""))
            if not title:
                session.add_warning(
                    SessionWarning(
                        W_DROPPED_ENTRY,
                        "use case entry with an empty title was dropped",
                        Stage.USECASES_PROPOSED,
                    )
                )
                continue
            linked: list[str] = []
            unknown: list[str] = []
            for actor_name in entry.get("actors", []):
                actor_id = by_norm.get(_dedupe_key(str(actor_name)))
                if actor_id is None:
                    unknown.append(str(actor_name))
                elif actor_id not in linked:
                    linked.append(actor_id)
            if unknown:
                session.add_warning(
                    SessionWarning(
                        W_UNKNOWN_ACTOR_REF,
                        f"use case {title!r} references unknown actors: {', '.join(unknown)}",
                        Stage.USECASES_PROPOSED,
                    )
                )
            if not linked:
                session.add_warning(
                    SessionWarning(
                        W_DROPPED_USECASE,
                        f"use case {title!r} references no confirmed actor and was dropped",
                        Stage.USECASES_PROPOSED,
                    )
                )
                continue
            key = _dedupe_key(title)
            if key in proposals:
                existing = proposals[key]
                merged = list(existing.actor_ids) + [
                    a for a in linked if a not in existing.actor_ids
                ]
                proposals[key] = replace(existing, actor_ids=tuple(merged))
                continue
            usecase_id = next_id(USECASE_ID_PREFIX, taken)
            taken.add(usecase_id)
            proposals[key] = UseCase(id=usecase_id, title=title, actor_ids=tuple(linked))

        usecases = list(proposals.values())
        if not usecases:
            session.add_warning(
                SessionWarning(
                    W_EMPTY_STAGE,
                    "the use case stage proposed nothing",
                    Stage.USECASES_PROPOSED,
                )
            )
        session.proposed_usecases = usecases
        session.stage = Stage.USECASES_PROPOSED
        return usecases

    # -- stage 3: model ------------------------------------------------------

    def run_model_stage(self, session: Session) -> tuple[DiagramSource, UseCaseModel]:
        """Generate the diagram, lint/parse it, and reconcile to confirmed ids."""
        self._require_stage(session, "model")
        self._open_timer(session, "model")
        system_name = clean_name(session.requirements.title) or DEFAULT_BOUNDARY
        actor_names = {a.id: a.name for a in session.confirmed_actors}
        actor_lines = "\n".join(
            f"- {a.name} ({a.kind.value})" for a in session.confirmed_actors
        )
        usecase_lines = "\n".join(
            "- {} (actors: {})".format(
                uc.title,
                ", ".join(actor_names.get(aid, aid) for aid in uc.actor_ids) or "none",
            )
            for uc in session.confirmed_usecases
        )
        request = self._render(
            "model_generation",
            {
                "system_name": system_name,
                "actors": actor_lines,
                "usecases": usecase_lines,
            },
        )

        def attempt(content: str) -> tuple[str, UseCaseModel, list[LintFinding]]:
            source = extract_structured_block(content, "text")
            findings = lint(source)
            errors = [f for f in findings if f.severity is Severity.ERROR]
            if errors:
                raise _LintFailure(errors)
            return source, parse_model(source), findings

        first = self.provider.complete(request)
        try:
            source, parsed, findings = attempt(first.content)
        except (StructuredBlockError, ParseError, _LintFailure) as error:
            retry = self._corrective_request(request, str(error))
            second = self.provider.complete(retry)
            try:
                source, parsed, findings = attempt(second.content)
            except _LintFailure as final:
                raise RepairFailedError(str(final), findings=final.findings) from final
            except StructuredBlockError as final:
                raise RepairFailedError(
                    f"reply unusable after one corrective re-prompt: {final}"
                ) from final
            # A second-attempt ParseError propagates to the caller.
            self._record_repair(session, Stage.MODEL_PROPOSED, str(error))

        for finding in findings:
            if finding.code == L_ORPHAN_UC:
                session.add_warning(
                    SessionWarning(finding.code, finding.message, Stage.MODEL_PROPOSED)
                )

        model = self._reconcile(session, parsed)
        session.model_source = source
        session.model = model
        session.stage = Stage.MODEL_PROPOSED
        return DiagramSource(source), model

    def _reconcile(self, session: Session, parsed: UseCaseModel) -> UseCaseModel:
        """Map generated elements onto confirmed ids by normalized-name equality.

        Unmatched generated elements are kept under fresh ids and flagged;
        confirmed elements the generator omitted are flagged as missing.
        """
        confirmed_actor_by_norm: dict[str, Actor] = {}
        for actor in session.confirmed_actors:
            confirmed_actor_by_norm.setdefault(_dedupe_key(actor.name), actor)
        confirmed_uc_by_norm: dict[str, UseCase] = {}
        for usecase in session.confirmed_usecases:
            confirmed_uc_by_norm.setdefault(_dedupe_key(usecase.title), usecase)

        id_map: dict[str, str] = {}
        final_actors: list[Actor] = []
        final_actor_ids: set[str] = set()
        matched_actor_ids: set[str] = set()
        for parsed_actor in parsed.actors:
            confirmed = confirmed_actor_by_norm.get(_dedupe_key(parsed_actor.name))
            if confirmed is not None:
                id_map[parsed_actor.id] = confirmed.id
                matched_actor_ids.add(confirmed.id)
                if confirmed.id not in final_actor_ids:
                    final_actors.append(confirmed)
                    final_actor_ids.add(confirmed.id)
            else:
                new_id = next_id(
                    ACTOR_ID_PREFIX,
                    final_actor_ids | {a.id for a in session.confirmed_actors},
                )
                id_map[parsed_actor.id] = new_id
                final_actors.append(replace(parsed_actor, id=new_id))
                final_actor_ids.add(new_id)
                session.add_warning(
                    SessionWarning(
                        W_EXTRA_ACTOR,
                        f"generated actor {parsed_actor.name!r} is not confirmed",
                        Stage.MODEL_PROPOSED,
                        target_id=new_id,
                    )
                )
        for actor in session.confirmed_actors:
            if actor.id not in matched_actor_ids:
                session.add_warning(
                    SessionWarning(
                        W_MISSING_ACTOR,
                        f"confirmed actor {actor.name!r} is missing from the diagram",
                        Stage.MODEL_PROPOSED,
                        target_id=actor.id,
                    )
                )

        final_usecases: list[UseCase] = []
        final_uc_ids: set[str] = set()
        matched_uc_ids: set[str] = set()
        for parsed_uc in parsed.use_cases:
            confirmed = confirmed_uc_by_norm.get(_dedupe_key(parsed_uc.title))
            if confirmed is not None:
                id_map[parsed_uc.id] = confirmed.id
                matched_uc_ids.add(confirmed.id)
                if confirmed.id not in final_uc_ids:
                    final_usecases.append(replace(confirmed, actor_ids=()))
                    final_uc_ids.add(confirmed.id)
            else:
                new_id = next_id(
                    USECASE_ID_PREFIX,
                    final_uc_ids | {uc.id for uc in session.confirmed_usecases},
                )
                id_map[parsed_uc.id] = new_id
                final_usecases.append(UseCase(id=new_id, title=parsed_uc.title))
                final_uc_ids.add(new_id)
                session.add_warning(
                    SessionWarning(
                        W_EXTRA_USECASE,
                        f"generated use case {parsed_uc.title!r} is not confirmed",
                        Stage.MODEL_PROPOSED,
                        target_id=new_id,
                    )
                )
        for usecase in session.confirmed_usecases:
            if usecase.id not in matched_uc_ids:
                session.add_warning(
                    SessionWarning(
                        W_MISSING_USECASE,
                        f"confirmed use case {usecase.title!r} is missing from the diagram",
                        Stage.MODEL_PROPOSED,
                        target_id=usecase.id,
                    )
                )

        associations = tuple(
            Association(id_map[edge.actor_id], id_map[edge.usecase_id])
            for edge in parsed.associations
        )
        relations = tuple(
            UseCaseRelation(id_map[rel.from_id], id_map[rel.to_id], rel.kind)
            for rel in parsed.relations
        )
        return normalize(
            UseCaseModel(
                system_name=parsed.system_name,
                actors=tuple(final_actors),
                use_cases=tuple(final_usecases),
                associations=associations,
                relations=relations,
            )
        )

    # -- stage 4: descriptions -------------------------------------------------

    def run_description_stage(
        self, session: Session, usecase_ids: Sequence[str]
    ) -> list[UseCaseDescription]:
        """One description per requested use case id; main flow must be non-empty."""
        self._require_stage(session, "descriptions")
        assert session.model is not None
        for usecase_id in usecase_ids:
            if session.model.usecase_by_id(usecase_id) is None:
                raise PipelineError(
                    E_UNKNOWN_USECASE, f"use case {usecase_id!r} is not in the model"
                )
        self._open_timer(session, "descriptions")

        results: list[UseCaseDescription] = []
        for usecase_id in usecase_ids:
            usecase = session.model.usecase_by_id(usecase_id)
            assert usecase is not None
            linked = [
                actor.name
                for actor_id in usecase.actor_ids
                for actor in [session.model.actor_by_id(actor_id)]
                if actor is not None
            ]
            request = self._render(
                "description_generation",
                {
                    "usecase": usecase.title,
                    "actors": ", ".join(linked) or "none",
                    "requirements": session.requirements.text,
                },
            )
            payload = self._complete_structured(
                session, Stage.DESCRIPTIONS_DONE, request, "json", check=_check_description_payload
            )
            results.append(
                UseCaseDescription(
                    usecase_id=usecase_id,
                    preconditions=tuple(str(s) for s in payload.get("preconditions", [])),
                    main_flow=tuple(str(s) for s in payload["main_flow"]),
                    alternative_flows=tuple(
                        (str(flow["label"]), tuple(str(s) for s in flow["steps"]))
                        for flow in payload.get("alternative_flows", [])
                    ),
                    postconditions=tuple(str(s) for s in payload.get("postconditions", [])),
                )
            )

        kept = [d for d in session.descriptions if d.usecase_id not in set(usecase_ids)]
        session.descriptions = kept + results
        session.stage = Stage.DESCRIPTIONS_DONE
        self._close_timer(session, "descriptions")
        return results

    # -- edits and confirmation ------------------------------------------------

    def apply_edits(self, session: Session, edits: Sequence[Edit]) -> Session:
        """Apply edits in order, atomically: on failure the session is untouched."""
        working = copy.deepcopy(session)
        for edit in edits:
            self._apply_edit(working, edit)
        self._flag_orphans(working)
        session.__dict__.update(working.__dict__)
        return session

    def _editable_scope(
        self, session: Session, edit: Edit
    ) -> tuple[list[Actor] | None, list[UseCase] | None]:
        if session.stage != edit.stage:
            raise IllegalStageError(
                f"edit targets stage {edit.stage.value!r} but session is at"
                f" {session.stage.value!r}"
            )
        if session.stage == Stage.ACTORS_PROPOSED:
            return session.proposed_actors, None
        if session.stage == Stage.ACTORS_CONFIRMED:
            return session.confirmed_actors, None
        if session.stage == Stage.USECASES_PROPOSED:
            return session.confirmed_actors, session.proposed_usecases
        if session.stage == Stage.USECASES_CONFIRMED:
            return session.confirmed_actors, session.confirmed_usecases
        if session.stage in (Stage.MODEL_PROPOSED, Stage.MODEL_CONFIRMED):
            return None, None  # model edits handled separately
        raise IllegalStageError(
            f"stage {session.stage.value!r} accepts no edits"
        )

    def _apply_edit(self, session: Session, edit: Edit) -> None:
        actors, usecases = self._editable_scope(session, edit)
        if session.stage in (Stage.MODEL_PROPOSED, Stage.MODEL_CONFIRMED):
            self._apply_model_edit(session, edit)
        elif edit.kind is EditKind.ADD:
            self._apply_add(session, edit, actors, usecases)
        elif edit.kind is EditKind.REMOVE:
            self._apply_remove(session, edit, actors, usecases)
        elif edit.kind is EditKind.RENAME:
            self._apply_rename(session, edit, actors, usecases)
        elif edit.kind is EditKind.RELINK:
            self._apply_relink(session, edit, actors, usecases)
        session.edit_log.append(edit)

    def _apply_add(
        self,
        session: Session,
        edit: Edit,
        actors: list[Actor] | None,
        usecases: list[UseCase] | None,
    ) -> None:
        element_type = edit.payload.get("type", "actor" if usecases is None else "usecase")
        if element_type == "actor":
            if actors is None:
                raise PipelineError(E_UNKNOWN_TARGET, "no actor list is editable here")
            name = clean_name(edit.payload.get("name", ""))
            if not name:
                raise PipelineError(E_EMPTY_NAME, "added actor needs a non-empty name")
            new_id = next_id(ACTOR_ID_PREFIX, [a.id for a in actors])
            actors.append(Actor(id=new_id, name=name, kind=_coerce_kind(edit.payload.get("kind"))))
            edit.target_id = new_id
        elif element_type == "usecase":
            if usecases is None:
                raise PipelineError(E_UNKNOWN_TARGET, "no use case list is editable here")
            title = clean_name(edit.payload.get("title", edit.payload.get("name", "")))
            if not title:
                raise PipelineError(E_EMPTY_NAME, "added use case needs a non-empty title")
            known = {a.id for a in (actors or [])}
            links = list(edit.payload.get("actor_ids", []))
            for actor_id in links:
                if actor_id not in known:
                    raise PipelineError(
                        E_UNKNOWN_TARGET, f"unknown actor id {actor_id!r} in relink payload"
                    )
            new_id = next_id(USECASE_ID_PREFIX, [uc.id for uc in usecases])
            usecases.append(UseCase(id=new_id, title=title, actor_ids=tuple(links)))
            edit.target_id = new_id
        else:
            raise PipelineError(E_UNKNOWN_TARGET, f"unknown element type {element_type!r}")

    def _apply_remove(
        self,
        session: Session,
        edit: Edit,
        actors: list[Actor] | None,
        usecases: list[UseCase] | None,
    ) -> None:
        target = edit.target_id
        if actors is not None:
            for i, actor in enumerate(actors):
                if actor.id == target:
                    del actors[i]
                    self._strip_actor_links(session, target)
                    return
        if usecases is not None:
            for i, usecase in enumerate(usecases):
                if usecase.id == target:
                    del usecases[i]
                    return
        raise PipelineError(E_UNKNOWN_TARGET, f"no element with id {target!r}")

    def _strip_actor_links(self, session: Session, actor_id: str) -> None:
        for collection in (session.proposed_usecases, session.confirmed_usecases):
            for i, usecase in enumerate(collection):
                if actor_id in usecase.actor_ids:
                    collection[i] = replace(
                        usecase,
                        actor_ids=tuple(a for a in usecase.actor_ids if a != actor_id),
                    )

    def _apply_rename(
        self,
        session: Session,
        edit: Edit,
        actors: list[Actor] | None,
        usecases: list[UseCase] | None,
    ) -> None:
        new_name = clean_name(edit.payload.get("name", edit.payload.get("title", "")))
        if not new_name:
            raise PipelineError(E_EMPTY_NAME, "rename needs a non-empty name")
        target = edit.target_id
        if actors is not None:
            for i, actor in enumerate(actors):
                if actor.id == target:
                    actors[i] = replace(actor, name=new_name)
                    return
        if usecases is not None:
            for i, usecase in enumerate(usecases):
                if usecase.id == target:
                    usecases[i] = replace(usecase, title=new_name)
                    return
        raise PipelineError(E_UNKNOWN_TARGET, f"no element with id {target!r}")

    def _apply_relink(
        self,
        session: Session,
        edit: Edit,
        actors: list[Actor] | None,
        usecases: list[UseCase] | None,
    ) -> None:
        if usecases is None:
            raise PipelineError(E_UNKNOWN_TARGET, "relink applies to use cases")
        known = {a.id for a in (actors or [])}
        links = list(edit.payload.get("actor_ids", []))
        for actor_id in links:
            if actor_id not in known:
                raise PipelineError(
                    E_UNKNOWN_TARGET, f"unknown actor id {actor_id!r} in relink payload"
                )
        target = edit.target_id
        for i, usecase in enumerate(usecases):
            if usecase.id == target:
                usecases[i] = replace(usecase, actor_ids=tuple(dict.fromkeys(links)))
                return
        raise PipelineError(E_UNKNOWN_TARGET, f"no use case with id {target!r}")

    def _apply_model_edit(self, session: Session, edit: Edit) -> None:
        assert session.model is not None
        model = session.model
        actors = list(model.actors)
        usecases = list(model.use_cases)
        associations = list(model.associations)
        relations = list(model.relations)
        target = edit.target_id

        if edit.kind is EditKind.ADD:
            element_type = edit.payload.get("type", "actor")
            if element_type == "actor":
                name = clean_name(edit.payload.get("name", ""))
                if not name:
                    raise PipelineError(E_EMPTY_NAME, "added actor needs a non-empty name")
                new_id = next_id(ACTOR_ID_PREFIX, [a.id for a in actors])
                actors.append(
                    Actor(id=new_id, name=name, kind=_coerce_kind(edit.payload.get("kind")))
                )
                edit.target_id = new_id
            else:
                title = clean_name(edit.payload.get("title", edit.payload.get("name", "")))
                if not title:
                    raise PipelineError(E_EMPTY_NAME, "added use case needs a non-empty title")
                new_id = next_id(USECASE_ID_PREFIX, [uc.id for uc in usecases])
                usecases.append(UseCase(id=new_id, title=title))
                known = {a.id for a in actors}
                for actor_id in edit.payload.get("actor_ids", []):
                    if actor_id not in known:
                        raise PipelineError(
                            E_UNKNOWN_TARGET, f"unknown actor id {actor_id!r}"
                        )
                    associations.append(Association(actor_id, new_id))
                edit.target_id = new_id
        elif edit.kind is EditKind.REMOVE:
            if any(a.id == target for a in actors):
                actors = [a for a in actors if a.id != target]
                associations = [e for e in associations if e.actor_id != target]
            elif any(uc.id == target for uc in usecases):
                usecases = [uc for uc in usecases if uc.id != target]
                associations = [e for e in associations if e.usecase_id != target]
                relations = [
                    r for r in relations if target not in (r.from_id, r.to_id)
                ]
                session.descriptions = [
                    d for d in session.descriptions if d.usecase_id != target
                ]
            else:
                raise PipelineError(E_UNKNOWN_TARGET, f"no element with id {target!r}")
        elif edit.kind is EditKind.RENAME:
            new_name = clean_name(edit.payload.get("name", edit.payload.get("title", "")))
            if not new_name:
                raise PipelineError(E_EMPTY_NAME, "rename needs a non-empty name")
            renamed = False
            actors = [
                replace(a, name=new_name) if a.id == target else a for a in actors
            ]
            renamed = renamed or any(a.id == target for a in actors)
            usecases = [
                replace(uc, title=new_name) if uc.id == target else uc for uc in usecases
            ]
            renamed = renamed or any(uc.id == target for uc in usecases)
            if not renamed:
                raise PipelineError(E_UNKNOWN_TARGET, f"no element with id {target!r}")
        elif edit.kind is EditKind.RELINK:
            if not any(uc.id == target for uc in usecases):
                raise PipelineError(E_UNKNOWN_TARGET, f"no use case with id {target!r}")
            known = {a.id for a in actors}
            links = list(dict.fromkeys(edit.payload.get("actor_ids", [])))
            for actor_id in links:
                if actor_id not in known:
                    raise PipelineError(E_UNKNOWN_TARGET, f"unknown actor id {actor_id!r}")
            associations = [e for e in associations if e.usecase_id != target]
            associations.extend(Association(actor_id, target) for actor_id in links)

        session.model = normalize(
            UseCaseModel(
                system_name=model.system_name,
                actors=tuple(actors),
                use_cases=tuple(usecases),
                associations=tuple(associations),
                relations=tuple(relations),
            )
        )

    def _flag_orphans(self, session: Session) -> None:
        known = {a.id for a in session.confirmed_actors}
        scopes: list[tuple[list[UseCase], set[str]]] = []
        if session.stage == Stage.USECASES_PROPOSED:
            scopes.append((session.proposed_usecases, known))
        elif session.stage == Stage.USECASES_CONFIRMED:
            scopes.append((session.confirmed_usecases, known))
        elif session.stage in (Stage.MODEL_PROPOSED, Stage.MODEL_CONFIRMED):
            if session.model is not None:
                scopes.append(
                    (list(session.model.use_cases), {a.id for a in session.model.actors})
                )
        for usecases, actor_ids in scopes:
            for usecase in usecases:
                if not any(aid in actor_ids for aid in usecase.actor_ids):
                    session.add_warning(
                        SessionWarning(
                            F_ORPHANED,
                            f"use case {usecase.title!r} is left with no actor",
                            session.stage,
                            target_id=usecase.id,
                        )
                    )

    def confirm(self, session: Session) -> Session:
        """Advance *_proposed to *_confirmed and stop that stage's stopwatch."""
        if session.stage == Stage.ACTORS_PROPOSED:
            session.confirmed_actors = list(session.proposed_actors)
            session.stage = Stage.ACTORS_CONFIRMED
            self._close_timer(session, "actors")
        elif session.stage == Stage.USECASES_PROPOSED:
            known = {a.id for a in session.confirmed_actors}
            confirmed: list[UseCase] = []
            for usecase in session.proposed_usecases:
                links = tuple(aid for aid in usecase.actor_ids if aid in known)
                if not links:
                    session.add_warning(
                        SessionWarning(
                            F_ORPHANED,
                            f"use case {usecase.title!r} is left with no actor",
                            Stage.USECASES_CONFIRMED,
                            target_id=usecase.id,
                        )
                    )
                confirmed.append(replace(usecase, actor_ids=links))
            session.confirmed_usecases = confirmed
            session.stage = Stage.USECASES_CONFIRMED
            self._close_timer(session, "usecases")
        elif session.stage == Stage.MODEL_PROPOSED:
            assert session.model is not None
            violations = validate_model(session.model)
            if violations:
                raise InvalidModelError(violations)
            session.stage = Stage.MODEL_CONFIRMED
            self._close_timer(session, "model")
        else:
            raise IllegalStageError(
                f"nothing to confirm at stage {session.stage.value!r}"
            )
        return session

    # -- export ----------------------------------------------------------------

    def export(self, session: Session, fmt: str) -> str:
        """Session as canonical JSON, or the confirmed model as .puml text."""
        if fmt == "json":
            return session_to_json(session)
        if fmt == "puml":
            if session.model is None:
                raise PipelineError(E_NO_MODEL, "the session has no model yet")
            return render_model(session.model).text
        raise ValueError(f"unknown export format {fmt!r}")


# ---------------------------------------------------------------------------
# Payload shape checks (semantic "malformed" conditions trigger the retry)
# ---------------------------------------------------------------------------

def _check_actor_payload(payload: Any) -> None:
    if not isinstance(payload, list):
        raise StructuredBlockError("E-MALFORMED", "expected a JSON array of actors")
    for entry in payload:
        if isinstance(entry, str):
            continue
        if isinstance(entry, dict) and isinstance(entry.get("name"), str):
            continue
        raise StructuredBlockError(
            "E-MALFORMED", 'each actor must be a string or an object with a "name"'
        )


def _check_usecase_payload(payload: Any) -> None:
    if not isinstance(payload, list):
        raise StructuredBlockError("E-MALFORMED", "expected a JSON array of use cases")
    for entry in payload:
        if not isinstance(entry, dict) or not isinstance(entry.get("title"), str):
            raise StructuredBlockError(
                "E-MALFORMED", 'each use case must be an object with a "title"'
            )
        actors = entry.get("actors", [])
        if not isinstance(actors, list):
            raise StructuredBlockError("E-MALFORMED", '"actors" must be an array of names')


def _check_description_payload(payload: Any) -> None:
    if not isinstance(payload, dict):
        raise StructuredBlockError("E-MALFORMED", "expected a JSON object")
    main_flow = payload.get("main_flow")
    if not isinstance(main_flow, list) or not main_flow:
        raise StructuredBlockError("E-MALFORMED", '"main_flow" must be a non-empty array')
    for flow in payload.get("alternative_flows", []):
        if (
            not isinstance(flow, dict)
            or not isinstance(flow.get("label"), str)
            or not isinstance(flow.get("steps"), list)
        ):
            raise StructuredBlockError(
                "E-MALFORMED",
                'each alternative flow must be {"label": .., "steps": [..]}',
            )
