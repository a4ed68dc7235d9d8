"""Shared fixtures: deterministic engines, sample models, random model generator."""

from __future__ import annotations

import random
import string
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

import pytest

from ucm.gateway.providers import ScriptedProvider
from ucm.model import (
    Actor,
    ActorKind,
    Association,
    RelationKind,
    RequirementsDoc,
    UseCase,
    UseCaseModel,
    UseCaseRelation,
    clean_name,
)
from ucm.pipeline import Engine

FIXTURES = Path(__file__).parent / "fixtures"
REPLAY_DIR = FIXTURES / "replay"
SESSION_TITLE = "Library Lending System"

_NAME_CHARS = string.ascii_letters + string.digits + "  \"'()&-_.,:"


def bundled_requirements_text() -> str:
    return (resources.files("ucm") / "data" / "library_requirements.txt").read_text("utf-8")


def stepping_clock(start: datetime | None = None, step_seconds: float = 30.0):
    """A deterministic clock advancing by a fixed step per call."""
    state = {"now": start or datetime(2025, 1, 1, tzinfo=timezone.utc)}

    def clock() -> datetime:
        state["now"] = state["now"] + timedelta(seconds=step_seconds)
        return state["now"]

    return clock


def sequential_ids(prefix: str = "sess"):
    counter = {"n": 0}

    def factory() -> str:
        counter["n"] += 1
        return f"{prefix}{counter['n']}"

    return factory


def make_engine(responses=(), **kwargs) -> tuple[Engine, ScriptedProvider]:
    provider = ScriptedProvider(responses)
    kwargs.setdefault("clock", stepping_clock())
    kwargs.setdefault("session_ids", sequential_ids())
    kwargs.setdefault("model_name", "default")
    return Engine(provider, **kwargs), provider


@pytest.fixture
def shop_model() -> UseCaseModel:
    return UseCaseModel(
        system_name="Shop",
        actors=(
            Actor("A1", "Customer"),
            Actor("A2", "Payment Gateway", ActorKind.EXTERNAL_SYSTEM),
        ),
        use_cases=(
            UseCase("UC1", "Place Order"),
            UseCase("UC2", "Track Shipment"),
        ),
        associations=(
            Association("A1", "UC1"),
            Association("A1", "UC2"),
            Association("A2", "UC1"),
        ),
        relations=(UseCaseRelation("UC1", "UC2", RelationKind.INCLUDE),),
    )


@pytest.fixture
def requirements_doc() -> RequirementsDoc:
    return RequirementsDoc(id="library", title=SESSION_TITLE, text=bundled_requirements_text())


def random_name(rng: random.Random, max_len: int = 20) -> str:
    while True:
        candidate = "".join(
            rng.choice(_NAME_CHARS) for _ in range(rng.randint(1, max_len))
        )
        if clean_name(candidate):
            return candidate


def random_model(rng: random.Random, require_associations: bool = False) -> UseCaseModel:
    """A structurally valid random model; names exercise quotes and whitespace."""
    n_actors = rng.randint(1 if require_associations else 0, 5)
    n_usecases = rng.randint(1 if require_associations else 0, 6)
    actors = tuple(
        Actor(
            f"A{i + 1}",
            random_name(rng),
            rng.choice(list(ActorKind)),
        )
        for i in range(n_actors)
    )
    usecases = tuple(UseCase(f"UC{i + 1}", random_name(rng)) for i in range(n_usecases))

    associations: list[Association] = []
    if actors and usecases:
        if require_associations:
            for usecase in usecases:
                actor = rng.choice(actors)
                associations.append(Association(actor.id, usecase.id))
        pairs = [(a.id, u.id) for a in actors for u in usecases]
        for pair in rng.sample(pairs, k=rng.randint(0, len(pairs))):
            associations.append(Association(*pair))
    unique = list(dict.fromkeys(associations))

    relations: list[UseCaseRelation] = []
    if len(usecases) >= 2:
        for _ in range(rng.randint(0, 3)):
            from_uc, to_uc = rng.sample(usecases, 2)
            relations.append(
                UseCaseRelation(from_uc.id, to_uc.id, rng.choice(list(RelationKind)))
            )
    unique_relations = list(dict.fromkeys(relations))

    return UseCaseModel(
        system_name=random_name(rng),
        actors=actors,
        use_cases=usecases,
        associations=tuple(unique),
        relations=tuple(unique_relations),
    )
