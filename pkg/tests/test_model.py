"""Core model validation, normalization, and serialization."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from ucm.model import (
    Actor,
    Association,
    InvalidModelError,
    UseCase,
    UseCaseModel,
    UseCaseRelation,
    clean_name,
    model_from_json,
    model_to_json,
    next_id,
    normalize,
    validate_model,
)


def codes(violations):
    return [v.code for v in violations]


class TestValidate:
    def test_empty_model_is_valid(self):
        assert validate_model(UseCaseModel(system_name="S")) == []

    def test_association_to_unknown_actor(self):
        model = UseCaseModel(
            system_name="S",
            use_cases=(UseCase("UC1", "Do"),),
            associations=(Association("A9", "UC1"),),
        )
        assert codes(validate_model(model)) == ["E-REF-ACTOR"]

    def test_duplicate_usecase_id(self):
        model = UseCaseModel(
            system_name="S",
            use_cases=(UseCase("UC1", "One"), UseCase("UC1", "Two")),
        )
        assert "E-DUP-ID" in codes(validate_model(model))

    def test_id_shared_between_actor_and_usecase(self):
        model = UseCaseModel(
            system_name="S",
            actors=(Actor("X", "Someone"),),
            use_cases=(UseCase("X", "Do"),),
        )
        assert "E-DUP-ID" in codes(validate_model(model))

    def test_empty_names_flagged(self):
        model = UseCaseModel(
            system_name="  ",
            actors=(Actor("A1", " \t"),),
            use_cases=(UseCase("UC1", ""),),
        )
        assert codes(validate_model(model)).count("E-EMPTY-NAME") == 3

    def test_self_relation_flagged(self):
        model = UseCaseModel(
            system_name="S",
            use_cases=(UseCase("UC1", "Do"),),
            relations=(UseCaseRelation("UC1", "UC1", "include"),),
        )
        assert "E-SELF-REL" in codes(validate_model(model))

    def test_span_bounds_checked_against_text(self):
        model = UseCaseModel(
            system_name="S",
            actors=(Actor("A1", "Clerk", source_spans=((0, 10),)),),
        )
        assert validate_model(model, requirements_text="0123456789") == []
        assert codes(validate_model(model, requirements_text="short")) == ["E-SPAN"]
        negative = UseCaseModel(
            system_name="S", actors=(Actor("A1", "Clerk", source_spans=((-1, 3),)),)
        )
        assert codes(validate_model(negative)) == ["E-SPAN"]

    def test_confirmed_mode_requires_linked_usecases(self):
        model = UseCaseModel(system_name="S", use_cases=(UseCase("UC1", "Do"),))
        assert validate_model(model) == []
        assert codes(validate_model(model, confirmed=True)) == ["E-UNLINKED-UC"]


class TestNormalize:
    def test_sorts_and_trims_actors(self):
        model = UseCaseModel(
            system_name=" S ",
            actors=(Actor("A1", "Clerk "), Actor("A2", " Admin")),
        )
        result = normalize(model)
        assert [a.name for a in result.actors] == ["Admin", "Clerk"]
        assert result.system_name == "S"

    def test_duplicate_edge_removed(self):
        model = UseCaseModel(
            system_name="S",
            actors=(Actor("A1", "Clerk"),),
            use_cases=(UseCase("UC1", "File"),),
            associations=(Association("A1", "UC1"), Association("A1", "UC1")),
        )
        assert len(normalize(model).associations) == 1

    def test_actor_links_follow_associations(self):
        model = UseCaseModel(
            system_name="S",
            actors=(Actor("A1", "Clerk"), Actor("A2", "Admin")),
            use_cases=(UseCase("UC1", "File", actor_ids=("A2",)),),
            associations=(Association("A1", "UC1"),),
        )
        assert normalize(model).use_cases[0].actor_ids == ("A1",)

    def test_rejects_unrepairable_model(self):
        model = UseCaseModel(
            system_name="S",
            associations=(Association("A1", "UC1"),),
        )
        with pytest.raises(InvalidModelError) as exc:
            normalize(model)
        assert {v.code for v in exc.value.violations} == {"E-REF-ACTOR", "E-REF-USECASE"}


@st.composite
def models(draw):
    rng = random.Random(draw(st.integers(0, 2**32 - 1)))
    return random_model(rng)


@settings(max_examples=150, deadline=None)
@given(models())
def test_normalize_idempotent(model):
    once = normalize(model)
    assert normalize(once) == once


@settings(max_examples=150, deadline=None)
@given(models())
def test_normalize_preserves_elements(model):
    result = normalize(model)
    assert sorted((a.id, clean_name(a.name)) for a in model.actors) == sorted(
        (a.id, a.name) for a in result.actors
    )
    assert sorted((u.id, clean_name(u.title)) for u in model.use_cases) == sorted(
        (u.id, u.title) for u in result.use_cases
    )
    assert set(model.associations) == set(result.associations)
    assert set(model.relations) == set(result.relations)


@settings(max_examples=150, deadline=None)
@given(models())
def test_normalize_of_valid_stays_valid(model):
    if validate_model(model) == []:
        assert validate_model(normalize(model)) == []


@settings(max_examples=100, deadline=None)
@given(models())
def test_json_round_trip(model):
    canonical = normalize(model)
    assert normalize(model_from_json(model_to_json(model))) == canonical


def test_next_id_skips_taken():
    assert next_id("A", []) == "A1"
    assert next_id("A", ["A1", "A7", "UC3"]) == "A8"
    assert next_id("UC", ["A1", "UC2"]) == "UC3"
