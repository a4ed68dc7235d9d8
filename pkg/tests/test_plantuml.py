"""Renderer grammar, tolerant parsing, lint rules, and the round-trip property."""

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
    UseCaseModel,
    normalize,
)
from ucm.plantuml import (
    DiagramSource,
    ParseError,
    Severity,
    has_errors,
    lint,
    parse_model,
    render_model,
)


class TestRender:
    def test_empty_model(self):
        src = render_model(UseCaseModel(system_name="S")).text
        assert src == '@startuml\nleft to right direction\nrectangle "S" {\n}\n@enduml\n'

    def test_single_association(self, shop_model):
        src = render_model(shop_model).text
        assert 'actor "Customer" as A1' in src
        assert 'actor "Payment Gateway" as A2 <<external_system>>' in src
        assert '  usecase "Place Order" as UC1' in src
        assert "A1 --> UC1" in src
        assert "UC1 ..> UC2 : <<include>>" in src
        assert src.endswith("@enduml\n")

    def test_quote_escaping(self):
        model = UseCaseModel(
            system_name="S",
            actors=(Actor("A1", 'Say "Hi" Bot'),),
        )
        src = render_model(model).text
        assert 'actor "Say ""Hi"" Bot" as A1' in src
        assert parse_model(src).actors[0].name == 'Say "Hi" Bot'

    def test_rejects_invalid_model(self):
        bad = UseCaseModel(system_name="S", associations=(Association("A1", "UC1"),))
        with pytest.raises(InvalidModelError):
            render_model(bad)


class TestParse:
    def test_minimal_source(self):
        model = parse_model(DiagramSource("@startuml\n@enduml"))
        assert model.system_name == "System"
        assert model.actors == () and model.use_cases == ()

    def test_undeclared_edge_endpoint(self):
        src = "@startuml\nactor \"X\" as A1\nA1 --> UC9\n@enduml"
        with pytest.raises(ParseError) as exc:
            parse_model(src)
        assert exc.value.code == "E-UNDEF-REF"
        assert exc.value.line == 3

    def test_missing_delimiters(self):
        with pytest.raises(ParseError) as exc:
            parse_model("actor \"X\" as A1\n@enduml")
        assert exc.value.code == "E-SYNTAX"
        with pytest.raises(ParseError) as exc:
            parse_model("@startuml\nactor \"X\" as A1")
        assert exc.value.code == "E-NO-END"
        with pytest.raises(ParseError) as exc:
            parse_model("")
        assert exc.value.code == "E-NO-START"

    def test_auto_alias_assignment(self):
        src = '@startuml\nactor "Clerk"\nusecase "File Report"\n@enduml'
        model = parse_model(src)
        assert model.actors[0].id == "A1"
        assert model.use_cases[0].id == "UC1"

    def test_auto_alias_avoids_declared(self):
        src = '@startuml\nactor "Clerk"\nactor "Boss" as A1\n@enduml'
        model = parse_model(src)
        ids = {a.id for a in model.actors}
        assert ids == {"A1", "A2"}
        assert model.actor_by_id("A1").name == "Boss"

    def test_bare_names_act_as_aliases(self):
        src = "@startuml\nactor Clerk\nusecase Filing as UC1\nClerk --> UC1\n@enduml"
        model = parse_model(src)
        assert model.actors[0].id == "Clerk"
        assert model.associations == (Association("Clerk", "UC1"),)

    def test_reversed_and_short_arrows(self):
        src = (
            "@startuml\n"
            'actor "A" as A1\n'
            'rectangle "S" {\n'
            '  usecase "U" as UC1\n'
            '  usecase "V" as UC2\n'
            "}\n"
            "UC1 <-- A1\n"
            "A1 -> UC2\n"
            "@enduml"
        )
        model = parse_model(src)
        assert set(model.associations) == {Association("A1", "UC1"), Association("A1", "UC2")}

    def test_edge_between_actors_is_syntax_error(self):
        src = '@startuml\nactor "A" as A1\nactor "B" as A2\nA1 --> A2\n@enduml'
        with pytest.raises(ParseError) as exc:
            parse_model(src)
        assert exc.value.code == "E-SYNTAX"

    def test_comments_blank_lines_and_decoration_ignored(self):
        src = (
            "@startuml\n"
            "' a comment\n"
            "\n"
            "skinparam backgroundColor white\n"
            "title Something\n"
            'actor "Clerk" as A1\n'
            "@enduml"
        )
        model = parse_model(src)
        assert [a.name for a in model.actors] == ["Clerk"]

    def test_declarations_outside_rectangle_default_boundary(self):
        src = '@startuml\nusecase "Drift" as UC1\n@enduml'
        assert parse_model(src).system_name == "System"

    def test_duplicate_alias_rejected(self):
        src = '@startuml\nusecase "X" as UC1\nusecase "Y" as UC1\n@enduml'
        with pytest.raises(ParseError) as exc:
            parse_model(src)
        assert exc.value.code == "E-SYNTAX"

    def test_relation_parsing(self):
        src = (
            "@startuml\n"
            'usecase "A" as UC1\n'
            'usecase "B" as UC2\n'
            "UC1 ..> UC2 : <<extend>>\n"
            "@enduml"
        )
        model = parse_model(src)
        assert model.relations[0].kind.value == "extend"

    def test_crlf_tolerated(self):
        src = '@startuml\r\nactor "X" as A1\r\n@enduml\r\n'
        assert parse_model(src).actors[0].name == "X"


# one (trigger, near-miss) source pair per lint rule
LINT_CASES = {
    "L-NO-START": (
        'actor "X" as A1\n@enduml\n',
        '@startuml\nactor "X" as A1\n@enduml\n',
    ),
    "L-NO-END": (
        '@startuml\nactor "X" as A1\n',
        '@startuml\nactor "X" as A1\n@enduml\n',
    ),
    "L-UNDEF-REF": (
        '@startuml\nactor "X" as A1\nA1 --> UC9\n@enduml\n',
        '@startuml\nactor "X" as A1\nusecase "U" as UC9\nA1 --> UC9\n@enduml\n',
    ),
    "L-DUP-ALIAS": (
        '@startuml\nusecase "X" as UC1\nusecase "X" as UC1\n@enduml\n',
        '@startuml\nusecase "X" as UC1\nusecase "X" as UC2\nactor "Y" as A1\nA1 --> UC1\nA1 --> UC2\n@enduml\n',
    ),
    "L-ACTOR-ACTOR": (
        '@startuml\nactor "X" as A1\nactor "Y" as A2\nA1 --> A2\n@enduml\n',
        '@startuml\nactor "X" as A1\nusecase "U" as UC1\nA1 --> UC1\n@enduml\n',
    ),
    "L-ORPHAN-UC": (
        '@startuml\nusecase "U" as UC1\n@enduml\n',
        '@startuml\nactor "X" as A1\nusecase "U" as UC1\nA1 --> UC1\n@enduml\n',
    ),
    "L-EMPTY-NAME": (
        '@startuml\nactor "  " as A1\n@enduml\n',
        '@startuml\nactor " X " as A1\n@enduml\n',
    ),
    "L-DANGLING-REL": (
        '@startuml\nusecase "A" as UC1\nactor "X" as A1\nA1 --> UC1\nUC1 ..> UC9 : <<include>>\n@enduml\n',
        '@startuml\nusecase "A" as UC1\nusecase "B" as UC2\nactor "X" as A1\nA1 --> UC1\nA1 --> UC2\nUC1 ..> UC2 : <<include>>\n@enduml\n',
    ),
}


class TestLint:
    @pytest.mark.parametrize("rule", sorted(LINT_CASES))
    def test_rule_triggers(self, rule):
        trigger, _ = LINT_CASES[rule]
        assert rule in {f.code for f in lint(trigger)}

    @pytest.mark.parametrize("rule", sorted(LINT_CASES))
    def test_rule_near_miss_stays_silent(self, rule):
        _, near_miss = LINT_CASES[rule]
        assert rule not in {f.code for f in lint(near_miss)}

    def test_renderer_output_is_clean(self, shop_model):
        assert lint(render_model(shop_model)) == []

    def test_unknown_directive_is_informational(self):
        findings = lint("@startuml\nskinparam shadowing false\n@enduml\n")
        assert [f.code for f in findings] == ["L-UNKNOWN-LINE"]
        assert findings[0].severity is Severity.INFO
        assert not has_errors(findings)

    def test_orphan_is_warning_severity(self):
        findings = lint('@startuml\nusecase "U" as UC1\n@enduml\n')
        orphan = [f for f in findings if f.code == "L-ORPHAN-UC"]
        assert orphan and orphan[0].severity is Severity.WARNING

    def test_findings_sorted_and_stable(self):
        src = '@startuml\nA1 --> A2\nactor "" as A9\n@enduml\n'
        findings = lint(src)
        assert findings == sorted(findings, key=lambda f: (f.line, f.code))
        assert lint(src) == findings

    def test_never_raises_on_garbage(self):
        findings = lint("﷽ total nonsense \x00 ---")
        assert {f.code for f in findings} >= {"L-NO-START", "L-NO-END"}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    model = random_model(random.Random(seed))
    assert parse_model(render_model(model)) == normalize(model)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_association_complete_renders_lint_clean(seed):
    model = random_model(random.Random(seed), require_associations=True)
    assert lint(render_model(model)) == []


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parse_total_on_renderer_output(seed):
    model = random_model(random.Random(seed))
    parse_model(render_model(model))  # must not raise
