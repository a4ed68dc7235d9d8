"""Alignment, scoring, and metric identities."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucm.evaluate import (
    MatcherConfig,
    align_elements,
    metrics_from_counts,
    normalize_phrase,
    pair_score,
    report_to_text,
    round_display,
    score_model,
)
from ucm.model import Actor, Association, UseCase, UseCaseModel

FIXTURES = Path(__file__).parent / "fixtures"


def simple_model(actor_names, usecase_titles):
    actors = tuple(Actor(f"A{i+1}", name) for i, name in enumerate(actor_names))
    usecases = tuple(UseCase(f"UC{i+1}", t) for i, t in enumerate(usecase_titles))
    associations = tuple(
        Association(actors[0].id, uc.id) for uc in usecases if actors
    )
    return UseCaseModel(
        system_name="S", actors=actors, use_cases=usecases, associations=associations
    )


class TestNormalizePhrase:
    def test_stopwords_case_punctuation(self):
        assert normalize_phrase("Place an order!") == "place order"
        assert normalize_phrase("  The   SYSTEM  ") == "system"

    def test_pure_stopword_phrase_is_empty(self):
        assert normalize_phrase("The A An") == ""


class TestAlignment:
    def test_identical_lists_all_matched(self):
        result = align_elements(["Login", "Pay"], ["Login", "Pay"])
        assert len(result.matches) == 2
        assert all(m.score == 1.0 for m in result.matches)

    def test_normalization_bridges_wording(self):
        result = align_elements(["Place an order"], ["place order"])
        assert len(result.matches) == 1
        assert result.matches[0].score == 1.0

    def test_disjoint_tokens_unmatched(self):
        result = align_elements(["Login"], ["Generate report"])
        assert result.matches == ()
        assert result.unmatched_truth == (0,)
        assert result.unmatched_candidate == (0,)

    def test_jaccard_partial_match(self):
        score = pair_score("Borrow a book", "Borrow book online", MatcherConfig())
        assert score == pytest.approx(2 / 3)
        result = align_elements(["Borrow a book"], ["Borrow book online"])
        assert len(result.matches) == 1

    def test_below_threshold_not_matched(self):
        result = align_elements(["Borrow book"], ["Borrow magazine card item"])
        assert result.matches == ()  # jaccard 1/5 < 0.5

    def test_synonyms_hit(self):
        cfg = MatcherConfig(synonym_map=(("Sign in", "Login"),))
        assert pair_score("Sign in", "Login", cfg) == 1.0

    def test_manual_override_hit(self):
        cfg = MatcherConfig(manual_overrides=(("Checkout", "Finalize purchase"),))
        result = align_elements(["Checkout"], ["Finalize purchase"], cfg)
        assert len(result.matches) == 1

    def test_one_to_one_greedy(self):
        # one candidate cannot satisfy two truths
        result = align_elements(["Pay fee", "Pay fine"], ["Pay fee"])
        assert len(result.matches) == 1
        assert result.matches[0].truth_index == 0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reorder_invariance(self, seed):
        rng = random.Random(seed)
        vocabulary = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
        truth = rng.sample(vocabulary, rng.randint(1, 5))
        candidate = rng.sample(vocabulary, rng.randint(1, 5))
        base = align_elements(truth, candidate)
        shuffled_truth = truth[:]
        shuffled_candidate = candidate[:]
        rng.shuffle(shuffled_truth)
        rng.shuffle(shuffled_candidate)
        other = align_elements(shuffled_truth, shuffled_candidate)
        pairs = {(truth[m.truth_index], candidate[m.candidate_index]) for m in base.matches}
        other_pairs = {
            (shuffled_truth[m.truth_index], shuffled_candidate[m.candidate_index])
            for m in other.matches
        }
        assert pairs == other_pairs

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_match_count_bounded_and_scores_above_threshold(self, seed):
        rng = random.Random(seed)
        words = ["pay", "fee", "book", "order", "track", "report", "login"]
        make = lambda: " ".join(rng.sample(words, rng.randint(1, 3)))
        truth = [make() for _ in range(rng.randint(0, 5))]
        candidate = [make() for _ in range(rng.randint(0, 5))]
        cfg = MatcherConfig()
        result = align_elements(truth, candidate, cfg)
        assert len(result.matches) <= min(len(truth), len(candidate))
        assert all(m.score >= cfg.jaccard_threshold for m in result.matches)


class TestScoreModel:
    def test_identity_gives_perfect_scores(self, shop_model):
        report = score_model(shop_model, shop_model)
        for metrics in (report.actor_metrics, report.usecase_metrics):
            assert metrics.precision == metrics.recall == metrics.f1 == 1.0

    def test_two_of_three_overlap(self):
        truth = simple_model(["User"], ["Alpha", "Beta", "Gamma"])
        candidate = simple_model(["User"], ["Alpha", "Beta", "Delta"])
        metrics = score_model(truth, candidate).usecase_metrics
        assert (metrics.tp, metrics.fp, metrics.fn) == (2, 1, 1)
        assert metrics.precision == pytest.approx(2 / 3)
        assert metrics.recall == pytest.approx(2 / 3)
        assert metrics.f1 == pytest.approx(2 / 3)

    def test_published_row_from_counts(self):
        # tp=7 fp=1 fn=2 reproduces the P1/LLM row of the comparison table
        metrics = metrics_from_counts(tp=7, fp=1, fn=2)
        assert round_display(metrics.precision) == 0.88
        assert round_display(metrics.recall) == 0.78
        assert round_display(metrics.f1) == 0.82

    def test_relations_never_counted(self, shop_model):
        from dataclasses import replace

        without_relations = replace(shop_model, relations=())
        a = score_model(shop_model, without_relations)
        b = score_model(shop_model, shop_model)
        assert a.to_dict() == b.to_dict()

    def test_undefined_metrics_flagged_not_zeroed(self):
        truth = simple_model(["User"], ["Alpha"])
        empty = UseCaseModel(system_name="S")
        report = score_model(truth, empty)
        assert report.usecase_metrics.precision is None  # tp+fp = 0
        assert report.usecase_metrics.recall == 0.0
        assert report.has_undefined_metrics
        assert "undefined" in report_to_text(report)


class TestMetricIdentities:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
    def test_f1_identity_and_ranges(self, tp, fp, fn):
        metrics = metrics_from_counts(tp, fp, fn)
        if metrics.precision is not None:
            assert 0.0 <= metrics.precision <= 1.0
        if metrics.recall is not None:
            assert 0.0 <= metrics.recall <= 1.0
        if metrics.f1 is not None:
            expected = (
                2 * metrics.precision * metrics.recall / (metrics.precision + metrics.recall)
            )
            assert metrics.f1 == pytest.approx(expected)
            assert 0.0 <= metrics.f1 <= 1.0


class TestTableConsistency:
    def test_all_published_rows_and_averages(self):
        data = json.loads((FIXTURES / "table3_counts.json").read_text("utf-8"))
        sums = {"manual": [0.0, 0.0, 0.0], "llm": [0.0, 0.0, 0.0]}
        for row in data["rows"]:
            metrics = metrics_from_counts(row["tp"], row["fp"], row["fn"])
            assert round_display(metrics.precision) == row["precision"], row
            assert round_display(metrics.recall) == row["recall"], row
            assert round_display(metrics.f1) == row["f1"], row
            sums[row["condition"]][0] += metrics.precision
            sums[row["condition"]][1] += metrics.recall
            sums[row["condition"]][2] += metrics.f1
        for condition, expected in data["expected_averages"].items():
            precision, recall, f1 = (value / 5 for value in sums[condition])
            assert round_display(precision) == expected["precision"]
            assert round_display(recall) == expected["recall"]
            assert round_display(f1) == expected["f1"]
