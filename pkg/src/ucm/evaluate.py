"""Quality scoring of candidate models against ground truth.

Alignment is deliberately lexical and deterministic: names are lowercased,
punctuation-stripped and stopword-filtered, then matched greedily one-to-one
by exact equality, synonym/override hits, or token-set Jaccard similarity.
Relationships and descriptions never enter the counts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Iterable, Sequence

from ucm.model import InvalidModelError, UseCaseModel, normalize, validate_model

DEFAULT_STOPWORDS = frozenset({"a", "an", "the", "to", "of", "and"})
DEFAULT_JACCARD_THRESHOLD = 0.5

_PUNCT = re.compile(r"[^\w\s]")
_WS = re.compile(r"\s+")


def normalize_phrase(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> str:
    """Lowercase, strip punctuation, collapse whitespace, drop stopwords."""
    lowered = _PUNCT.sub(" ", text.lower())
    tokens = [t for t in _WS.split(lowered) if t and t not in stopwords]
    return " ".join(tokens)


def phrase_tokens(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> frozenset[str]:
    return frozenset(normalize_phrase(text, stopwords).split()) - {""}


def round_display(value: float, places: int = 2) -> float:
    """Half-up decimal rounding for report display values."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MatcherConfig:
    jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    synonym_map: tuple[tuple[str, str], ...] = ()
    manual_overrides: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.jaccard_threshold <= 1.0:
            raise ValueError("jaccard_threshold must lie in [0, 1]")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        object.__setattr__(self, "synonym_map", tuple(tuple(p) for p in self.synonym_map))
        object.__setattr__(
            self, "manual_overrides", tuple(tuple(p) for p in self.manual_overrides)
        )


@dataclass(frozen=True)
class Match:
    truth_index: int
    candidate_index: int
    score: float


@dataclass(frozen=True)
class Alignment:
    matches: tuple[Match, ...]
    unmatched_truth: tuple[int, ...]
    unmatched_candidate: tuple[int, ...]


def pair_score(truth: str, candidate: str, cfg: MatcherConfig) -> float:
    """Score one (truth, candidate) name pair in [0, 1]."""
    norm_t = normalize_phrase(truth, cfg.stopwords)
    norm_c = normalize_phrase(candidate, cfg.stopwords)
    for a, b in cfg.manual_overrides:
        pair = {normalize_phrase(a, cfg.stopwords), normalize_phrase(b, cfg.stopwords)}
        if {norm_t, norm_c} == pair:
            return 1.0
    if norm_t and norm_t == norm_c:
        return 1.0
    if not norm_t and not norm_c:
        # Both names are pure stopwords/punctuation; compare raw text.
        return 1.0 if truth.strip().lower() == candidate.strip().lower() else 0.0
    for a, b in cfg.synonym_map:
        pair = {normalize_phrase(a, cfg.stopwords), normalize_phrase(b, cfg.stopwords)}
        if {norm_t, norm_c} == pair:
            return 1.0
    tokens_t = frozenset(norm_t.split()) if norm_t else frozenset()
    tokens_c = frozenset(norm_c.split()) if norm_c else frozenset()
    union = tokens_t | tokens_c
    if not union:
        return 0.0
    return len(tokens_t & tokens_c) / len(union)


def align_elements(
    truth: Sequence[str], candidate: Sequence[str], cfg: MatcherConfig = MatcherConfig()
) -> Alignment:
    """Greedy one-to-one matching of names, deterministic under reordering.

    Pairs are accepted in descending score order (threshold applies), ties
    broken by lexicographic (truth, candidate) name order.
    """
    scored: list[tuple[float, str, str, int, int]] = []
    for ti, tname in enumerate(truth):
        for ci, cname in enumerate(candidate):
            score = pair_score(tname, cname, cfg)
            if score >= cfg.jaccard_threshold and score > 0.0:
                scored.append((score, tname, cname, ti, ci))
    scored.sort(key=lambda item: (-item[0], item[1], item[2], item[3], item[4]))

    matches: list[Match] = []
    used_truth: set[int] = set()
    used_candidate: set[int] = set()
    for score, _, _, ti, ci in scored:
        if ti in used_truth or ci in used_candidate:
            continue
        used_truth.add(ti)
        used_candidate.add(ci)
        matches.append(Match(ti, ci, score))

    matches.sort(key=lambda m: m.truth_index)
    return Alignment(
        matches=tuple(matches),
        unmatched_truth=tuple(i for i in range(len(truth)) if i not in used_truth),
        unmatched_candidate=tuple(i for i in range(len(candidate)) if i not in used_candidate),
    )


@dataclass(frozen=True)
class ClassMetrics:
    """Confusion counts and derived metrics for one element class."""

    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    matches: tuple[tuple[str, str, float], ...] = ()
    unmatched_truth: tuple[str, ...] = ()
    unmatched_candidate: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matches": [list(m) for m in self.matches],
            "unmatched_truth": list(self.unmatched_truth),
            "unmatched_candidate": list(self.unmatched_candidate),
        }


@dataclass(frozen=True)
class EvalReport:
    actor_metrics: ClassMetrics
    usecase_metrics: ClassMetrics

    def to_dict(self) -> dict[str, Any]:
        return {
            "actor_metrics": self.actor_metrics.to_dict(),
            "usecase_metrics": self.usecase_metrics.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @property
    def has_undefined_metrics(self) -> bool:
        return any(
            value is None
            for metrics in (self.actor_metrics, self.usecase_metrics)
            for value in (metrics.precision, metrics.recall, metrics.f1)
        )


def metrics_from_counts(
    tp: int,
    fp: int,
    fn: int,
    matches: Iterable[tuple[str, str, float]] = (),
    unmatched_truth: Iterable[str] = (),
    unmatched_candidate: Iterable[str] = (),
) -> ClassMetrics:
    """Derive precision/recall/F1 from counts; undefined stays None, never 0."""
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        matches=tuple(matches),
        unmatched_truth=tuple(unmatched_truth),
        unmatched_candidate=tuple(unmatched_candidate),
    )


def _score_class(
    truth_items: Sequence[tuple[str, str]],
    candidate_items: Sequence[tuple[str, str]],
    cfg: MatcherConfig,
) -> ClassMetrics:
    truth_names = [name for _, name in truth_items]
    candidate_names = [name for _, name in candidate_items]
    alignment = align_elements(truth_names, candidate_names, cfg)
    matches = tuple(
        (truth_items[m.truth_index][0], candidate_items[m.candidate_index][0], m.score)
        for m in alignment.matches
    )
    tp = len(matches)
    return metrics_from_counts(
        tp=tp,
        fp=len(candidate_items) - tp,
        fn=len(truth_items) - tp,
        matches=matches,
        unmatched_truth=tuple(truth_items[i][0] for i in alignment.unmatched_truth),
        unmatched_candidate=tuple(candidate_items[i][0] for i in alignment.unmatched_candidate),
    )


def score_model(
    truth: UseCaseModel, candidate: UseCaseModel, cfg: MatcherConfig = MatcherConfig()
) -> EvalReport:
    """Align actors and use cases independently; relationships never counted."""
    for label, model in (("truth", truth), ("candidate", candidate)):
        violations = validate_model(model)
        if violations:
            raise InvalidModelError(violations)
    truth_n = normalize(truth)
    candidate_n = normalize(candidate)
    return EvalReport(
        actor_metrics=_score_class(
            [(a.id, a.name) for a in truth_n.actors],
            [(a.id, a.name) for a in candidate_n.actors],
            cfg,
        ),
        usecase_metrics=_score_class(
            [(uc.id, uc.title) for uc in truth_n.use_cases],
            [(uc.id, uc.title) for uc in candidate_n.use_cases],
            cfg,
        ),
    )


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{round_display(value):.2f}"


def report_to_text(report: EvalReport) -> str:
    """Aligned-column text rendering of an EvalReport."""
    rows = [
        ("class", "tp", "fp", "fn", "precision", "recall", "f1"),
        (
            "actors",
            str(report.actor_metrics.tp),
            str(report.actor_metrics.fp),
            str(report.actor_metrics.fn),
            _fmt(report.actor_metrics.precision),
            _fmt(report.actor_metrics.recall),
            _fmt(report.actor_metrics.f1),
        ),
        (
            "use_cases",
            str(report.usecase_metrics.tp),
            str(report.usecase_metrics.fp),
            str(report.usecase_metrics.fn),
            _fmt(report.usecase_metrics.precision),
            _fmt(report.usecase_metrics.recall),
            _fmt(report.usecase_metrics.f1),
        ),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    out = [lines[0], "-" * len(lines[0])] + lines[1:]

    def class_detail(label: str, metrics: ClassMetrics) -> list[str]:
        detail = []
        for truth_id, cand_id, score in metrics.matches:
            detail.append(f"  match {label}: {truth_id} ~ {cand_id} (score {score:.2f})")
        for truth_id in metrics.unmatched_truth:
            detail.append(f"  missed {label}: {truth_id}")
        for cand_id in metrics.unmatched_candidate:
            detail.append(f"  extra {label}: {cand_id}")
        return detail

    out.extend(class_detail("actor", report.actor_metrics))
    out.extend(class_detail("use case", report.usecase_metrics))
    return "\n".join(out) + "\n"
