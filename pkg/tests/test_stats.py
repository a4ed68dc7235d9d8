"""Paired t-test, Shapiro-Wilk, time reduction, and the CSV loader."""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucm.stats import (
    StatsError,
    analyze_paired_times,
    load_times_csv,
    paired_t_test,
    regularized_incomplete_beta,
    report_to_text,
    shapiro_wilk,
    time_reduction,
)

FIXTURES = Path(__file__).parent / "fixtures"

MANUAL = [14.2, 19.1, 11.02, 16.9, 26.3]
ASSISTED = [4.8, 6.25, 4.2, 9.6, 10.4]


class TestPairedT:
    def test_published_timing_data(self):
        result = paired_t_test(MANUAL, ASSISTED)
        assert result.t_stat == pytest.approx(6.05, abs=0.01)
        assert result.df == 4
        assert result.p_value == pytest.approx(0.0037, abs=0.0003)

    def test_symmetric_differences_give_zero_t(self):
        result = paired_t_test([1, 2, 3], [3, 2, 1])
        assert result.t_stat == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_constant_shift_is_zero_variance(self):
        with pytest.raises(StatsError) as exc:
            paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert exc.value.code == "E-ZERO-VARIANCE"

    def test_length_mismatch(self):
        with pytest.raises(StatsError) as exc:
            paired_t_test([1, 2, 3], [1, 2])
        assert exc.value.code == "E-LENGTH-MISMATCH"

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force_formula(self, seed):
        rng = random.Random(seed)
        n = rng.randint(2, 30)
        a = [rng.gauss(10, 4) for _ in range(n)]
        shift = rng.uniform(-3, 3)
        b = [x - shift - rng.gauss(0, 1) for x in a]
        diffs = [x - y for x, y in zip(a, b)]
        m = sum(diffs) / n
        sd = math.sqrt(sum((d - m) ** 2 for d in diffs) / (n - 1))
        if sd == 0:
            return
        expected_t = m / (sd / math.sqrt(n))
        result = paired_t_test(a, b)
        assert result.t_stat == pytest.approx(expected_t, rel=1e-12)


class TestIncompleteBeta:
    def test_boundaries(self):
        assert regularized_incomplete_beta(2.0, 0.5, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 0.5, 1.0) == 1.0

    def test_symmetry_identity(self):
        # I_x(a,b) = 1 - I_{1-x}(b,a)
        for a, b, x in [(2, 0.5, 0.1), (3, 3, 0.4), (0.5, 5, 0.7)]:
            left = regularized_incomplete_beta(a, b, x)
            right = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
            assert left == pytest.approx(right, abs=1e-12)


class TestShapiroWilk:
    def test_published_differences_pass_normality(self):
        diffs = [m - a for m, a in zip(MANUAL, ASSISTED)]
        result = shapiro_wilk(diffs)
        assert result.p_value > 0.05

    def test_sample_size_bounds(self):
        with pytest.raises(StatsError) as exc:
            shapiro_wilk([1.0, 2.0])
        assert exc.value.code == "E-SAMPLE-SIZE"

    def test_identical_values_rejected(self):
        with pytest.raises(StatsError) as exc:
            shapiro_wilk([5.0, 5.0, 5.0, 5.0])
        assert exc.value.code == "E-ZERO-VARIANCE"

    def test_against_frozen_reference(self):
        # scipy reference values were computed once; see make_shapiro_fixtures.py
        cases = json.loads((FIXTURES / "shapiro_reference.json").read_text("utf-8"))
        assert len(cases) == 20
        for case in cases:
            result = shapiro_wilk(case["sample"])
            assert result.w_stat == pytest.approx(case["w"], abs=1e-3), case["n"]
            assert result.p_value == pytest.approx(case["p"], abs=1e-3), case["n"]

    def test_detects_gross_non_normality(self):
        heavy = [2.0**i for i in range(12)]
        assert shapiro_wilk(heavy).p_value < 0.01


class TestTimeReduction:
    def test_published_reduction(self):
        assert time_reduction(MANUAL, ASSISTED) == pytest.approx(0.597, abs=0.005)

    def test_equal_lists_zero(self):
        assert time_reduction([5.0, 7.0], [5.0, 7.0]) == 0.0

    def test_half(self):
        assert time_reduction([10, 10], [5, 5]) == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(StatsError) as exc:
            time_reduction([], [1.0])
        assert exc.value.code == "E-EMPTY"
        with pytest.raises(StatsError) as exc:
            time_reduction([0.0, 0.0], [1.0])
        assert exc.value.code == "E-ZERO-MEAN"


class TestCsvAndReport:
    def test_bundled_table_loads_paired(self):
        from importlib import resources

        path = resources.files("ucm") / "data" / "table1.csv"
        manual, assisted, participants = load_times_csv(str(path))
        assert participants == ["P1", "P2", "P3", "P4", "P5"]
        assert manual == MANUAL and assisted == ASSISTED

    def test_unpaired_participant_rejected(self, tmp_path):
        bad = tmp_path / "t.csv"
        bad.write_text("participant,condition,minutes\nP1,manual,3\n", "utf-8")
        with pytest.raises(StatsError) as exc:
            load_times_csv(bad)
        assert exc.value.code == "E-UNPAIRED"

    def test_bad_header_rejected(self, tmp_path):
        bad = tmp_path / "t.csv"
        bad.write_text("who,what,when\n", "utf-8")
        with pytest.raises(StatsError) as exc:
            load_times_csv(bad)
        assert exc.value.code == "E-BAD-CSV"

    def test_report_text_formats_p_at_four_decimals(self):
        report = analyze_paired_times(MANUAL, ASSISTED)
        text = report_to_text(report)
        assert "p-value           0.0038" in text or "p-value           0.0037" in text
        assert "paired t          6.05" in text
        assert "time reduction    59.7%" in text
