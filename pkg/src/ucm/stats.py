"""Small-sample statistics: paired t-test, Shapiro-Wilk normality, time reduction.

Implementations are self-contained: the two-tailed t-test p-value comes from
the regularized incomplete beta function (continued-fraction evaluation), and
Shapiro-Wilk follows the Royston (1995) AS R94 approximation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Any, Sequence

E_LENGTH_MISMATCH = "E-LENGTH-MISMATCH"
E_ZERO_VARIANCE = "E-ZERO-VARIANCE"
E_SAMPLE_SIZE = "E-SAMPLE-SIZE"
E_EMPTY = "E-EMPTY"
E_ZERO_MEAN = "E-ZERO-MEAN"
E_UNPAIRED = "E-UNPAIRED"
E_BAD_CSV = "E-BAD-CSV"

_STDNORM = NormalDist()


class StatsError(ValueError):
    """A statistics precondition failure with a stable code."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")
        self.message = message


def mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def sample_sd(values: Sequence[float]) -> float:
    m = mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


# ---------------------------------------------------------------------------
# Regularized incomplete beta and the Student-t tail
# ---------------------------------------------------------------------------

def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation; converges quickly for x < (a+1)/(a+b+2).
    max_iterations = 300
    eps = 1e-16
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1], accurate to ~1e-14."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """Two-tailed p-value for a t statistic with df degrees of freedom."""
    if df < 1:
        raise StatsError(E_SAMPLE_SIZE, "degrees of freedom must be >= 1")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


# ---------------------------------------------------------------------------
# Paired t-test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    df: int
    p_value: float


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """t = mean(d) / (sd(d)/sqrt(n)) on paired differences d = a - b."""
    if len(a) != len(b):
        raise StatsError(E_LENGTH_MISMATCH, f"paired samples differ: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise StatsError(E_SAMPLE_SIZE, "paired t-test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    sd = sample_sd(diffs)
    if sd == 0.0:
        raise StatsError(E_ZERO_VARIANCE, "all paired differences are identical")
    n = len(diffs)
    t = mean(diffs) / (sd / math.sqrt(n))
    df = n - 1
    return TTestResult(t_stat=t, df=df, p_value=student_t_two_tailed_p(t, df))


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston 1995, AS R94)
# ---------------------------------------------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -0.0006714)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)


def _poly(coefficients: Sequence[float], x: float) -> float:
    return sum(c * x**i for i, c in enumerate(coefficients))


@dataclass(frozen=True)
class ShapiroResult:
    w_stat: float
    p_value: float


def shapiro_wilk(sample: Sequence[float]) -> ShapiroResult:
    """W statistic and p-value for normality; valid for 3 <= n <= 5000."""
    n = len(sample)
    if n < 3 or n > 5000:
        raise StatsError(E_SAMPLE_SIZE, f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    x = sorted(sample)
    if x[0] == x[-1]:
        raise StatsError(E_ZERO_VARIANCE, "all sample values are identical")

    m = [_STDNORM.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)]
    ssq_m = sum(v * v for v in m)
    rsn = 1.0 / math.sqrt(n)

    weights = [0.0] * n
    if n == 3:
        weights[2] = math.sqrt(0.5)
        weights[0] = -weights[2]
    else:
        a_n = m[-1] / math.sqrt(ssq_m) + _poly(_C1, rsn)
        if n > 5:
            a_n1 = m[-2] / math.sqrt(ssq_m) + _poly(_C2, rsn)
            phi = (ssq_m - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (
                1.0 - 2.0 * a_n**2 - 2.0 * a_n1**2
            )
            weights[-1], weights[0] = a_n, -a_n
            weights[-2], weights[1] = a_n1, -a_n1
            middle = range(2, n - 2)
        else:
            phi = (ssq_m - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n**2)
            weights[-1], weights[0] = a_n, -a_n
            middle = range(1, n - 1)
        sqrt_phi = math.sqrt(phi)
        for i in middle:
            weights[i] = m[i] / sqrt_phi

    x_mean = mean(x)
    denominator = sum((v - x_mean) ** 2 for v in x)
    numerator = sum(w * v for w, v in zip(weights, x)) ** 2
    w_stat = min(numerator / denominator, 1.0)

    if n == 3:
        pi6 = 6.0 / math.pi
        stqr = math.asin(math.sqrt(0.75))
        p = pi6 * (math.asin(math.sqrt(w_stat)) - stqr)
        p = min(max(p, 0.0), 1.0)
    elif n <= 11:
        gamma = _poly((-2.273, 0.459), n)
        w_t = -math.log(gamma - math.log1p(-w_stat))
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
        p = _STDNORM.cdf(-(w_t - mu) / sigma)
    else:
        ln_n = math.log(n)
        w_t = math.log1p(-w_stat)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
        p = _STDNORM.cdf(-(w_t - mu) / sigma)

    return ShapiroResult(w_stat=w_stat, p_value=p)


# ---------------------------------------------------------------------------
# Time reduction and the combined report
# ---------------------------------------------------------------------------

def time_reduction(manual: Sequence[float], assisted: Sequence[float]) -> float:
    """Fraction of modeling time saved: 1 - mean(assisted)/mean(manual)."""
    if not manual or not assisted:
        raise StatsError(E_EMPTY, "time samples must be non-empty")
    if mean(manual) == 0.0:
        raise StatsError(E_ZERO_MEAN, "manual mean time is zero")
    return 1.0 - mean(assisted) / mean(manual)


@dataclass(frozen=True)
class StatsReport:
    mean_manual: float
    mean_assisted: float
    reduction_pct: float
    shapiro_w: float
    shapiro_p: float
    t_stat: float
    df: int
    p_value: float
    alpha: float = 0.01
    n: int = 0

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "mean_manual": self.mean_manual,
            "mean_assisted": self.mean_assisted,
            "reduction_pct": self.reduction_pct,
            "shapiro_w": self.shapiro_w,
            "shapiro_p": self.shapiro_p,
            "t_stat": self.t_stat,
            "df": self.df,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def analyze_paired_times(
    manual: Sequence[float], assisted: Sequence[float], alpha: float = 0.01
) -> StatsReport:
    """Paired analysis of modeling times: reduction, normality check, t-test."""
    if len(manual) != len(assisted):
        raise StatsError(E_LENGTH_MISMATCH, "manual and assisted samples must pair up")
    diffs = [m - a for m, a in zip(manual, assisted)]
    shapiro = shapiro_wilk(diffs)
    t_test = paired_t_test(manual, assisted)
    return StatsReport(
        mean_manual=mean(manual),
        mean_assisted=mean(assisted),
        reduction_pct=time_reduction(manual, assisted),
        shapiro_w=shapiro.w_stat,
        shapiro_p=shapiro.p_value,
        t_stat=t_test.t_stat,
        df=t_test.df,
        p_value=t_test.p_value,
        alpha=alpha,
        n=len(manual),
    )


def load_times_csv(path: str | Path) -> tuple[list[float], list[float], list[str]]:
    """Read `participant,condition,minutes` rows; condition is manual or llm.

    Returns (manual, assisted, participants) with both series ordered by the
    participant's first appearance so the pairing matches row order.
    """
    manual: dict[str, float] = {}
    assisted: dict[str, float] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"participant", "condition", "minutes"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise StatsError(E_BAD_CSV, "header must be participant,condition,minutes")
        for row in reader:
            participant = row["participant"].strip()
            condition = row["condition"].strip().lower()
            try:
                minutes = float(row["minutes"])
            except ValueError as exc:
                raise StatsError(E_BAD_CSV, f"bad minutes value {row['minutes']!r}") from exc
            if participant not in order:
                order.append(participant)
            if condition == "manual":
                manual[participant] = minutes
            elif condition in ("llm", "assisted", "llm-based"):
                assisted[participant] = minutes
            else:
                raise StatsError(E_BAD_CSV, f"unknown condition {row['condition']!r}")
    missing = [p for p in order if p not in manual or p not in assisted]
    if missing:
        raise StatsError(E_UNPAIRED, f"participants missing a condition: {missing}")
    return [manual[p] for p in order], [assisted[p] for p in order], order


def report_to_text(report: StatsReport) -> str:
    """Fixed-width text rendering; p-values shown at 4 decimals."""
    lines = [
        f"n                 {report.n}",
        f"mean manual       {report.mean_manual:.3f} min",
        f"mean assisted     {report.mean_assisted:.3f} min",
        f"time reduction    {report.reduction_pct * 100:.1f}%",
        f"shapiro-wilk W    {report.shapiro_w:.4f}",
        f"shapiro-wilk p    {report.shapiro_p:.4f}",
        f"paired t          {report.t_stat:.2f}",
        f"df                {report.df}",
        f"p-value           {report.p_value:.4f}",
        f"alpha             {report.alpha}",
        f"significant       {'yes' if report.significant else 'no'}",
    ]
    return "\n".join(lines) + "\n"
