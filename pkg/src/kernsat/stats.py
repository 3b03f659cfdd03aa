"""Shapiro-Wilk normality test, paired t-test and run summaries."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc, ndtr, ndtri

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class RunResults:
    label: str
    accuracies: tuple[float, ...]

    def __post_init__(self):
        acc = tuple(float(a) for a in self.accuracies)
        if any(not 0.0 <= a <= 100.0 for a in acc):
            raise ValueError(f"{self.label}: accuracies must lie in [0, 100]")
        object.__setattr__(self, "accuracies", acc)


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class

    test: str
    statistic: float
    p_value: float
    reject: bool
    alpha: float = DEFAULT_ALPHA
    df: int | None = None
    n: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- Shapiro-Wilk

# Royston (1992/1995) polynomial approximations, coefficients in increasing degree.
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x: float) -> float:
    return sum(c * x ** i for i, c in enumerate(coef))


def shapiro_wilk_coefficients(n: int) -> np.ndarray:
    """The ``n // 2`` antisymmetric weights, largest-gap first."""
    if n < 3:
        raise ValueError("Shapiro-Wilk needs at least 3 samples")
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    i = np.arange(1, half + 1)
    m = ndtri((i - 0.375) / (n + 0.25))  # negative, lower-tail normal scores
    summ2 = 2.0 * float(np.sum(m * m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(half)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
        a[1] = a2
        start = 2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
        start = 1
    a[0] = a1
    a[start:] = -m[start:] / fac
    return a


def _sw_pvalue(w: float, n: int) -> float:
    if n == 3:
        # exact distribution for three points
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    if w >= 1.0:
        return 1.0
    y = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 0.0
        y = -math.log(gamma - y)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mu = _poly(_C5, ln)
        sigma = math.exp(_poly(_C6, ln))
    return float(1.0 - ndtr((y - mu) / sigma))


def shapiro_wilk(samples, alpha: float = DEFAULT_ALPHA) -> TestOutcome:
    """W statistic and Royston p-value for 3 <= n <= 50 samples."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = len(x)
    if n < 3:
        raise ValueError(f"Shapiro-Wilk needs at least 3 samples, got {n}")
    if n > 50:
        raise ValueError(f"tabulated range is n <= 50, got {n}")
    ss = float(np.sum((x - x.mean()) ** 2))
    if ss <= 0.0 or x[-1] == x[0]:
        raise ValueError("zero variance: Shapiro-Wilk undefined")
    a = shapiro_wilk_coefficients(n)
    half = len(a)
    gaps = x[::-1][:half] - x[:half]
    w = min(float(np.dot(a, gaps)) ** 2 / ss, 1.0)
    p = _sw_pvalue(w, n)
    return TestOutcome("shapiro-wilk", w, p, p < alpha, alpha, None, n)


# --------------------------------------------------------------------------- t-test


def t_sf(t: float, df: int) -> float:
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(a, b, two_tailed: bool = True, alpha: float = DEFAULT_ALPHA) -> TestOutcome:
    """Paired t-test on ``d = b - a`` (sample sd, ``n - 1`` degrees of freedom).

    The one-tailed variant tests ``mean(d) > 0``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = b - a
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ValueError("zero-variance differences: t statistic undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    p = 2.0 * t_sf(abs(t), df) if two_tailed else t_sf(t, df)
    p = min(max(p, 0.0), 1.0)
    name = "paired-t (two-tailed)" if two_tailed else "paired-t (one-tailed)"
    return TestOutcome(name, t, p, p < alpha, alpha, df, n)


# --------------------------------------------------------------------------- summaries


@dataclass(frozen=True)
class SummaryRow:
    condition: str
    runs: int
    mean: float
    variance: float | None


def summarize(runs) -> list[SummaryRow]:
    """Mean and sample variance (absent for a single run) per condition.

    ``runs`` is a list of :class:`RunResults` or a ``{label: accuracies}`` mapping.
    """
    if isinstance(runs, dict):
        runs = [RunResults(k, tuple(v)) for k, v in runs.items()]
    out = []
    for r in runs:
        acc = np.asarray(r.accuracies, dtype=np.float64)
        if len(acc) == 0:
            raise ValueError(f"{r.label}: no runs")
        var = float(np.var(acc, ddof=1)) if len(acc) > 1 else None
        out.append(SummaryRow(r.label, len(acc), float(acc.mean()), var))
    return out


def format_summary(rows: list[SummaryRow]) -> str:
    width = max([len("condition")] + [len(r.condition) for r in rows])
    lines = [f"{'condition':<{width}}  {'runs':>4}  {'mean':>10}  {'variance':>10}"]
    for r in rows:
        var = "-" if r.variance is None else f"{r.variance:.4f}"
        lines.append(f"{r.condition:<{width}}  {r.runs:>4}  {r.mean:>10.4f}  {var:>10}")
    return "\n".join(lines)
