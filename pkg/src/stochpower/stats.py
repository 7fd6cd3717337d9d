"""Multi-seed trials and the two-sided one-sample t-test.

The Student-t quantile is computed from scratch.  The CDF uses the
regularized incomplete beta function

    P(|T| > t) = I_x(df/2, 1/2),    x = df / (df + t^2)

evaluated with the continued fraction of Numerical Recipes (``betacf``,
modified Lentz iteration) after the usual symmetry swap
``I_x(a, b) = 1 - I_{1-x}(b, a)`` when ``x > (a+1)/(a+b+2)`` so the fraction
converges quickly.  The quantile is found by bracketing and bisection on the
CDF down to ``1e-12``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cases import ALL_ONES, Case, run_case
from .errors import DegenerateSampleError, DomainError
from .power import ElectricalParams, WaveformModel

__all__ = [
    "unbiased_variance",
    "t_statistic",
    "t_statistic_from_moments",
    "betainc",
    "student_t_cdf",
    "t_critical",
    "TTestReport",
    "t_test",
    "TrialResult",
    "collect_trials",
    "run_trials",
    "REPORT_COLUMNS",
    "write_report_csv",
]

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _mean_var(samples: Sequence[float]) -> tuple[int, float, float]:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise DomainError(f"need at least two samples, got {n}")
    mean = float(x.mean())
    return n, mean, float(np.sum((x - mean) ** 2) / (n - 1))


def unbiased_variance(samples: Sequence[float]) -> float:
    return _mean_var(samples)[2]


def t_statistic_from_moments(mean: float, variance: float, n: int, mu0: float) -> float:
    if n < 2:
        raise DomainError(f"need at least two samples, got {n}")
    if variance < 0:
        raise DomainError("variance must be non-negative")
    if variance == 0:
        raise DegenerateSampleError("zero sample variance: the t-statistic is undefined")
    return (mean - mu0) / math.sqrt(variance / n)


def t_statistic(samples: Sequence[float], mu0: float) -> float:
    n, mean, var = _mean_var(samples)
    return t_statistic_from_moments(mean, var, n, mu0)


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise DomainError("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"betainc needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def _t_quantile(q: float, df: float) -> float:
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -_t_quantile(1.0 - q, df)
    hi = 1.0
    while student_t_cdf(hi, df) < q:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("t quantile bracket overflow")
    lo = 0.0
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def t_critical(df: float, alpha: float = 0.05, two_sided: bool = True) -> float:
    """Positive critical value of Student's t at significance ``alpha``.

    Two-sided: the ``1 - alpha/2`` quantile (``alpha=1`` gives the median, 0).
    One-sided: the ``1 - alpha`` quantile.
    """
    if not df >= 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    if two_sided:
        if not 0 < alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
        return _t_quantile(1.0 - alpha / 2.0, df)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return _t_quantile(1.0 - alpha, df)


@dataclass(frozen=True)
class TTestReport:
    n: int
    mean: float
    variance: float
    mu0: float
    statistic: float
    alpha: float
    critical: float
    accepted: bool


def t_test(samples: Sequence[float], mu0: float, alpha: float = 0.05) -> TTestReport:
    """Two-sided one-sample t-test of H0: population mean == ``mu0``.

    Raises :class:`DegenerateSampleError` when all samples are equal.
    """
    n, mean, var = _mean_var(samples)
    stat = t_statistic_from_moments(mean, var, n, mu0)
    crit = t_critical(n - 1, alpha, two_sided=True)
    return TTestReport(n, mean, var, mu0, stat, alpha, crit, abs(stat) < crit)


@dataclass(frozen=True)
class TrialResult:
    case_index: int | None
    seed_set: tuple[int, ...]
    mean_normalized_power: float


def _window_mean(load_samples: np.ndarray, samples_per_interval: int, n_slots: int) -> float:
    # window spans the b interval of slot 0 through the f interval of slot
    # n_slots, i.e. exactly the replayed results of slots 0..n_slots-1
    m = samples_per_interval
    return float(load_samples[m: m * (2 * n_slots + 1)].mean())


def collect_trials(
    case: Case,
    n_trials: int = 200,
    window_s: float = 1e-3,
    master_seed: int = 0,
    params: ElectricalParams = ElectricalParams(),
    waveform: WaveformModel = WaveformModel(),
    trial_seeds: Sequence[int] | None = None,
) -> list[TrialResult]:
    """Independent one-window trials of ``case``.

    Trial ``i`` uses seed path ``(case_index, i)`` under ``master_seed``
    unless ``trial_seeds`` gives explicit per-trial master seeds.
    """
    if n_trials < 2:
        raise DomainError("need at least two trials")
    if trial_seeds is not None and len(trial_seeds) != n_trials:
        raise DomainError("trial_seeds must have one seed per trial")
    n_win = params.slots_in(window_s)
    if n_win < 1:
        raise DomainError(f"window {window_s} s is shorter than one slot")
    m = waveform.samples_per_interval(params)
    base_run = run_case(ALL_ONES, n_win + 1, 0, (), params, waveform)
    base = _window_mean(base_run.load.samples, m, n_win)
    case_key = case.index if case.index is not None else 0

    results = []
    for i in range(n_trials):
        if trial_seeds is None:
            seed, path = master_seed, (case_key, i)
        else:
            seed, path = int(trial_seeds[i]), ()
        run = run_case(case, n_win + 1, seed, path, params, waveform)
        sample = _window_mean(run.load.samples, m, n_win) / base
        results.append(TrialResult(case.index, (seed, *path), sample))
    return results


def run_trials(
    case: Case,
    n_trials: int = 200,
    window_s: float = 1e-3,
    master_seed: int = 0,
    alpha: float = 0.05,
    params: ElectricalParams = ElectricalParams(),
    waveform: WaveformModel = WaveformModel(),
    trial_seeds: Sequence[int] | None = None,
) -> tuple[list[TrialResult], TTestReport]:
    """:func:`collect_trials` followed by a t-test against the case target."""
    results = collect_trials(case, n_trials, window_s, master_seed, params, waveform, trial_seeds)
    report = t_test([r.mean_normalized_power for r in results], case.target, alpha)
    return results, report


REPORT_COLUMNS = ("case", "mean", "unbiased_variance", "statistic", "critical", "accepted")


def write_report_csv(rows: Sequence[tuple[str, TTestReport]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for label, r in rows:
            w.writerow([label, f"{r.mean:.6f}", f"{r.variance:.6f}", f"{r.statistic:.6f}",
                        f"{r.critical:.6f}", int(r.accepted)])
