import csv
import math
from fractions import Fraction
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from stochpower.cases import ALL_ONES, get_case
from stochpower.errors import DegenerateSampleError, DomainError
from stochpower.stats import (
    REPORT_COLUMNS,
    betainc,
    collect_trials,
    run_trials,
    student_t_cdf,
    t_critical,
    t_statistic,
    t_statistic_from_moments,
    t_test,
    unbiased_variance,
    write_report_csv,
)

# regression fixture: 12 window means in the style of a trial study
FIXTURE = [0.84, 0.76, 0.92, 0.8, 0.68, 0.88, 0.72, 0.96, 0.8, 0.84, 0.76, 0.78]


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.5), (99.5, 0.5, 0.98),
                                   (10.0, 0.5, 0.01), (1.0, 1.0, 0.25), (0.5, 50.0, 0.999)])
def test_betainc_against_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


def test_betainc_edges():
    assert betainc(2.0, 3.0, 0.0) == 0.0
    assert betainc(2.0, 3.0, 1.0) == 1.0
    with pytest.raises(DomainError):
        betainc(2.0, 3.0, 1.5)


@pytest.mark.parametrize("df", [1, 2, 5, 30, 199, 1000])
def test_t_cdf_against_scipy(df):
    for t in (-4.0, -1.0, 0.0, 0.3, 1.97, 10.0):
        assert student_t_cdf(t, df) == pytest.approx(sps.t.cdf(t, df), abs=1e-12)


@pytest.mark.parametrize("df", [1, 3, 10, 199, 5000])
@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2])
def test_t_critical_against_scipy(df, alpha):
    assert abs(t_critical(df, alpha) - sps.t.ppf(1 - alpha / 2, df)) < 1e-6
    assert abs(t_critical(df, alpha, two_sided=False) - sps.t.ppf(1 - alpha, df)) < 1e-6


def test_t_critical_df199():
    assert abs(t_critical(199, 0.05) - 1.972) < 0.001


def test_t_critical_normal_limit():
    z = NormalDist().inv_cdf(0.975)
    assert abs(t_critical(10_000_000, 0.05) - z) < 1e-5
    assert z == pytest.approx(1.95996, abs=1e-5)


def test_t_critical_alpha_one_is_median():
    assert t_critical(199, 1.0) == 0.0


def test_t_critical_monotone():
    dfs = [1, 2, 5, 20, 199, 10_000]
    vals = [t_critical(d, 0.05) for d in dfs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    alphas = [0.001, 0.01, 0.05, 0.1, 0.5, 0.9]
    vals = [t_critical(199, a) for a in alphas]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("df,alpha", [(0, 0.05), (0.5, 0.05), (10, 0.0), (10, 1.5)])
def test_t_critical_rejects(df, alpha):
    with pytest.raises(DomainError):
        t_critical(df, alpha)


def test_unbiased_variance_examples():
    assert unbiased_variance([0, 0, 0]) == 0
    assert unbiased_variance([0, 1]) == 0.5
    with pytest.raises(DomainError):
        unbiased_variance([1.0])


def test_unbiased_variance_fixture_rational_oracle():
    xs = [Fraction(str(x)) for x in FIXTURE]
    mean = sum(xs) / len(xs)
    exact = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    assert unbiased_variance(FIXTURE) == pytest.approx(float(exact), rel=1e-13)


def test_t_statistic_examples():
    assert abs(t_statistic_from_moments(0.809403, 0.013607, 200, 0.81) - (-0.0723)) < 0.001
    assert abs(t_statistic_from_moments(0.903492, 0.006513, 200, 0.9) - 0.6119) < 0.001
    assert t_statistic([0.25, 0.5, 0.75], 0.5) == 0.0


def test_t_statistic_matches_scipy():
    res = sps.ttest_1samp(FIXTURE, 0.81)
    assert t_statistic(FIXTURE, 0.81) == pytest.approx(res.statistic, rel=1e-12)


def test_t_statistic_degenerate():
    with pytest.raises(DegenerateSampleError):
        t_statistic([0.5, 0.5, 0.5], 0.4)
    with pytest.raises(DomainError):
        t_statistic([0.5], 0.4)


@settings(max_examples=200)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=30), st.floats(0.0, 1.0),
       st.floats(0.01, 100.0))
def test_t_statistic_sign_and_scale(samples, mu0, c):
    if unbiased_variance(samples) < 1e-9:
        return
    t = t_statistic(samples, mu0)
    diff = float(np.mean(samples)) - mu0
    if abs(diff) > 1e-9:
        assert math.copysign(1, t) == math.copysign(1, diff)
    scaled = t_statistic([c * x for x in samples], c * mu0)
    assert scaled == pytest.approx(t, rel=1e-6, abs=1e-6)


def test_t_test_report():
    r = t_test(FIXTURE, 0.81)
    assert r.n == 12 and r.critical == pytest.approx(sps.t.ppf(0.975, 11), abs=1e-6)
    assert r.accepted == (abs(r.statistic) < r.critical)
    assert r.variance >= 0


def test_collect_trials_shape_and_seeds():
    res = collect_trials(get_case(3), n_trials=5, master_seed=4)
    assert [r.seed_set for r in res] == [(4, 3, i) for i in range(5)]
    assert all(0 <= r.mean_normalized_power <= 1 for r in res)
    again = collect_trials(get_case(3), n_trials=5, master_seed=4)
    assert res == again


def test_identical_seeds_are_degenerate():
    with pytest.raises(DegenerateSampleError):
        run_trials(get_case(0), n_trials=2, trial_seeds=[7, 7])


def test_trials_reject_bad_arguments():
    with pytest.raises(DomainError):
        collect_trials(get_case(0), n_trials=1)
    with pytest.raises(DomainError):
        collect_trials(get_case(0), n_trials=3, trial_seeds=[1, 2])
    with pytest.raises(DomainError):
        collect_trials(get_case(0), n_trials=3, window_s=1e-6)


def test_case0_accepted():
    _, report = run_trials(get_case(0))
    assert report.n == 200 and report.accepted


def test_case12_mean():
    _, report = run_trials(get_case(12))
    assert abs(report.mean - 0.45) < 0.03


def test_all_ones_trial_is_exactly_one():

    res = collect_trials(ALL_ONES, n_trials=3)
    assert all(r.mean_normalized_power == pytest.approx(1.0) for r in res)


def test_rejection_rate_under_null():
    # the simulator generates data under H0, so rejections should occur at rate alpha
    case = get_case(1)
    rejected = 0
    reps = 1000
    for rep in range(reps):
        res = collect_trials(case, n_trials=20, master_seed=10_000 + rep)
        rejected += not t_test([r.mean_normalized_power for r in res], case.target).accepted
    assert abs(rejected / reps - 0.05) <= 0.02


def test_report_csv(tmp_path):
    r = t_test(FIXTURE, 0.81)
    path = tmp_path / "report.csv"
    write_report_csv([("0", r)], path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[1][0] == "0" and float(rows[1][1]) == pytest.approx(r.mean, abs=1e-6)
