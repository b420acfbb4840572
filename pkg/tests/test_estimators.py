import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medgformula import (ClampCounter, PiecewisePath, StepLinearCumhaz,
                         fit_additive_hazards, fit_linear, fit_logistic,
                         predict_hazard_rate, predict_survival)
from medgformula.cohort import CountingProcessTable
from medgformula.errors import (DimensionMismatch, HorizonBeforeZero,
                                InsufficientRows, NoEvents, RankDeficientDesign,
                                SeparationSuspected, SingleClassResponse)
from medgformula.estimators import _linying_system


def single_interval_table(times, events, x):
    """One (0, t] row per subject with a single covariate column ``exposure``."""
    n = times.shape[0]
    return CountingProcessTable(
        subject_index=np.arange(n), subject_id=tuple(map(str, range(n))),
        t_start=np.zeros(n), t_stop=np.asarray(times, dtype=float),
        outcome_event=np.asarray(events, dtype=np.int8),
        exposure=np.asarray(x, dtype=float), baseline=np.empty((n, 0)),
        mediator=np.zeros(n), l0_names=())


# --- ordinary least squares -------------------------------------------------

def test_ols_exact_line():
    fit = fit_linear([[1, 0], [1, 1], [1, 2]], [1, 3, 5])
    assert np.allclose(fit.coefficients, [1.0, 2.0], atol=1e-12)
    assert fit.residual_sd == pytest.approx(0.0, abs=1e-12)


def test_ols_intercept_only():
    fit = fit_linear([[1.0]] * 4, [4.0] * 4)
    assert fit.coefficients[0] == pytest.approx(4.0, abs=1e-12)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(0)
    x = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = rng.normal(size=50)
    oracle = np.linalg.solve(x.T @ x, x.T @ y)
    fit = fit_linear(x, y)
    assert np.max(np.abs(fit.coefficients - oracle)) <= 1e-8


def test_ols_residual_sd_uses_unbiased_denominator():
    rng = np.random.default_rng(1)
    x = np.column_stack([np.ones(40), rng.normal(size=40)])
    y = rng.normal(size=40)
    fit = fit_linear(x, y)
    resid = y - x @ fit.coefficients
    assert fit.residual_sd == pytest.approx(math.sqrt(resid @ resid / (40 - 2)), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_ols_residuals_orthogonal_to_design(seed):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(30), rng.normal(size=(30, 3))])
    y = rng.normal(size=30)
    fit = fit_linear(x, y)
    resid = y - x @ fit.coefficients
    scale = np.abs(x).max() * np.abs(y).max() + 1.0
    assert np.max(np.abs(x.T @ resid)) <= 1e-8 * scale


def test_ols_insufficient_rows():
    with pytest.raises(InsufficientRows):
        fit_linear([[1.0, 0.0], [1.0, 1.0]], [0.0, 1.0])


def test_ols_rank_deficient():
    x = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(RankDeficientDesign):
        fit_linear(x, np.arange(10.0))


# --- logistic regression ----------------------------------------------------

def test_logistic_balanced_intercept_is_zero():
    y = np.array([0, 1] * 25)
    fit = fit_logistic(np.ones((50, 1)), y)
    assert fit.converged
    assert fit.coefficients[0] == 0.0


def test_logistic_quarter_prevalence_closed_form():
    y = np.array([1] * 25 + [0] * 75)
    fit = fit_logistic(np.ones((100, 1)), y)
    assert fit.coefficients[0] == pytest.approx(math.log(1 / 3), abs=1e-6)


def _newton_oracle(x, y, iters=200):
    """Independent textbook Newton solver used as the reference."""
    beta = np.zeros(x.shape[1])
    for _ in range(iters):
        eta = x @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = x.T @ (y - p)
        w = p * (1 - p)
        hess = x.T @ (x * w[:, None])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-13:
            break
    return beta


def test_logistic_matches_newton_oracle():
    rng = np.random.default_rng(7)
    x = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
    truth = np.array([-0.4, 0.8, -0.6])
    y = (rng.random(200) < 1.0 / (1.0 + np.exp(-(x @ truth)))).astype(float)
    fit = fit_logistic(x, y)
    assert np.max(np.abs(fit.coefficients - _newton_oracle(x, y))) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_logistic_score_small_at_solution(seed):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(150), rng.normal(size=150)])
    y = (rng.random(150) < 0.4).astype(float)
    if y.min() == y.max():
        return
    fit = fit_logistic(x, y)
    p = 1.0 / (1.0 + np.exp(-(x @ fit.coefficients)))
    assert np.max(np.abs(x.T @ (y - p))) <= 1e-6


def test_logistic_single_class():
    with pytest.raises(SingleClassResponse):
        fit_logistic(np.ones((20, 1)), np.zeros(20))


def test_logistic_separation_detected():
    x = np.column_stack([np.ones(20), np.arange(20.0)])
    y = (np.arange(20) >= 10).astype(float)  # perfectly separated
    with pytest.raises(SeparationSuspected):
        fit_logistic(x, y)


# --- additive hazards -------------------------------------------------------

def test_linying_symmetric_groups_give_zero():
    rng = np.random.default_rng(3)
    t = rng.exponential(8.0, size=200)
    times = np.concatenate([t, t])
    events = np.ones(400, dtype=int)
    x = np.concatenate([np.zeros(200), np.ones(200)])
    fit = fit_additive_hazards(single_interval_table(times, events, x),
                               covariates=("exposure",))
    assert abs(fit.coefficients[0]) <= 1e-10


def test_linying_recovers_exponential_rate_difference():
    rng = np.random.default_rng(11)
    n = 10_000
    x = np.repeat([0.0, 1.0], n // 2)
    rate = 0.10 + 0.05 * x
    times = rng.exponential(1.0 / rate)
    fit = fit_additive_hazards(single_interval_table(times, np.ones(n, int), x),
                               covariates=("exposure",))
    assert abs(fit.coefficients[0] - 0.05) <= 0.01


def test_linying_no_events():
    with pytest.raises(NoEvents):
        fit_additive_hazards(single_interval_table(np.ones(5), np.zeros(5, int),
                                                   np.arange(5.0)),
                             covariates=("exposure",))


def test_linying_estimating_equation_residual():
    rng = np.random.default_rng(5)
    n = 500
    x = rng.normal(size=n)
    times = rng.exponential(1.0 / (0.2 + 0.05 * (x - x.min())))
    table = single_interval_table(times, np.ones(n, int), x)
    fit = fit_additive_hazards(table, covariates=("exposure",))
    a_mat, b_vec, *_ = _linying_system(table, ("exposure",))
    resid = b_vec - a_mat @ fit.coefficients
    scale = np.abs(b_vec).max() + np.abs(a_mat).max() * np.abs(fit.coefficients).max() + 1.0
    assert np.max(np.abs(resid)) <= 1e-8 * scale


def test_linying_permuted_covariate_is_null():
    rng = np.random.default_rng(13)
    n = 1500
    x = rng.normal(size=n)
    times = rng.exponential(1.0 / 0.15, size=n)  # independent of x by construction
    betas = []
    for rep in range(30):
        perm = np.random.default_rng(rep).permutation(n)
        table = single_interval_table(times, np.ones(n, int), x[perm])
        betas.append(fit_additive_hazards(table, covariates=("exposure",)).coefficients[0])
    betas = np.array(betas)
    # mean of the permutation distribution should sit within 3 MC SEs of zero
    assert abs(betas.mean()) <= 3 * betas.std(ddof=1) / math.sqrt(len(betas))


def test_linying_tied_event_times_single_jump():
    # Two events at t=5 with x=(1,0,0), censoring at 10.  By hand:
    # A = 5 * (1 - 1/3) = 10/3, b = (1 - 1/3) + (0 - 1/3) = 1/3, beta = 0.1.
    # Baseline jump at 5 is dN/R = 2/3 in one go; drift is -beta * xbar = -1/30,
    # so cumhaz(5) = 2/3 - 5/30 = 1/2.
    times = np.array([5.0, 5.0, 10.0])
    events = np.array([1, 1, 0])
    x = np.array([1.0, 0.0, 0.0])
    fit = fit_additive_hazards(single_interval_table(times, events, x),
                               covariates=("exposure",))
    assert fit.coefficients[0] == pytest.approx(0.1, rel=1e-12)
    assert fit.baseline_cumhaz(5.0) == pytest.approx(0.5, rel=1e-12)
    assert fit.baseline_cumhaz(4.999) == pytest.approx(-0.1 * 4.999 / 3, rel=1e-9)


# --- survival / rate predictions -------------------------------------------

def test_predict_survival_closed_form():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([0.0]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.1),
                             covariate_names=("exposure",))
    path = PiecewisePath.constant(np.array([3.0]))
    assert predict_survival(fit, path, 20.0) == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert predict_survival(fit, path, 0.0) == 1.0


def test_predict_survival_negative_horizon():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([0.0]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.1),
                             covariate_names=("exposure",))
    with pytest.raises(HorizonBeforeZero):
        predict_survival(fit, PiecewisePath.constant(np.array([0.0])), -1.0)


def test_predict_survival_monotone_in_horizon():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([0.02]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.05),
                             covariate_names=("exposure",))
    path = PiecewisePath(boundaries=np.array([5.0, np.inf]),
                         values=np.array([[1.0], [2.0]]))
    probs = [predict_survival(fit, path, t) for t in np.linspace(0, 30, 40)]
    assert all(a >= b - 1e-12 for a, b in zip(probs, probs[1:]))
    assert probs[0] == 1.0


def test_predict_survival_clamps_and_counts():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([-0.5]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.0),
                             covariate_names=("exposure",))
    counter = ClampCounter()
    prob = predict_survival(fit, PiecewisePath.constant(np.array([1.0])), 10.0,
                            clamp_counter=counter)
    assert prob == 1.0
    assert counter.count == 1


def test_predicted_survival_matches_exponential_truth():
    rng = np.random.default_rng(21)
    n = 20_000
    x = np.repeat([0.0, 1.0], n // 2)
    rate = 0.10 + 0.05 * x
    times = rng.exponential(1.0 / rate)
    fit = fit_additive_hazards(single_interval_table(times, np.ones(n, int), x),
                               covariates=("exposure",))
    for xv in (0.0, 1.0):
        path = PiecewisePath.constant(np.array([xv]))
        for t in (2.0, 5.0, 10.0):
            truth = math.exp(-(0.10 + 0.05 * xv) * t)
            assert predict_survival(fit, path, t) == pytest.approx(truth, abs=0.02)


def test_predict_hazard_rate():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([0.002, 0.0005]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.0),
                             covariate_names=("exposure", "mediator"))
    assert predict_hazard_rate(fit, [1.0, 10.0]) == pytest.approx(0.007, rel=1e-12)
    assert predict_hazard_rate(fit, [0.0, 0.0]) == 0.0
    with pytest.raises(DimensionMismatch):
        predict_hazard_rate(fit, [1.0, 2.0, 3.0])


def test_hazard_contrast_on_reporting_scale():
    from medgformula import AdditiveHazardsFit
    fit = AdditiveHazardsFit(coefficients=np.array([0.002, 0.0005]),
                             baseline_cumhaz=StepLinearCumhaz.linear(0.0),
                             covariate_names=("exposure", "mediator"))
    x_hi = np.array([2.0, 11.0])
    x_lo = np.array([1.0, 10.0])
    contrast = (predict_hazard_rate(fit, x_hi) - predict_hazard_rate(fit, x_lo)) * 100_000
    assert contrast == pytest.approx((0.002 * 1.0 + 0.0005 * 1.0) * 100_000, rel=1e-12)
