import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _dgps import (GRID, HORIZON, death_only_dgp, deathless_dgp, nontrivial_dgp,
                   null_dgp)
from medgformula import (ExposureContrast, StructuralDGP, generate_cohort,
                         true_effects, write_cohort_csv)
from medgformula.cohort import collect_violations
from medgformula.errors import HazardNegativityBudgetExceeded
from medgformula.estimators import expit
from medgformula.oracle import (DeathEquation, MediatorEquation,
                                OutcomeEquation)
from medgformula.streams import ORACLE_WORLD, stream

CONTRAST = ExposureContrast(a_ref=-0.6745, a_cmp=0.6745)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_generated_cohorts_always_validate(seed):
    cohort = generate_cohort(nontrivial_dgp(), 80, seed=seed)
    assert collect_violations(cohort) == []


def test_generation_is_seed_deterministic(tmp_path):
    a = generate_cohort(nontrivial_dgp(), 100, seed=9)
    b = generate_cohort(nontrivial_dgp(), 100, seed=9)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_cohort_csv(a, pa)
    write_cohort_csv(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = generate_cohort(nontrivial_dgp(), 100, seed=10)
    pc = tmp_path / "c.csv"
    write_cohort_csv(c, pc)
    assert pa.read_bytes() != pc.read_bytes()


def test_floored_death_intercepts_give_no_deaths():
    cohort = generate_cohort(deathless_dgp(), 10_000, seed=11)
    assert all(s.event_flag != "competing_death" for s in cohort.subjects)
    assert all(not np.any(s.death_indicator) for s in cohort.subjects)


def test_constant_hazard_marginal_matches_exponential():
    lam = 0.07
    dgp = StructuralDGP(
        n_visits=3, visit_times=GRID, horizon=HORIZON,
        exposure_mean=0.0, exposure_sd=1.0,
        baseline_means=(0.0,), baseline_sds=(1.0,),
        mediator=tuple(MediatorEquation(0.0, 0.0, 0.0, (0.0,), 1.0) for _ in range(3)),
        death=tuple(DeathEquation(-20.0, 0.0, 0.0, (0.0,)) for _ in range(3)),
        outcome=OutcomeEquation(lam, 0.0, 0.0, (0.0,)),
    )
    n = 20_000
    cohort = generate_cohort(dgp, n, seed=12)
    times = np.array([s.event_time for s in cohort.subjects])
    is_outcome = np.array([s.event_flag == "outcome" for s in cohort.subjects])
    for t in (3.0, 8.0, 15.0):
        surv_true = math.exp(-lam * t)
        surv_emp = float(np.mean(~(is_outcome & (times <= t))))
        se = math.sqrt(surv_true * (1 - surv_true) / n)
        assert abs(surv_emp - surv_true) <= 3 * se


def test_true_effects_all_zero_exposure():
    truth = true_effects(null_dgp(), CONTRAST, n_mc=20_000, seed=13)
    for name in truth.hazard_diff:
        assert truth.hazard_diff[name] == 0.0
        assert truth.surv_prob_diff[name] == 0.0


def test_true_effects_death_only_slots():
    truth = true_effects(death_only_dgp(), CONTRAST, n_mc=20_000, seed=14)
    assert truth.hazard_diff["DE"] == 0.0
    assert truth.hazard_diff["IEM"] == 0.0
    assert truth.surv_prob_diff["DE"] == 0.0
    assert truth.surv_prob_diff["IEM"] == 0.0
    assert truth.hazard_diff["IED"] == truth.hazard_diff["TE"]
    assert truth.hazard_diff["IED"] != 0.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_true_effects_telescoping(seed):
    truth = true_effects(nontrivial_dgp(), CONTRAST, n_mc=2_000, seed=seed)
    for values in (truth.hazard_diff, truth.surv_prob_diff):
        total = values["TE"]
        parts = values["DE"] + values["IEM"] + values["IED"]
        assert abs(parts - total) <= 1e-12 * max(abs(total), 1.0)


def test_true_effects_seed_invariance_within_mc_error():
    runs = [true_effects(nontrivial_dgp(), CONTRAST, n_mc=40_000, seed=s)
            for s in (1, 2, 3, 4, 5)]
    for name in ("DE", "IEM", "IED", "TE", "DE_plus_IEM"):
        vals = np.array([r.hazard_diff[name] for r in runs])
        ses = np.array([r.hazard_diff_se[name] for r in runs])
        spread = vals.max() - vals.min()
        # extremes of 5 replicates stay within a few combined SEs
        assert spread <= 6 * math.hypot(ses.max(), ses.max()) + 1e-9


def test_true_effects_ied_negative_on_rate_scale_for_harmful_exposure():
    truth = true_effects(nontrivial_dgp(), CONTRAST, n_mc=150_000, seed=15)
    assert truth.hazard_diff["DE"] > 0       # harmful direct effect
    assert truth.hazard_diff["IED"] < 0      # deaths remove outcome opportunity
    assert truth.surv_prob_diff["IED"] > 0   # dying first leaves you outcome-free


def test_survival_weighting_identity():
    # P(alive through all windows) two ways: simulated death trajectories vs
    # mediator-path weighting by the product of per-window survival odds.
    dgp = nontrivial_dgp()
    n = 200_000
    for a_death, a_med in ((CONTRAST.a_ref, CONTRAST.a_ref),
                           (CONTRAST.a_cmp, CONTRAST.a_ref)):
        gen = stream(99, ORACLE_WORLD, 7)
        l0 = (np.asarray(dgp.baseline_means)
              + gen.standard_normal((n, dgp.n_baseline)) * np.asarray(dgp.baseline_sds))
        z = gen.standard_normal((n, dgp.n_visits))
        u = gen.random((n, dgp.n_visits))

        # route 1: explicit death draws
        from medgformula.oracle import _trajectories
        _, death_window = _trajectories(dgp, a_med, a_death, l0, z, u)
        p_sim = float((death_window == 0).mean())

        # route 2: weighting, mediators simulated without any death gating
        weight = np.ones(n)
        lag = np.zeros(n)
        for kk in range(dgp.n_visits):
            meq = dgp.mediator[kk]
            mean = meq.intercept + (meq.lag * lag if kk else 0.0) \
                + meq.exposure * a_med + l0 @ np.asarray(meq.baseline)
            m = mean + meq.noise_sd * z[:, kk]
            deq = dgp.death[kk]
            p_die = expit(deq.intercept + deq.mediator * m + deq.exposure * a_death
                          + l0 @ np.asarray(deq.baseline))
            weight *= 1.0 - p_die
            lag = m
        p_weight = float(weight.mean())

        se = math.sqrt(p_sim * (1 - p_sim) / n)
        assert abs(p_sim - p_weight) <= 4 * se


def test_negativity_budget_enforced():
    bad = StructuralDGP(
        n_visits=3, visit_times=GRID, horizon=HORIZON,
        exposure_mean=0.0, exposure_sd=1.0,
        baseline_means=(0.0,), baseline_sds=(1.0,),
        mediator=tuple(MediatorEquation(0.0, 0.0, 0.0, (0.0,), 1.0) for _ in range(3)),
        death=tuple(DeathEquation(-20.0, 0.0, 0.0, (0.0,)) for _ in range(3)),
        outcome=OutcomeEquation(0.01, 0.0, 0.05, (0.0,)),  # often negative
    )
    with pytest.raises(HazardNegativityBudgetExceeded):
        generate_cohort(bad, 2000, seed=16)


def test_generate_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        generate_cohort(nontrivial_dgp(), 0, seed=1)
    with pytest.raises(ValueError):
        true_effects(nontrivial_dgp(), CONTRAST, n_mc=0, seed=1)


def test_dgp_dict_roundtrip():
    dgp = nontrivial_dgp()
    back = StructuralDGP.from_dict(dgp.to_dict())
    assert back == dgp
