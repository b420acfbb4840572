"""Synthetic cohorts from fully specified structural equations, and
brute-force ground-truth path-specific effects.

The generator and the truth computation implement the structural system
directly (their own trajectory code, hazard integration, and inversion
sampler) so they stay an independent check on the estimation engine rather
than a re-export of it.  The only shared pieces are the data types they
must emit.

Conventions shared with the engine because they define the estimand:
mediator measurement k happens at ``visit_times[k-1]``; a death drawn in
window k occurs at the window midpoint (the last window ends at the
horizon); hazard accumulation and person-time stop at death or horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .cohort import (CENSORED, COMPETING_DEATH, OUTCOME, CohortDataset,
                     SubjectRecord, validate_cohort)
from .engine import EFFECT_NAMES, FittedModelSet, PER_PERSON_YEARS
from .errors import HazardNegativityBudgetExceeded
from .estimators import (AdditiveHazardsFit, LinearModelFit, LogisticModelFit,
                         StepLinearCumhaz, expit)

#: Maximum tolerated fraction of subject draws rejected for negative hazards.
NEGATIVITY_BUDGET = 1e-3
_MAX_REDRAW_ROUNDS = 100


@dataclass(frozen=True)
class MediatorEquation:
    """Linear mediator law for one visit; ``lag`` is ignored at visit 1."""

    intercept: float
    lag: float
    exposure: float
    baseline: tuple
    noise_sd: float

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


@dataclass(frozen=True)
class DeathEquation:
    """Logistic death law for one window, on the same-visit mediator."""

    intercept: float
    mediator: float
    exposure: float
    baseline: tuple


@dataclass(frozen=True)
class OutcomeEquation:
    """Additive hazard: rate = baseline_hazard + exposure*A + mediator*M(t) + baseline.L0."""

    baseline_hazard: float
    exposure: float
    mediator: float
    baseline: tuple


@dataclass(frozen=True)
class StructuralDGP:
    """Fully specified structural system on a K-visit grid."""

    n_visits: int
    visit_times: tuple
    horizon: float
    exposure_mean: float
    exposure_sd: float
    baseline_means: tuple
    baseline_sds: tuple          # entries of 0 give fixed covariates
    mediator: tuple              # K MediatorEquation
    death: tuple                 # K DeathEquation
    outcome: OutcomeEquation

    def __post_init__(self):
        if len(self.mediator) != self.n_visits or len(self.death) != self.n_visits:
            raise ValueError("need one mediator and one death equation per visit")
        if len(self.baseline_means) != len(self.baseline_sds):
            raise ValueError("baseline_means and baseline_sds must have equal length")
        for eq in list(self.mediator) + list(self.death):
            if len(eq.baseline) != len(self.baseline_means):
                raise ValueError("equation baseline coefficients must match covariate count")
        if len(self.outcome.baseline) != len(self.baseline_means):
            raise ValueError("outcome baseline coefficients must match covariate count")

    @property
    def n_baseline(self):
        return len(self.baseline_means)

    def to_dict(self):
        return {
            "n_visits": self.n_visits,
            "visit_times": list(self.visit_times),
            "horizon": self.horizon,
            "exposure": {"mean": self.exposure_mean, "sd": self.exposure_sd},
            "baseline": {"means": list(self.baseline_means), "sds": list(self.baseline_sds)},
            "mediator": [{"intercept": m.intercept, "lag": m.lag, "exposure": m.exposure,
                          "baseline": list(m.baseline), "noise_sd": m.noise_sd}
                         for m in self.mediator],
            "death": [{"intercept": d.intercept, "mediator": d.mediator,
                       "exposure": d.exposure, "baseline": list(d.baseline)}
                      for d in self.death],
            "outcome": {"baseline_hazard": self.outcome.baseline_hazard,
                        "exposure": self.outcome.exposure,
                        "mediator": self.outcome.mediator,
                        "baseline": list(self.outcome.baseline)},
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            n_visits=int(doc["n_visits"]),
            visit_times=tuple(float(t) for t in doc["visit_times"]),
            horizon=float(doc["horizon"]),
            exposure_mean=float(doc["exposure"]["mean"]),
            exposure_sd=float(doc["exposure"]["sd"]),
            baseline_means=tuple(float(v) for v in doc["baseline"]["means"]),
            baseline_sds=tuple(float(v) for v in doc["baseline"]["sds"]),
            mediator=tuple(MediatorEquation(float(m["intercept"]), float(m.get("lag", 0.0)),
                                            float(m["exposure"]),
                                            tuple(float(v) for v in m["baseline"]),
                                            float(m["noise_sd"]))
                           for m in doc["mediator"]),
            death=tuple(DeathEquation(float(d["intercept"]), float(d["mediator"]),
                                      float(d["exposure"]),
                                      tuple(float(v) for v in d["baseline"]))
                        for d in doc["death"]),
            outcome=OutcomeEquation(float(doc["outcome"]["baseline_hazard"]),
                                    float(doc["outcome"]["exposure"]),
                                    float(doc["outcome"]["mediator"]),
                                    tuple(float(v) for v in doc["outcome"]["baseline"])),
        )


@dataclass(frozen=True)
class TrueEffects:
    """Ground-truth effects with per-effect Monte Carlo standard errors."""

    hazard_diff: dict        # name -> value (per 100,000 person-years)
    hazard_diff_se: dict
    surv_prob_diff: dict     # name -> percentage points
    surv_prob_diff_se: dict
    n_mc: int
    rejected_draws: int


def _windows(dgp):
    vt = np.asarray(dgp.visit_times, dtype=float)
    k = dgp.n_visits
    starts = vt[:k]
    death_ends = np.concatenate([vt[1:k], [dgp.horizon]])
    return starts, death_ends, (starts + death_ends) / 2.0


def _trajectories(dgp, a_mediator, a_death, l0, z_noise, u_death):
    """Latent mediator values and death windows, death-truncated.

    ``a_mediator``/``a_death`` are what the mediator and death equations see;
    arrays for observational draws, scalars for regime-slotted counterfactuals.
    """
    n, k = z_noise.shape
    med = np.full((n, k), np.nan)
    death_window = np.zeros(n, dtype=int)
    alive = np.ones(n, dtype=bool)
    lag = np.zeros(n)
    for kk in range(k):
        meq = dgp.mediator[kk]
        mean = meq.intercept + (meq.lag * lag if kk > 0 else 0.0) \
            + meq.exposure * a_mediator + l0 @ np.asarray(meq.baseline)
        value = mean + meq.noise_sd * z_noise[:, kk]
        med[:, kk] = np.where(alive, value, np.nan)
        deq = dgp.death[kk]
        p = expit(deq.intercept + deq.mediator * value + deq.exposure * a_death
                  + l0 @ np.asarray(deq.baseline))
        dies = alive & (u_death[:, kk] < p)
        death_window[dies] = kk + 1
        alive &= ~dies
        lag = np.where(alive, med[:, kk], lag)
    return med, death_window


def _hazards(dgp, a_outcome, l0, med):
    """Per-window additive hazard along a (possibly NaN-truncated) mediator path."""
    oe = dgp.outcome
    fixed = oe.baseline_hazard + oe.exposure * a_outcome + l0 @ np.asarray(oe.baseline)
    return fixed[:, None] + oe.mediator * np.nan_to_num(med)


def _active_lengths(dgp, death_window, stop_at):
    """Window lengths while alive and before ``stop_at`` (per-subject)."""
    starts, death_ends, midpoints = _windows(dgp)
    k = dgp.n_visits
    death_time = np.where(death_window > 0, midpoints[np.maximum(death_window - 1, 0)], np.inf)
    t_stop = np.minimum(death_time, stop_at)
    ends = np.concatenate([death_ends[:-1], [np.inf]])
    lens = np.clip(np.minimum(ends[None, :], t_stop[:, None]) - starts[None, :], 0.0, None)
    return lens, t_stop, death_time


def generate_cohort(dgp, n, seed):
    """Simulate ``n`` subjects and emit a valid :class:`CohortDataset`.

    Event times come from the piecewise-constant additive hazard by exact
    inversion within each window; the mediator and death processes continue
    past a nonfatal outcome (only death truncates them).  Subject draws whose
    realized hazard goes negative on an active window are rejected and
    redrawn; the run fails if rejections exceed the 0.1% budget.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = dgp.n_visits
    p = dgp.n_baseline
    starts, death_ends, midpoints = _windows(dgp)

    a = np.empty(n)
    l0 = np.empty((n, p))
    med = np.empty((n, k))
    death_window = np.empty(n, dtype=int)
    exp_draw = np.empty(n)

    pending = np.arange(n)
    rejected = 0
    for attempt in range(_MAX_REDRAW_ROUNDS):
        if pending.size == 0:
            break
        gen = streams.stream(seed, streams.GEN_SUBJECT, attempt)
        a_try = gen.normal(dgp.exposure_mean, dgp.exposure_sd, size=n)[pending]
        l0_try = (np.asarray(dgp.baseline_means)
                  + gen.standard_normal((n, p))[pending] * np.asarray(dgp.baseline_sds))
        z_try = gen.standard_normal((n, k))[pending]
        u_try = gen.random((n, k))[pending]
        e_try = gen.standard_exponential(n)[pending]

        med_try, dw_try = _trajectories(dgp, a_try, a_try, l0_try, z_try, u_try)
        haz = _hazards(dgp, a_try, l0_try, med_try)
        lens, _, _ = _active_lengths(dgp, dw_try, np.full(pending.size, dgp.horizon))
        bad = np.any((haz < 0) & (lens > 0), axis=1)
        good = ~bad
        keep = pending[good]
        a[keep] = a_try[good]
        l0[keep] = l0_try[good]
        med[keep] = med_try[good]
        death_window[keep] = dw_try[good]
        exp_draw[keep] = e_try[good]
        rejected += int(bad.sum())
        pending = pending[bad]
    if pending.size:
        raise HazardNegativityBudgetExceeded(
            f"{pending.size} subjects still invalid after {_MAX_REDRAW_ROUNDS} redraw rounds")
    if rejected > NEGATIVITY_BUDGET * (n + rejected):
        raise HazardNegativityBudgetExceeded(
            f"rejected {rejected} of {n + rejected} draws (> {NEGATIVITY_BUDGET:.1%})")

    haz = _hazards(dgp, a, l0, med)
    lens, t_stop, death_time = _active_lengths(dgp, death_window, np.full(n, dgp.horizon))
    cum = np.cumsum(haz * lens, axis=1)

    # exact inversion of the piecewise-constant cumulative hazard
    fires = exp_draw < cum[:, -1]
    first = np.argmax(exp_draw[:, None] < cum, axis=1)
    prev = np.where(first > 0, np.take_along_axis(cum, np.maximum(first - 1, 0)[:, None],
                                                  axis=1)[:, 0], 0.0)
    h_at = np.take_along_axis(haz, first[:, None], axis=1)[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_event = starts[first] + (exp_draw - prev) / h_at
    outcome_hit = fires & (t_event < death_time)

    event_time = np.where(outcome_hit, t_event,
                          np.where(death_time <= dgp.horizon, death_time, dgp.horizon))
    flag = np.where(outcome_hit, 0, np.where(death_time <= dgp.horizon, 1, 2))
    flag_names = (OUTCOME, COMPETING_DEATH, CENSORED)

    width = max(6, len(str(n)))
    subjects = []
    k_grid = np.arange(1, k + 1)
    death_vec = (death_window[:, None] > 0) & (k_grid[None, :] >= death_window[:, None])
    for i in range(n):
        subjects.append(SubjectRecord(
            id=f"s{i + 1:0{width}d}",
            exposure=float(a[i]),
            baseline_covariates=l0[i],
            mediator=med[i],
            death_indicator=death_vec[i].astype(np.int8),
            event_time=float(event_time[i]),
            event_flag=flag_names[flag[i]],
        ))
    cohort = CohortDataset(subjects=tuple(subjects), n_visits=k,
                           visit_times=tuple(dgp.visit_times), horizon=dgp.horizon)
    return validate_cohort(cohort)


def _phi_truth(dgp, regime, l0, z_noise, u_death):
    """(rate, prob, per-subject cumulative hazard, person-time) for one regime."""
    a_outcome, a_death, a_mediator = regime
    med, death_window = _trajectories(dgp, a_mediator, a_death, l0, z_noise, u_death)
    haz = _hazards(dgp, a_outcome, l0, med)
    lens, t_stop, _ = _active_lengths(dgp, death_window, np.full(l0.shape[0], dgp.horizon))
    if np.any((haz < 0) & (lens > 0)):
        raise AssertionError("negative hazard slipped past the rejection step")
    cum = (haz * lens).sum(axis=1)
    rate = float(cum.sum() / t_stop.sum() * PER_PERSON_YEARS)
    prob_each = np.exp(-cum)
    return rate, float(prob_each.mean()), cum, t_stop, prob_each


def true_effects(dgp, contrast, n_mc, seed):
    """Ground-truth effects by Monte Carlo on the structural equations.

    Each regime slots its exposure levels directly into the structural
    equations (mediator equations see ``a_mediator`` and so on) with common
    random numbers across regimes.  Draws with a negative realized hazard
    under any regime are rejected jointly and redrawn, within the 0.1%
    budget.  Standard errors use the per-subject paired contrasts (delta
    method on the rate ratio scale).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    a, a_star = contrast.a_ref, contrast.a_cmp
    regimes = {
        "ref-ref-ref": (a, a, a),
        "cmp-ref-ref": (a_star, a, a),
        "cmp-cmp-ref": (a_star, a_star, a),
        "cmp-cmp-cmp": (a_star, a_star, a_star),
        "cmp-ref-cmp": (a_star, a, a_star),
    }
    k = dgp.n_visits
    p = dgp.n_baseline

    l0 = np.empty((n_mc, p))
    z_noise = np.empty((n_mc, k))
    u_death = np.empty((n_mc, k))
    pending = np.arange(n_mc)
    rejected = 0
    for attempt in range(_MAX_REDRAW_ROUNDS):
        if pending.size == 0:
            break
        gen = streams.stream(seed, streams.ORACLE_WORLD, attempt)
        l0_try = (np.asarray(dgp.baseline_means)
                  + gen.standard_normal((n_mc, p))[pending] * np.asarray(dgp.baseline_sds))
        z_try = gen.standard_normal((n_mc, k))[pending]
        u_try = gen.random((n_mc, k))[pending]
        bad = np.zeros(pending.size, dtype=bool)
        for regime in regimes.values():
            a_out, a_d, a_m = regime
            med_r, dw_r = _trajectories(dgp, a_m, a_d, l0_try, z_try, u_try)
            haz_r = _hazards(dgp, a_out, l0_try, med_r)
            lens_r, _, _ = _active_lengths(dgp, dw_r, np.full(pending.size, dgp.horizon))
            bad |= np.any((haz_r < 0) & (lens_r > 0), axis=1)
        good = ~bad
        keep = pending[good]
        l0[keep] = l0_try[good]
        z_noise[keep] = z_try[good]
        u_death[keep] = u_try[good]
        rejected += int(bad.sum())
        pending = pending[bad]
    if pending.size:
        raise HazardNegativityBudgetExceeded(
            f"{pending.size} oracle draws still invalid after {_MAX_REDRAW_ROUNDS} rounds")
    if rejected > NEGATIVITY_BUDGET * (n_mc + rejected):
        raise HazardNegativityBudgetExceeded(
            f"rejected {rejected} of {n_mc + rejected} oracle draws (> {NEGATIVITY_BUDGET:.1%})")

    per = {label: _phi_truth(dgp, regime, l0, z_noise, u_death)
           for label, regime in regimes.items()}

    contrasts = {
        "DE": ("cmp-ref-ref", "ref-ref-ref"),
        "IEM": ("cmp-cmp-cmp", "cmp-cmp-ref"),
        "IED": ("cmp-cmp-ref", "cmp-ref-ref"),
        "TE": ("cmp-cmp-cmp", "ref-ref-ref"),
        "DE_plus_IEM": ("cmp-ref-cmp", "ref-ref-ref"),
    }

    def rate_influence(label):
        rate, _, cum, t_stop, _ = per[label]
        t_bar = t_stop.mean()
        return (cum - (rate / PER_PERSON_YEARS) * t_stop) / t_bar * PER_PERSON_YEARS

    hazard, hazard_se, surv, surv_se = {}, {}, {}, {}
    for name in EFFECT_NAMES:
        hi, lo = contrasts[name]
        hazard[name] = per[hi][0] - per[lo][0]
        infl = rate_influence(hi) - rate_influence(lo)
        hazard_se[name] = float(infl.std(ddof=1) / math.sqrt(n_mc))
        diff_pp = (per[hi][4] - per[lo][4]) * 100.0
        surv[name] = per[hi][1] * 100.0 - per[lo][1] * 100.0
        surv_se[name] = float(diff_pp.std(ddof=1) / math.sqrt(n_mc))
    return TrueEffects(hazard_diff=hazard, hazard_diff_se=hazard_se,
                       surv_prob_diff=surv, surv_prob_diff_se=surv_se,
                       n_mc=n_mc, rejected_draws=rejected)


def model_set_from_dgp(dgp):
    """Engine model set carrying the true structural parameters.

    Lets the simulation engine run at known coefficients, which makes the
    exact-null contrasts testable and separates simulation correctness from
    fitting error.
    """
    l0_names = tuple(f"l0_{j + 1}" for j in range(dgp.n_baseline))
    mediator_models = []
    for kk, meq in enumerate(dgp.mediator):
        if kk == 0:
            coef = np.array([meq.intercept, meq.exposure, *meq.baseline])
            names = ("intercept", "exposure") + l0_names
        else:
            coef = np.array([meq.intercept, meq.lag, meq.exposure, *meq.baseline])
            names = ("intercept", "mediator_lag", "exposure") + l0_names
        mediator_models.append(LinearModelFit(coefficients=coef, residual_sd=meq.noise_sd,
                                              design_column_names=names))
    death_models = tuple(
        LogisticModelFit(coefficients=np.array([d.intercept, d.mediator, d.exposure,
                                                *d.baseline]),
                         converged=True, iterations=0,
                         design_column_names=("intercept", "mediator", "exposure") + l0_names)
        for d in dgp.death)
    outcome = AdditiveHazardsFit(
        coefficients=np.array([dgp.outcome.exposure, dgp.outcome.mediator,
                               *dgp.outcome.baseline]),
        baseline_cumhaz=StepLinearCumhaz.linear(dgp.outcome.baseline_hazard),
        covariate_names=("exposure", "mediator") + l0_names)
    return FittedModelSet(mediator_models=tuple(mediator_models),
                          death_models=death_models, outcome_model=outcome,
                          n_visits=dgp.n_visits, n_baseline=dgp.n_baseline)
