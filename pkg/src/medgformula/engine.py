"""Counterfactual simulation engine.

Fits the sequential model set (K mediator models, K death models, one
additive hazards outcome model), simulates coupled mediator/death
trajectories under dual exposure regimes, and computes the path-specific
effects on the rate and survival-probability scales.

A regime triple ``(a_outcome, a_death, a_mediator)`` routes possibly
different exposure levels to the outcome model, the death models, and the
mediator models.  With common random numbers (the default) all regimes in
one draw share a single uniform per (subject, visit) for the death Bernoulli
and a single standard normal per (subject, visit) for the mediator noise,
which makes several null contrasts exactly zero and shrinks Monte Carlo
variance of every contrast.

Simulated deaths are placed at the midpoint of their follow-up window
(windows end at the next measurement time; the last window ends at the
reporting horizon).  Person-time and outcome hazard accumulation stop at
that death time, matching the synthetic-cohort generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .cohort import as_arrays, to_counting_process
from .errors import EstimatorError, SingleClassResponse
from .estimators import (AdditiveHazardsFit, expit, fit_additive_hazards,
                         fit_linear, fit_logistic)

EFFECT_NAMES = ("DE", "IEM", "IED", "TE", "DE_plus_IEM")
PER_PERSON_YEARS = 100_000.0

#: Relative tolerance for the per-draw decomposition identity DE+IEM+IED=TE.
DECOMPOSITION_RTOL = 1e-10


@dataclass(frozen=True)
class ExposureContrast:
    """Reference and comparison exposure levels (e.g. 25th and 75th percentiles)."""

    a_ref: float
    a_cmp: float

    def __post_init__(self):
        if self.a_ref == self.a_cmp:
            raise ValueError("contrast levels must differ")


@dataclass(frozen=True)
class RegimeTriple:
    """Exposure levels routed to the outcome, death, and mediator models."""

    a_outcome: float
    a_death: float
    a_mediator: float

    def code(self, contrast):
        return streams.regime_code(self.a_outcome == contrast.a_cmp,
                                   self.a_death == contrast.a_cmp,
                                   self.a_mediator == contrast.a_cmp)

    def label(self, contrast):
        def tag(v):
            return "cmp" if v == contrast.a_cmp else "ref"
        return f"{tag(self.a_outcome)}-{tag(self.a_death)}-{tag(self.a_mediator)}"


@dataclass(frozen=True)
class ConstantDeathModel:
    """Downgraded death model used when a visit has a single observed class."""

    probability: float


@dataclass(frozen=True)
class FittedModelSet:
    """K mediator fits, K death fits, one outcome fit, with fixed column orders.

    Column orders the simulation relies on:
      mediator visit 1: (intercept, exposure, l0_1..l0_p)
      mediator visit k>1: (intercept, mediator_lag, exposure, l0_1..l0_p)
      death visit k: (intercept, mediator, exposure, l0_1..l0_p)
      outcome: (exposure, mediator, l0_1..l0_p)
    """

    mediator_models: tuple
    death_models: tuple
    outcome_model: AdditiveHazardsFit
    n_visits: int
    n_baseline: int
    degenerate_death_models: tuple = ()

    def __post_init__(self):
        if len(self.mediator_models) != self.n_visits or len(self.death_models) != self.n_visits:
            raise ValueError("model counts must equal n_visits")


@dataclass(frozen=True)
class EngineOptions:
    """Simulation switches.

    ``mediator_mode`` is "stochastic" (Gaussian noise with the fitted
    residual sd) or "deterministic" (conditional mean).  Turning off
    ``common_random_numbers`` gives every regime its own draw streams.
    """

    mediator_mode: str = "stochastic"
    common_random_numbers: bool = True

    def __post_init__(self):
        if self.mediator_mode not in ("stochastic", "deterministic"):
            raise ValueError(f"unknown mediator_mode {self.mediator_mode!r}")


@dataclass(frozen=True)
class CounterfactualWorld:
    """One simulated world: per-subject trajectories and outcome summaries."""

    regime: RegimeTriple
    mediator_paths: np.ndarray      # (n, K), NaN after simulated death
    survival_paths: np.ndarray      # (n, K) int8, non-increasing per row
    death_window: np.ndarray        # (n,) 0 = never, else 1..K
    death_time: np.ndarray          # (n,) +inf when never
    person_time: np.ndarray         # (n,) min(death_time, horizon)
    interval_hazards: np.ndarray    # (n, K) model-implied hazard per window portion
    cumulative_hazard: np.ndarray   # (n,) at min(death_time, horizon)
    outcome_free_prob: np.ndarray   # (n,) clamped to [0, 1]
    clamp_events: int


@dataclass(frozen=True)
class EffectEstimate:
    name: str
    hazard_diff: float        # cases per 100,000 person-years
    surv_prob_diff: float     # percentage points at the horizon


@dataclass(frozen=True)
class EffectTable:
    """Point estimates for one simulation draw, plus draw-level diagnostics."""

    mode: str                  # "competing_risks" | "conditional_on_survival"
    effects: dict
    phi_rate: dict             # regime label -> rate per 100,000 person-years
    phi_prob: dict             # regime label -> outcome-free probability
    person_time: dict          # regime label -> total simulated person-years
    clamp_events: int


# ---------------------------------------------------------------------------
# Model fitting.

def _tag(err, context):
    err.context = context
    return err


def fit_model_set(cohort):
    """Fit the sequential mediator/death models and the outcome model.

    Mediator model k is fit on subjects alive at the measurement time and
    still outcome-free and under observation there; death model k on
    subjects alive at the visit's mediator measurement.  A death model whose
    response has a single class is downgraded to a constant predictor and
    counted as degenerate.
    """
    arr = as_arrays(cohort)
    n, k, p = arr.n_subjects, arr.n_visits, arr.n_baseline
    vt = np.asarray(arr.visit_times)
    l0_names = tuple(f"l0_{j + 1}" for j in range(p))

    mediator_models = []
    for kk in range(k):
        measured = ~np.isnan(arr.mediator[:, kk])   # alive at the measurement
        in_risk_set = measured & (arr.event_time > vt[kk])
        response = arr.mediator[in_risk_set, kk]
        if kk == 0:
            design = np.column_stack([np.ones(in_risk_set.sum()),
                                      arr.exposure[in_risk_set],
                                      arr.baseline[in_risk_set]])
            names = ("intercept", "exposure") + l0_names
        else:
            design = np.column_stack([np.ones(in_risk_set.sum()),
                                      arr.mediator[in_risk_set, kk - 1],
                                      arr.exposure[in_risk_set],
                                      arr.baseline[in_risk_set]])
            names = ("intercept", "mediator_lag", "exposure") + l0_names
        try:
            mediator_models.append(fit_linear(design, response, column_names=names))
        except EstimatorError as err:
            raise _tag(err, f"mediator[{kk + 1}]")

    death_models = []
    degenerate = []
    for kk in range(k):
        measured = ~np.isnan(arr.mediator[:, kk])
        death_design = np.column_stack([np.ones(measured.sum()),
                                        arr.mediator[measured, kk],
                                        arr.exposure[measured],
                                        arr.baseline[measured]])
        death_names = ("intercept", "mediator", "exposure") + l0_names
        death_response = arr.death[measured, kk]
        try:
            death_models.append(fit_logistic(death_design, death_response,
                                             column_names=death_names))
        except SingleClassResponse:
            death_models.append(ConstantDeathModel(float(death_response[0]) if death_response.size else 0.0))
            degenerate.append(kk + 1)
        except EstimatorError as err:
            raise _tag(err, f"death[{kk + 1}]")

    table = to_counting_process(arr)
    try:
        outcome_model = fit_additive_hazards(table)
    except EstimatorError as err:
        raise _tag(err, "outcome")
    return FittedModelSet(mediator_models=tuple(mediator_models),
                          death_models=tuple(death_models),
                          outcome_model=outcome_model,
                          n_visits=k, n_baseline=p,
                          degenerate_death_models=tuple(degenerate))


# ---------------------------------------------------------------------------
# Simulation.

def _window_edges(visit_times, horizon, n_visits):
    """(starts, death-window ends, hazard-window ends) for the K windows."""
    vt = np.asarray(visit_times, dtype=float)
    starts = vt[:n_visits]
    death_ends = np.concatenate([vt[1:n_visits], [horizon]])
    hazard_ends = np.concatenate([vt[1:n_visits], [np.inf]])
    return starts, death_ends, hazard_ends


def _draws(seed, draw, purpose, regime_key, shape, options):
    code = streams.SHARED_REGIME if options.common_random_numbers else regime_key
    gen = streams.stream(seed, purpose, draw, code)
    if purpose == streams.MEDIATOR_NOISE:
        return gen.standard_normal(shape)
    return gen.random(shape)


def _mediator_mean(model, kk, lag, a_mediator, l0):
    c = model.coefficients
    if kk == 0:
        return c[0] + c[1] * a_mediator + l0 @ c[2:]
    return c[0] + c[1] * lag + c[2] * a_mediator + l0 @ c[3:]


def _death_probability(model, med, a_death, l0):
    if isinstance(model, ConstantDeathModel):
        return np.full(med.shape[0], model.probability)
    c = model.coefficients
    return expit(c[0] + c[1] * med + c[2] * a_death + l0 @ c[3:])


def simulate_world(models, cohort, regime, seed, options=EngineOptions(), draw=0,
                   contrast=None, _shared=None, bypass_death=False):
    """Simulate one counterfactual world for every subject under ``regime``.

    Visits run in order: the mediator is drawn from its model at the regime's
    mediator exposure (carrying the simulated lag), then death is drawn from
    the same-visit death model at the regime's death exposure, sharing the
    per-(subject, visit) uniform across regimes when common random numbers
    are on.  Outcome hazard accumulates along the simulated path at the
    regime's outcome exposure and stops at simulated death or the horizon.
    """
    arr = as_arrays(cohort)
    n, n_visits = arr.n_subjects, arr.n_visits
    starts, death_ends, hazard_ends = _window_edges(arr.visit_times, arr.horizon, n_visits)
    midpoints = (starts + death_ends) / 2.0

    if _shared is not None:
        z_noise, u_death = _shared
    else:
        key = regime.code(contrast) if contrast is not None else 0
        z_noise = _draws(seed, draw, streams.MEDIATOR_NOISE, key, (n, n_visits), options)
        u_death = _draws(seed, draw, streams.DEATH_UNIFORM, key, (n, n_visits), options)

    stochastic = options.mediator_mode == "stochastic"
    med = np.full((n, n_visits), np.nan)
    alive = np.ones(n, dtype=bool)
    death_window = np.zeros(n, dtype=int)
    lag = np.zeros(n)
    for kk in range(n_visits):
        mm = models.mediator_models[kk]
        mean = _mediator_mean(mm, kk, lag, regime.a_mediator, arr.baseline)
        value = mean + (mm.residual_sd * z_noise[:, kk] if stochastic else 0.0)
        med[:, kk] = np.where(alive, value, np.nan)
        if not bypass_death:
            prob = _death_probability(models.death_models[kk], value, regime.a_death, arr.baseline)
            dies = alive & (u_death[:, kk] < prob)
            death_window[dies] = kk + 1
            alive = alive & ~dies
        lag = np.where(alive, med[:, kk], lag)

    k_grid = np.arange(1, n_visits + 1)
    survival = ((death_window[:, None] == 0) | (k_grid[None, :] < death_window[:, None])).astype(np.int8)
    death_time = np.where(death_window > 0, midpoints[np.maximum(death_window - 1, 0)], np.inf)
    person_time = np.minimum(death_time, arr.horizon)

    # hazard accumulation along the simulated path
    coefs = models.outcome_model.coefficients
    beta_a, beta_m, beta_l = coefs[0], coefs[1], coefs[2:]
    seg_len = np.clip(np.minimum(hazard_ends[None, :], person_time[:, None]) - starts[None, :],
                      0.0, None)
    med_filled = np.where(seg_len > 0, np.nan_to_num(med), 0.0)
    base = models.outcome_model.baseline_cumhaz
    base_at_edges = base(np.minimum(hazard_ends[None, :], person_time[:, None]))
    base_at_starts = base(np.minimum(starts[None, :], person_time[:, None]))
    interval_hazards = ((base_at_edges - base_at_starts)
                        + (beta_a * regime.a_outcome + arr.baseline @ beta_l)[..., None] * seg_len
                        + beta_m * med_filled * seg_len)
    cumulative = base(person_time) + (beta_a * regime.a_outcome + arr.baseline @ beta_l) * person_time \
        + beta_m * (med_filled * seg_len).sum(axis=1)

    prob = np.exp(-cumulative)
    clamped = int(np.count_nonzero((prob > 1.0) | (prob < 0.0)))
    prob = np.clip(prob, 0.0, 1.0)

    return CounterfactualWorld(regime=regime, mediator_paths=med,
                               survival_paths=survival, death_window=death_window,
                               death_time=death_time, person_time=person_time,
                               interval_hazards=interval_hazards,
                               cumulative_hazard=cumulative,
                               outcome_free_prob=prob, clamp_events=clamped)


def _phi_from_world(world):
    rate = float(world.cumulative_hazard.sum() / world.person_time.sum() * PER_PERSON_YEARS)
    prob = float(world.outcome_free_prob.mean())
    return rate, prob


def phi(models, cohort, regime, seed, options=EngineOptions(), draw=0, contrast=None):
    """Monte Carlo value of the g-formula functional for one regime.

    Returns ``(rate, outcome_free_prob)``: the person-time-weighted average
    model hazard per 100,000 person-years, and the mean outcome-free
    probability at the horizon.
    """
    world = simulate_world(models, cohort, regime, seed, options, draw, contrast=contrast)
    return _phi_from_world(world)


def _check_decomposition(effects, scale_getter):
    parts = [scale_getter(effects["DE"]), scale_getter(effects["IEM"]), scale_getter(effects["IED"])]
    total = scale_getter(effects["TE"])
    resid = abs(sum(parts) - total)
    scale = max(abs(total), *(abs(v) for v in parts), 1e-300)
    if resid > DECOMPOSITION_RTOL * scale:
        raise AssertionError(
            f"path-specific effects do not sum to the total effect: residual {resid:.3e}")
    return resid / scale


def _effect_tables(models, arr, contrast, seed, options, draw, bypass_death):
    a, a_star = contrast.a_ref, contrast.a_cmp
    regimes = {
        "ref-ref-ref": RegimeTriple(a, a, a),
        "cmp-ref-ref": RegimeTriple(a_star, a, a),
        "cmp-cmp-ref": RegimeTriple(a_star, a_star, a),
        "cmp-cmp-cmp": RegimeTriple(a_star, a_star, a_star),
        "cmp-ref-cmp": RegimeTriple(a_star, a, a_star),
    }

    n, n_visits = arr.n_subjects, arr.n_visits
    worlds = {}
    cache = {}
    shared = None
    if options.common_random_numbers:
        shared = (
            _draws(seed, draw, streams.MEDIATOR_NOISE, 0, (n, n_visits), options),
            _draws(seed, draw, streams.DEATH_UNIFORM, 0, (n, n_visits), options),
        )
    for label, regime in regimes.items():
        # regimes that cannot differ share one simulation
        key = (regime.a_outcome, regime.a_mediator) if bypass_death \
            else (regime.a_outcome, regime.a_death, regime.a_mediator)
        if key not in cache:
            cache[key] = simulate_world(models, arr, regime, seed, options, draw,
                                        contrast=contrast, _shared=shared,
                                        bypass_death=bypass_death)
        worlds[label] = cache[key]

    phis = {label: _phi_from_world(w) for label, w in worlds.items()}

    def diff(name, hi, lo):
        rate = phis[hi][0] - phis[lo][0]
        prob_pp = (phis[hi][1] - phis[lo][1]) * 100.0
        return EffectEstimate(name=name, hazard_diff=rate, surv_prob_diff=prob_pp)

    effects = {
        "DE": diff("DE", "cmp-ref-ref", "ref-ref-ref"),
        "TE": diff("TE", "cmp-cmp-cmp", "ref-ref-ref"),
        "DE_plus_IEM": diff("DE_plus_IEM", "cmp-ref-cmp", "ref-ref-ref"),
    }
    if not bypass_death:
        effects["IEM"] = diff("IEM", "cmp-cmp-cmp", "cmp-cmp-ref")
        effects["IED"] = diff("IED", "cmp-cmp-ref", "cmp-ref-ref")
        _check_decomposition(effects, lambda e: e.hazard_diff)
        _check_decomposition(effects, lambda e: e.surv_prob_diff)
    else:
        effects["IEM"] = diff("IEM", "cmp-cmp-cmp", "cmp-cmp-ref")

    mode = "conditional_on_survival" if bypass_death else "competing_risks"
    ordered = {name: effects[name] for name in EFFECT_NAMES if name in effects}
    return EffectTable(
        mode=mode,
        effects=ordered,
        phi_rate={label: v[0] for label, v in phis.items()},
        phi_prob={label: v[1] for label, v in phis.items()},
        person_time={label: float(w.person_time.sum()) for label, w in worlds.items()},
        clamp_events=sum(w.clamp_events for w in cache.values()),
    )


def estimate_effects(models, cohort, contrast, seed, options=EngineOptions(), draw=0):
    """Path-specific effect point estimates for one simulation draw.

    DE, IEM, IED, TE, and DE_plus_IEM on both scales, evaluated on shared
    simulated worlds (one coupled simulation per distinct regime).  Sign
    convention on the survival scale is comparison minus reference of the
    outcome-free probability.
    """
    return _effect_tables(models, as_arrays(cohort), contrast, seed, options, draw,
                          bypass_death=False)


def conditional_on_survival_effects(models, cohort, contrast, seed,
                                    options=EngineOptions(), draw=0):
    """Comparison estimator that ignores competing risks.

    Identical pipeline with the death models bypassed: every subject is
    simulated alive in every regime, so the indirect effect through the death
    process is undefined and absent from the result.
    """
    return _effect_tables(models, as_arrays(cohort), contrast, seed, options, draw,
                          bypass_death=True)


def positivity_diagnostic(cohort, contrast, central=0.99):
    """Flag contrast levels outside the central 99% of observed exposure."""
    from .bootstrap import quantile  # local import to avoid a cycle

    arr = as_arrays(cohort)
    alpha = (1.0 - central) / 2.0
    lower = quantile(arr.exposure, alpha)
    upper = quantile(arr.exposure, 1.0 - alpha)
    outside = not (lower <= contrast.a_ref <= upper and lower <= contrast.a_cmp <= upper)
    return {"warning": outside, "lower": lower, "upper": upper,
            "a_ref": contrast.a_ref, "a_cmp": contrast.a_cmp}


def serialize_model_set(models):
    from .estimators import (serialize_additive_hazards, serialize_linear,
                             serialize_logistic)

    def death_doc(m):
        if isinstance(m, ConstantDeathModel):
            return {"constant_probability": m.probability}
        return serialize_logistic(m)

    return {
        "n_visits": models.n_visits,
        "n_baseline": models.n_baseline,
        "mediator_models": [serialize_linear(m) for m in models.mediator_models],
        "death_models": [death_doc(m) for m in models.death_models],
        "outcome_model": serialize_additive_hazards(models.outcome_model),
        "degenerate_death_models": list(models.degenerate_death_models),
    }
