"""Nonparametric bootstrap over subjects with quantile confidence intervals.

Each iteration resamples subjects with replacement, refits the full model
set, and reruns the counterfactual simulation with iteration-specific
streams.  The reported point estimate is the bootstrap median; the
full-sample plug-in estimate is kept as a diagnostic column.  Iterations are
independent and may run on a thread pool; aggregation collects values and
sorts, so results are bit-identical for any thread count.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import streams
from .cohort import as_arrays
from .engine import (EngineOptions, conditional_on_survival_effects,
                     estimate_effects, fit_model_set)
from .errors import EmptyCohort, EmptyInput, EstimatorError, TooManyFailedIterations

MODES = ("competing_risks", "conditional_on_survival")
SCALES = ("hazard_diff", "surv_prob_diff")


@dataclass(frozen=True)
class BootstrapConfig:
    n_iterations: int = 1000
    master_seed: int = 0
    ci_level: float = 0.95
    n_threads: int = 1
    max_failure_fraction: float = 0.05

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")


def quantile(values, q):
    """Linear interpolation between order statistics.

    With sorted values v_1 <= ... <= v_B and h = (B - 1) q + 1, returns
    v_floor(h) + (h - floor(h)) (v_floor(h)+1 - v_floor(h)).
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyInput("quantile of an empty collection")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level {q} outside [0, 1]")
    h = (v.size - 1) * q + 1.0
    j = int(math.floor(h))
    if j >= v.size:
        return float(v[-1])
    return float(v[j - 1] + (h - j) * (v[j] - v[j - 1]))


@dataclass(frozen=True)
class EffectInterval:
    point: float     # bootstrap median
    lower: float
    upper: float
    plugin: float    # full-sample plug-in estimate (diagnostic)


@dataclass(frozen=True)
class EffectTableWithCI:
    """Per-effect medians and quantile intervals on both scales."""

    mode: str
    hazard_diff: dict
    surv_prob_diff: dict
    diagnostics: dict
    samples: dict | None = None

    def interval(self, scale, name):
        return getattr(self, scale)[name]


def summarize_samples(samples, ci_level, plugin=None):
    """Quantile summary of raw per-iteration effect values.

    ``samples`` maps effect name to a 1-D array; this is the aggregation seam
    the bootstrap uses, kept separate so tests can feed synthetic values.
    """
    lo_q = (1.0 - ci_level) / 2.0
    hi_q = (1.0 + ci_level) / 2.0
    out = {}
    for name, vals in samples.items():
        out[name] = EffectInterval(
            point=quantile(vals, 0.5),
            lower=quantile(vals, lo_q),
            upper=quantile(vals, hi_q),
            plugin=(plugin or {}).get(name, math.nan),
        )
    return out


@dataclass(frozen=True)
class BootstrapResult:
    """Per-mode effect tables plus the full-sample fitted models."""

    tables: dict          # mode -> EffectTableWithCI
    plugin_models: object

    def __getitem__(self, mode):
        return self.tables[mode]


def _iteration(arr, contrast, seed, b, options, modes):
    n = arr.n_subjects
    idx = streams.stream(seed, streams.RESAMPLE, b).integers(0, n, size=n)
    sample = arr.take(idx)
    models = fit_model_set(sample)
    tables = {}
    for mode in modes:
        fn = estimate_effects if mode == "competing_risks" else conditional_on_survival_effects
        tables[mode] = fn(models, sample, contrast, seed, options, draw=b)
    return models, tables


def run_bootstrap(cohort, contrast, config, options=EngineOptions(),
                  modes=("competing_risks",), keep_samples=False):
    """Bootstrap the effect estimates; returns one table per requested mode.

    Iterations whose model fitting fails (e.g. a resample with no outcome
    events) are recorded and skipped; the run errors when more than
    ``max_failure_fraction`` of iterations fail.  The same resamples and
    fitted models serve every requested mode.
    """
    arr = as_arrays(cohort)
    if arr.n_subjects < 2:
        raise EmptyCohort(f"bootstrap needs at least 2 subjects, got {arr.n_subjects}")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")

    # full-sample plug-in; a failure here is a hard error, not a skipped iteration
    plugin_models = fit_model_set(arr)
    plugin_tables = {}
    for mode in modes:
        fn = estimate_effects if mode == "competing_risks" else conditional_on_survival_effects
        plugin_tables[mode] = fn(plugin_models, arr, contrast, config.master_seed, options, draw=0)

    results = [None] * config.n_iterations
    degenerate_iterations = 0
    failures = Counter()

    def work(b):
        try:
            models, tables = _iteration(arr, contrast, config.master_seed, b, options, modes)
            return b, tables, bool(models.degenerate_death_models), None
        except EstimatorError as err:
            return b, None, False, f"{type(err).__name__}:{err.context or ''}"

    iterations = range(1, config.n_iterations + 1)
    if config.n_threads > 1:
        with ThreadPoolExecutor(max_workers=config.n_threads) as pool:
            outcomes = list(pool.map(work, iterations))
    else:
        outcomes = [work(b) for b in iterations]
    for b, tables, degenerate, failure in outcomes:
        if failure is None:
            results[b - 1] = tables
            degenerate_iterations += int(degenerate)
        else:
            failures[failure] += 1

    n_failed = sum(failures.values())
    if n_failed > config.max_failure_fraction * config.n_iterations:
        raise TooManyFailedIterations(
            f"{n_failed}/{config.n_iterations} bootstrap iterations failed: {dict(failures)}")

    kept = [r for r in results if r is not None]
    out = {}
    for mode in modes:
        samples = {
            scale: {name: np.array([getattr(t[mode].effects[name], scale) for t in kept])
                    for name in plugin_tables[mode].effects}
            for scale in SCALES
        }
        plugin = {scale: {name: getattr(est, scale)
                          for name, est in plugin_tables[mode].effects.items()}
                  for scale in SCALES}
        diagnostics = {
            "n_iterations": config.n_iterations,
            "n_failed_iterations": n_failed,
            "failure_reasons": dict(failures),
            "clamp_events": plugin_tables[mode].clamp_events
                            + sum(t[mode].clamp_events for t in kept),
            "degenerate_death_model_iterations": degenerate_iterations
                                                 + len(plugin_models.degenerate_death_models),
            "plugin_person_time": plugin_tables[mode].person_time,
            "plugin_phi_rate": plugin_tables[mode].phi_rate,
            "plugin_phi_prob": plugin_tables[mode].phi_prob,
        }
        out[mode] = EffectTableWithCI(
            mode=mode,
            hazard_diff=summarize_samples(samples["hazard_diff"], config.ci_level,
                                          plugin["hazard_diff"]),
            surv_prob_diff=summarize_samples(samples["surv_prob_diff"], config.ci_level,
                                             plugin["surv_prob_diff"]),
            diagnostics=diagnostics,
            samples=samples if keep_samples else None,
        )
    return BootstrapResult(tables=out, plugin_models=plugin_models)
