"""Path-specific causal mediation analysis for a longitudinal mediator with
competing risks by death and a time-to-event outcome on an additive-hazards
model, estimated by counterfactual Monte Carlo simulation with bootstrap
inference, plus a synthetic-cohort generator with ground-truth effects."""

from .bootstrap import (BootstrapConfig, BootstrapResult, EffectInterval,
                        EffectTableWithCI, quantile, run_bootstrap,
                        summarize_samples)
from .cohort import (CohortDataset, CountingProcessTable, SubjectRecord,
                     Violation, collect_violations, read_cohort_csv,
                     to_counting_process, validate_cohort, write_cohort_csv)
from .engine import (CounterfactualWorld, EffectEstimate, EffectTable,
                     EngineOptions, ExposureContrast, FittedModelSet,
                     RegimeTriple, conditional_on_survival_effects,
                     estimate_effects, fit_model_set, phi,
                     positivity_diagnostic, simulate_world)
from .estimators import (AdditiveHazardsFit, ClampCounter, LinearModelFit,
                         LogisticModelFit, PiecewisePath, StepLinearCumhaz,
                         fit_additive_hazards, fit_linear, fit_logistic,
                         predict_hazard_rate, predict_survival)
from .oracle import (DeathEquation, MediatorEquation, OutcomeEquation,
                     StructuralDGP, TrueEffects, generate_cohort,
                     model_set_from_dgp, true_effects)

__version__ = "0.1.0"

__all__ = [
    "AdditiveHazardsFit", "BootstrapConfig", "BootstrapResult", "ClampCounter",
    "CohortDataset", "CounterfactualWorld", "CountingProcessTable",
    "DeathEquation", "EffectEstimate", "EffectInterval", "EffectTable",
    "EffectTableWithCI", "EngineOptions", "ExposureContrast", "FittedModelSet",
    "LinearModelFit", "LogisticModelFit", "MediatorEquation", "OutcomeEquation",
    "PiecewisePath", "RegimeTriple", "StepLinearCumhaz", "StructuralDGP",
    "SubjectRecord", "TrueEffects", "Violation", "collect_violations",
    "conditional_on_survival_effects", "estimate_effects",
    "fit_additive_hazards", "fit_linear", "fit_logistic", "fit_model_set",
    "generate_cohort", "model_set_from_dgp", "phi", "positivity_diagnostic",
    "predict_hazard_rate", "predict_survival", "quantile", "read_cohort_csv",
    "run_bootstrap", "simulate_world", "summarize_samples",
    "to_counting_process", "true_effects", "validate_cohort",
    "write_cohort_csv",
]
