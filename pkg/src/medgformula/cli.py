"""Command-line front end.

Loads a JSON run configuration, ingests the cohort CSV, runs the bootstrap
pipeline, and writes a machine-readable JSON document plus a plain-text
effect table.  ``--mode simulate`` instead generates a synthetic cohort from
a structural-model (dgp) section and writes the ground-truth effects.

Exit codes: 0 success, 2 validation/configuration failure, 3 model-fitting
failure, 4 bootstrap failure budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .bootstrap import BootstrapConfig, quantile, run_bootstrap
from .cohort import read_cohort_csv, validate_cohort, write_cohort_csv
from .engine import (EngineOptions, ExposureContrast, positivity_diagnostic,
                     serialize_model_set)
from .errors import (CohortValidationError, ConfigError, EstimatorError,
                     HazardNegativityBudgetExceeded, MedGFormulaError,
                     TooManyFailedIterations)
from .oracle import StructuralDGP, generate_cohort, true_effects
from .report import dump_json, render_text_table, results_document

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FITTING = 3
EXIT_BOOTSTRAP = 4

MODES = ("competing_risks", "conditional_on_survival", "both", "simulate")


@dataclass
class RunConfig:
    """Resolved run configuration with the documented defaults."""

    input_csv: str = ""
    n_visits: int = 0
    visit_times: tuple = ()
    horizon: float = 20.0
    exposure_column: str = "exposure"
    covariate_columns: tuple | None = None
    contrast_levels: tuple | None = None
    contrast_percentiles: tuple = (25.0, 75.0)
    n_iterations: int = 1000
    ci_level: float = 0.95
    n_threads: int = 1
    seed: int = 0
    mediator_mode: str = "stochastic"
    common_random_numbers: bool = True
    mode: str = "both"
    output_json: str = "results.json"
    output_table: str = "-"
    output_csv: str = "cohort.csv"
    dgp: dict | None = None
    n_subjects: int = 0
    n_mc: int = 100_000

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        cfg = cls()
        cfg.input_csv = raw.get("input_csv", cfg.input_csv)
        if "n_visits" in raw:
            cfg.n_visits = int(raw["n_visits"])
        if "visit_times" in raw:
            cfg.visit_times = tuple(float(t) for t in raw["visit_times"])
        cfg.horizon = float(raw.get("horizon", cfg.horizon))
        cfg.exposure_column = raw.get("exposure_column", cfg.exposure_column)
        if raw.get("covariate_columns") is not None:
            cfg.covariate_columns = tuple(raw["covariate_columns"])
        contrast = raw.get("contrast", {})
        if "levels" in contrast:
            cfg.contrast_levels = tuple(float(v) for v in contrast["levels"])
            if len(cfg.contrast_levels) != 2:
                raise ConfigError("contrast.levels must have exactly two entries")
        if "percentiles" in contrast:
            cfg.contrast_percentiles = tuple(float(v) for v in contrast["percentiles"])
            if len(cfg.contrast_percentiles) != 2 or not all(
                    0.0 < p < 100.0 for p in cfg.contrast_percentiles):
                raise ConfigError("contrast.percentiles must be two values in (0, 100)")
        boot = raw.get("bootstrap", {})
        cfg.n_iterations = int(boot.get("n_iterations", cfg.n_iterations))
        cfg.ci_level = float(boot.get("ci_level", cfg.ci_level))
        cfg.n_threads = int(boot.get("n_threads", cfg.n_threads))
        cfg.seed = int(raw.get("seed", cfg.seed))
        engine = raw.get("engine", {})
        cfg.mediator_mode = engine.get("mediator_mode", cfg.mediator_mode)
        cfg.common_random_numbers = bool(engine.get("common_random_numbers",
                                                    cfg.common_random_numbers))
        cfg.mode = raw.get("mode", cfg.mode)
        cfg.output_json = raw.get("output_json", cfg.output_json)
        cfg.output_table = raw.get("output_table", cfg.output_table)
        cfg.output_csv = raw.get("output_csv", cfg.output_csv)
        cfg.dgp = raw.get("dgp")
        if cfg.dgp is not None:
            cfg.n_subjects = int(cfg.dgp.get("n_subjects", 0))
            cfg.n_mc = int(cfg.dgp.get("n_mc", cfg.n_mc))
        if cfg.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
        if cfg.mode != "simulate":
            if not cfg.input_csv:
                raise ConfigError("input_csv is required")
            if cfg.n_visits < 1 or len(cfg.visit_times) != cfg.n_visits + 1:
                raise ConfigError("n_visits and visit_times (length n_visits+1) are required")
        return cfg

    def to_document(self):
        doc = {
            "input_csv": self.input_csv,
            "n_visits": self.n_visits,
            "visit_times": list(self.visit_times),
            "horizon": self.horizon,
            "exposure_column": self.exposure_column,
            "covariate_columns": list(self.covariate_columns) if self.covariate_columns else None,
            "contrast": ({"levels": list(self.contrast_levels)} if self.contrast_levels
                         else {"percentiles": list(self.contrast_percentiles)}),
            "bootstrap": {"n_iterations": self.n_iterations, "ci_level": self.ci_level,
                          "n_threads": self.n_threads},
            "engine": {"mediator_mode": self.mediator_mode,
                       "common_random_numbers": self.common_random_numbers},
            "mode": self.mode,
            "output_json": self.output_json,
            "output_table": self.output_table,
        }
        return doc


def resolve_contrast(config, exposures):
    """Explicit levels, or percentiles of the observed exposure (default 25/75)."""
    if config.contrast_levels is not None:
        a_ref, a_cmp = config.contrast_levels
        source = "explicit"
    else:
        lo, hi = config.contrast_percentiles
        a_ref = quantile(exposures, lo / 100.0)
        a_cmp = quantile(exposures, hi / 100.0)
        source = f"percentiles[{lo:g},{hi:g}]"
    try:
        contrast = ExposureContrast(a_ref=a_ref, a_cmp=a_cmp)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return contrast, source


def _metadata():
    return {"created_utc": datetime.now(timezone.utc).isoformat(), "tool": "medgformula 0.1.0"}


def run(config, quiet=False, dump_models_path=None):
    """End-to-end estimation pipeline for one configuration."""
    cohort = read_cohort_csv(config.input_csv, config.n_visits, config.visit_times,
                             config.horizon, exposure_column=config.exposure_column,
                             covariate_columns=(list(config.covariate_columns)
                                                if config.covariate_columns else None))
    cohort = validate_cohort(cohort)

    exposures = np.array([s.exposure for s in cohort.subjects])
    contrast, contrast_source = resolve_contrast(config, exposures)
    positivity = positivity_diagnostic(cohort, contrast)
    if positivity["warning"] and not quiet:
        print(f"warning: contrast levels ({contrast.a_ref:g}, {contrast.a_cmp:g}) fall "
              f"outside the central 99% of observed exposure "
              f"[{positivity['lower']:g}, {positivity['upper']:g}]", file=sys.stderr)

    modes = (("competing_risks", "conditional_on_survival") if config.mode == "both"
             else (config.mode,))
    boot_config = BootstrapConfig(n_iterations=config.n_iterations,
                                  master_seed=config.seed, ci_level=config.ci_level,
                                  n_threads=config.n_threads)
    options = EngineOptions(mediator_mode=config.mediator_mode,
                            common_random_numbers=config.common_random_numbers)
    result = run_bootstrap(cohort, contrast, boot_config, options, modes=modes)

    doc = results_document(
        config_doc=config.to_document(),
        contrast={"a_ref": contrast.a_ref, "a_cmp": contrast.a_cmp,
                  "source": contrast_source},
        positivity=positivity,
        tables=result.tables,
        seed=config.seed,
        metadata=_metadata(),
    )
    dump_json(doc, config.output_json)
    table_text = render_text_table(result.tables, config.horizon)
    if config.output_table == "-":
        if not quiet:
            print(table_text, end="")
    else:
        with open(config.output_table, "w") as fh:
            fh.write(table_text)
    if dump_models_path:
        dump_json(serialize_model_set(result.plugin_models), dump_models_path)
    return doc


def simulate(config, quiet=False):
    """Generate a synthetic cohort plus its ground-truth effects document."""
    if config.dgp is None:
        raise ConfigError("simulate mode requires a dgp section")
    if config.n_subjects < 1:
        raise ConfigError("dgp.n_subjects must be >= 1")
    dgp = StructuralDGP.from_dict(config.dgp)
    cohort = generate_cohort(dgp, config.n_subjects, config.seed)
    write_cohort_csv(cohort, config.output_csv)

    exposures = np.array([s.exposure for s in cohort.subjects])
    contrast, contrast_source = resolve_contrast(config, exposures)
    truth = true_effects(dgp, contrast, config.n_mc, config.seed)
    doc = {
        "seed": config.seed,
        "dgp": dgp.to_dict(),
        "n_subjects": config.n_subjects,
        "contrast": {"a_ref": contrast.a_ref, "a_cmp": contrast.a_cmp,
                     "source": contrast_source},
        "true_effects": {
            "n_mc": truth.n_mc,
            "rejected_draws": truth.rejected_draws,
            "hazard_diff_per_100000_person_years": truth.hazard_diff,
            "hazard_diff_mc_se": truth.hazard_diff_se,
            "survival_probability_diff_percent": truth.surv_prob_diff,
            "survival_probability_diff_mc_se": truth.surv_prob_diff_se,
        },
        "output_csv": config.output_csv,
        "metadata": _metadata(),
    }
    dump_json(doc, config.output_json)
    if not quiet:
        print(f"wrote cohort ({config.n_subjects} subjects) to {config.output_csv} "
              f"and true effects to {config.output_json}")
    return doc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="medgformula",
        description="Path-specific effect estimation for a longitudinal mediator "
                    "with competing risks by death and an additive-hazards outcome.")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--mode", choices=MODES, default=None, help="override the config mode")
    parser.add_argument("--dump-models", metavar="PATH", default=None,
                        help="write the full-sample fitted models as JSON")
    parser.add_argument("--quiet", action="store_true", help="suppress table and warnings")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.mode is not None:
            config.mode = args.mode
        if config.mode == "simulate":
            simulate(config, quiet=args.quiet)
        else:
            run(config, quiet=args.quiet, dump_models_path=args.dump_models)
        return EXIT_OK
    except (ConfigError, CohortValidationError, HazardNegativityBudgetExceeded) as err:
        _print_failure(err)
        return EXIT_VALIDATION
    except TooManyFailedIterations as err:
        _print_failure(err)
        return EXIT_BOOTSTRAP
    except EstimatorError as err:
        _print_failure(err)
        return EXIT_FITTING
    except MedGFormulaError as err:
        _print_failure(err)
        return EXIT_VALIDATION


def _print_failure(err):
    if isinstance(err, CohortValidationError):
        for violation in err.violations:
            print(f"error: {violation}", file=sys.stderr)
    else:
        print(f"error: {err}", file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
