#!/usr/bin/env python3
"""Null-coverage experiment: on a system with no exposure effect anywhere,
how often does the bootstrap 95% interval for the total effect contain zero?

    python3 scripts/coverage_experiment.py --replicates 100 --subjects 1000
"""

import argparse
import sys
import time

from medgformula import (BootstrapConfig, DeathEquation, ExposureContrast,
                         MediatorEquation, OutcomeEquation, StructuralDGP,
                         generate_cohort, run_bootstrap)


def null_dgp():
    return StructuralDGP(
        n_visits=3, visit_times=(0.0, 4.0, 8.0, 13.0), horizon=20.0,
        exposure_mean=0.0, exposure_sd=1.0,
        baseline_means=(0.0, 0.0), baseline_sds=(1.0, 1.0),
        mediator=(
            MediatorEquation(0.0, 0.0, 0.0, (0.4, 0.2), 0.8),
            MediatorEquation(0.3, 0.6, 0.0, (0.2, 0.1), 0.7),
            MediatorEquation(0.6, 0.6, 0.0, (0.2, 0.1), 0.7),
        ),
        death=(
            DeathEquation(-3.0, 0.35, 0.0, (0.25, 0.15)),
            DeathEquation(-3.0, 0.35, 0.0, (0.25, 0.15)),
            DeathEquation(-2.5, 0.35, 0.0, (0.25, 0.15)),
        ),
        outcome=OutcomeEquation(0.08, 0.0, 0.008, (0.004, 0.003)),
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=100)
    parser.add_argument("--subjects", type=int, default=1000)
    parser.add_argument("--iterations", type=int, default=200)
    parser.add_argument("--ci-level", type=float, default=0.95)
    args = parser.parse_args(argv)

    dgp = null_dgp()
    contrast = ExposureContrast(a_ref=-0.6745, a_cmp=0.6745)
    covered = 0
    t0 = time.time()
    for rep in range(args.replicates):
        cohort = generate_cohort(dgp, args.subjects, seed=9000 + rep)
        config = BootstrapConfig(n_iterations=args.iterations, master_seed=rep,
                                 ci_level=args.ci_level)
        result = run_bootstrap(cohort, contrast, config)
        te = result["competing_risks"].hazard_diff["TE"]
        hit = te.lower <= 0.0 <= te.upper
        covered += int(hit)
        print(f"replicate {rep + 1:3d}: TE {te.point:8.1f} "
              f"({te.lower:8.1f}, {te.upper:8.1f})  covers0={hit}")
    elapsed = time.time() - t0
    print(f"\ncoverage: {covered}/{args.replicates} "
          f"({100 * covered / args.replicates:.0f}%) in {elapsed / 60:.1f} min")
    return 0


if __name__ == "__main__":
    sys.exit(main())
