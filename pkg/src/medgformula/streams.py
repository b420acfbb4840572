"""Deterministic random streams derived from (seed, purpose, draw, ...) paths.

Every stochastic step in the package pulls from a Philox counter-based
generator keyed by an explicit derivation path instead of advancing a shared
sequential generator.  Results are therefore bit-identical for a given master
seed no matter how work is scheduled across threads, and any single stream
can be re-opened in isolation.
"""

import numpy as np

# Purpose tags.  The numeric values are part of the reproducibility contract:
# changing them changes every seeded output.
RESAMPLE = 1
MEDIATOR_NOISE = 2
DEATH_UNIFORM = 3
GEN_SUBJECT = 4
ORACLE_WORLD = 5

# Regime slot for draws shared across all counterfactual regimes (common
# random numbers).  Per-regime codes occupy 0..7.
SHARED_REGIME = 255

_U64 = (1 << 64) - 1


def stream(seed, *path):
    """Open the generator at ``(seed, *path)``; path entries must be ints."""
    entropy = (int(seed) & _U64,) + tuple(int(x) & _U64 for x in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def regime_code(outcome_is_cmp, death_is_cmp, mediator_is_cmp):
    """3-bit code for a regime triple, slot order (outcome, death, mediator)."""
    return (int(bool(outcome_is_cmp)) << 2) | (int(bool(death_is_cmp)) << 1) | int(bool(mediator_is_cmp))
