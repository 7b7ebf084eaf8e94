"""Shared builders for randomized test instances.

Tests import these directly (pytest puts this directory on sys.path). Every
builder takes an explicit generator so each test pins its own seeds.
"""
import numpy as np

from founderhmm import MISSING, FounderHMM, HaplotypeSequence, MultilocusGenotype


def random_model(rng, founders, loci, *, spread=5.0,
                 emission_range=(0.05, 0.95)) -> FounderHMM:
    initial = rng.dirichlet(np.full(founders, spread))
    transitions = rng.dirichlet(np.full(founders, spread),
                                size=(max(loci - 1, 0), founders))
    emissions = rng.uniform(emission_range[0], emission_range[1],
                            size=(loci, founders))
    return FounderHMM(initial=initial, transitions=transitions,
                      emissions=emissions)


def random_genotype(rng, loci, *, sample_id="g", missing_rate=0.0):
    symbols = rng.integers(0, 3, size=loci).astype(np.int8)
    if missing_rate > 0.0:
        symbols[rng.random(loci) < missing_rate] = MISSING
    return MultilocusGenotype(sample_id, symbols)


def random_corpus(rng, samples, loci, *, missing_rate=0.0, prefix="s"):
    return [random_genotype(rng, loci, sample_id=f"{prefix}{j}",
                            missing_rate=missing_rate)
            for j in range(samples)]


def random_panel(rng, size, loci, *, prefix="h"):
    return [HaplotypeSequence(f"{prefix}{j}",
                              rng.integers(0, 2, size=loci).astype(np.int8))
            for j in range(size)]
