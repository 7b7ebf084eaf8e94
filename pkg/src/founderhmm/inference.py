"""Forward-backward machinery over founder pairs.

State beliefs over the two founder chains are K x K matrices. Each locus
step applies one elementwise emission hit and one transition, where the
transition is factored into two K-sized contractions (one per chain), so a
step costs O(K^3) instead of the O(K^4) unfactored form. Every stored
matrix is rescaled to unit mass and the normalizers are recorded, which
keeps long genotypes out of the underflow range while allowing exact
reconstruction of unscaled quantities and log-likelihoods.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (FounderHMM, InputError, MultilocusGenotype,
                    ZeroProbabilityError, emission_stack, symbol_plane)


def _symbols_of(genotype) -> np.ndarray:
    if isinstance(genotype, MultilocusGenotype):
        return genotype.symbols
    return MultilocusGenotype("anon", genotype).symbols


def _check_length(model: FounderHMM, symbols: np.ndarray):
    if symbols.shape[0] != model.loci:
        raise InputError(
            f"genotype has {symbols.shape[0]} loci but the model has {model.loci}")


def _absorb(state: np.ndarray, emat: np.ndarray):
    """Multiply in one locus' emission table and renormalize.

    Returns (normalized matrix, mass). Zero mass yields an all-zero matrix
    so degenerate genotypes propagate exact zeros instead of NaNs.
    """
    tmp = state * emat
    mass = float(tmp.sum())
    if mass > 0.0:
        tmp /= mass
    else:
        tmp[:] = 0.0
        mass = 0.0
    return tmp, mass


def _advance(tmp: np.ndarray, trans: np.ndarray) -> np.ndarray:
    # Two chained K-contractions; the inner product is the half-collapsed
    # buffer indexed by (previous first-chain state, next second-chain state).
    return trans.T @ (tmp @ trans)


def _retreat(tmp: np.ndarray, trans: np.ndarray) -> np.ndarray:
    return trans @ (tmp @ trans.T)


def _forward_sweep(model, symbols, etab, *, tolerate_zero, store=True):
    """Left-to-right scan.

    Returns (states, pre_logs, masses, init_norm): states[i] is the scaled
    founder-pair belief at locus i given symbols 0..i-1 (unit mass),
    pre_logs[i] the log probability of those preceding symbols, and
    masses[i] the conditional probability of symbol i given its prefix.
    """
    n = model.loci
    trans = model.transitions
    states = np.empty((n,) + etab.shape[2:], dtype=np.float64) if store else None
    pre_logs = np.empty(n, dtype=np.float64)
    masses = np.empty(n, dtype=np.float64)
    state = np.outer(model.initial, model.initial)
    init_norm = float(state.sum())
    state /= init_norm
    cum = np.log(init_norm)
    with np.errstate(divide="ignore"):
        for i in range(n):
            if store:
                states[i] = state
            pre_logs[i] = cum
            tmp, mass = _absorb(state, etab[i, symbol_plane(symbols[i])])
            if mass == 0.0 and not tolerate_zero:
                raise ZeroProbabilityError(i)
            masses[i] = mass
            cum += np.log(mass)
            if i < n - 1:
                state = _advance(tmp, trans[i])
    return states, pre_logs, masses, init_norm


def _backward_sweep(model, symbols, etab, *, tolerate_zero, store=True):
    """Right-to-left scan mirroring :func:`_forward_sweep`.

    Returns (states, suf_logs, betas): states[i] is the scaled probability
    of symbols i+1..n-1 given the founder pair at locus i (the last one is
    the all-ones matrix), and states[i] * exp(suf_logs[i]) reconstructs the
    unscaled value. betas are the per-locus normalizers (betas[n-1] = 1).
    """
    n, k = model.loci, model.founders
    trans = model.transitions
    states = np.empty((n, k, k), dtype=np.float64) if store else None
    suf_logs = np.empty(n, dtype=np.float64)
    betas = np.empty(n, dtype=np.float64)
    state = np.ones((k, k), dtype=np.float64)
    betas[n - 1] = 1.0
    cum = 0.0
    with np.errstate(divide="ignore"):
        for i in range(n - 1, -1, -1):
            if store:
                states[i] = state
            suf_logs[i] = cum
            if i > 0:
                tmp, mass = _absorb(state, etab[i, symbol_plane(symbols[i])])
                if mass == 0.0 and not tolerate_zero:
                    raise ZeroProbabilityError(i)
                betas[i - 1] = mass
                cum += np.log(mass)
                state = _retreat(tmp, trans[i - 1])
    return states, suf_logs, betas


@dataclass(frozen=True)
class ForwardPass:
    """Scaled forward matrices plus their per-locus normalizers.

    matrices[i] has unit mass; multiplying by the cumulative product of
    scale_factors[0..i] recovers the unscaled joint probability of the
    founder pair at locus i with all preceding symbols.
    """

    matrices: np.ndarray       # (n, K, K)
    scale_factors: np.ndarray  # (n,)

    def unscaled(self, locus: int) -> np.ndarray:
        return self.matrices[locus] * np.prod(self.scale_factors[:locus + 1])


@dataclass(frozen=True)
class BackwardPass:
    """Scaled backward matrices; matrices[i] * prod(scale_factors[i:])
    recovers the unscaled suffix probability given the pair at locus i."""

    matrices: np.ndarray
    scale_factors: np.ndarray

    def unscaled(self, locus: int) -> np.ndarray:
        return self.matrices[locus] * np.prod(self.scale_factors[locus:])


@dataclass(frozen=True)
class ForwardBackwardResult:
    """Both sweeps over one genotype.

    scale_factors[i] is the conditional probability of symbol i given the
    symbols before it, so their logs sum to log_likelihood. forward_norms
    and backward_norms are the raw per-sweep normalizers needed to
    reconstruct unscaled matrices.
    """

    forward: np.ndarray         # (n, K, K)
    backward: np.ndarray        # (n, K, K)
    scale_factors: np.ndarray   # (n,)
    log_likelihood: float
    forward_norms: np.ndarray   # (n,)
    backward_norms: np.ndarray  # (n,)


@dataclass(frozen=True)
class PosteriorScan:
    """Per-locus combination of both sweeps, tolerant of zero mass.

    triples[i, x] is proportional to the probability of the genotype with
    locus i replaced by symbol x; the shared scale at locus i is
    exp(prefix_logs[i] + suffix_logs[i]).
    """

    triples: np.ndarray       # (n, 3)
    prefix_logs: np.ndarray   # (n,)
    suffix_logs: np.ndarray   # (n,)
    log_likelihood: float

    @property
    def loci(self) -> int:
        return self.triples.shape[0]

    def substituted_probability(self, locus: int, symbol: int) -> float:
        """Unscaled probability of the genotype with one locus replaced
        (symbol MISSING gives the marginalized probability)."""
        row = self.triples[locus]
        value = float(row.sum()) if symbol_plane(symbol) == 3 else float(row[symbol])
        if value == 0.0:
            return 0.0
        return value * float(np.exp(self.prefix_logs[locus] + self.suffix_logs[locus]))

    def log_marginals(self) -> np.ndarray:
        """log probability of the genotype with each locus marginalized."""
        with np.errstate(divide="ignore"):
            return np.log(self.triples.sum(axis=1)) + self.prefix_logs + self.suffix_logs


@dataclass(frozen=True)
class PosteriorTable:
    """Normalized per-locus genotype posteriors.

    probs[i, x] = P(symbol x at locus i | all other symbols); each row sums
    to one. log_marginals[i] is the log unscaled probability of the
    genotype with locus i marginalized out.
    """

    probs: np.ndarray          # (n, 3)
    log_marginals: np.ndarray  # (n,)

    @property
    def loci(self) -> int:
        return self.probs.shape[0]


def forward(model: FounderHMM, genotype) -> ForwardPass:
    """Scaled forward sweep; raises ZeroProbabilityError when the model
    puts no mass on some prefix."""
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    states, _, masses, init_norm = _forward_sweep(
        model, symbols, etab, tolerate_zero=False)
    factors = np.concatenate(([init_norm], masses[:-1])) if model.loci > 1 \
        else np.array([init_norm])
    return ForwardPass(states, factors)


def backward(model: FounderHMM, genotype) -> BackwardPass:
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    states, _, betas = _backward_sweep(model, symbols, etab, tolerate_zero=False)
    return BackwardPass(states, betas)


def forward_backward(model: FounderHMM, genotype) -> ForwardBackwardResult:
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    fstates, _, masses, init_norm = _forward_sweep(
        model, symbols, etab, tolerate_zero=False)
    bstates, _, betas = _backward_sweep(model, symbols, etab, tolerate_zero=False)
    log_likelihood = float(np.log(init_norm) + np.log(masses).sum())
    fnorms = np.concatenate(([init_norm], masses[:-1])) if model.loci > 1 \
        else np.array([init_norm])
    return ForwardBackwardResult(fstates, bstates, masses, log_likelihood,
                                 fnorms, betas)


def total_log_likelihood(model: FounderHMM, genotype) -> float:
    """log P(genotype); -inf when the model puts no mass on it."""
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    _, _, masses, init_norm = _forward_sweep(
        model, symbols, etab, tolerate_zero=True, store=False)
    if np.any(masses == 0.0):
        return float("-inf")
    return float(np.log(init_norm) + np.log(masses).sum())


def _combine(fstates, bstates, etab) -> np.ndarray:
    """Per-locus substitution weights, shape (n, 3)."""
    prod = fstates * bstates
    return np.einsum("ikl,ixkl->ix", prod, etab[:, :3])


def posterior_scan(model: FounderHMM, genotype, etab=None) -> PosteriorScan:
    """Tolerant two-sweep scan; zero-probability genotypes produce exact
    zero rows instead of raising."""
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    if etab is None:
        etab = emission_stack(model)
    fstates, pre_logs, masses, init_norm = _forward_sweep(
        model, symbols, etab, tolerate_zero=True)
    bstates, suf_logs, _ = _backward_sweep(
        model, symbols, etab, tolerate_zero=True)
    triples = _combine(fstates, bstates, etab)
    with np.errstate(divide="ignore"):
        log_likelihood = float(np.log(init_norm) + np.log(masses).sum())
    return PosteriorScan(triples, pre_logs, suf_logs, log_likelihood)


def table_from_scan(scan: PosteriorScan) -> PosteriorTable:
    """Normalize a scan into per-locus posteriors; raises
    ZeroProbabilityError naming the first locus whose marginal is zero."""
    sums = scan.triples.sum(axis=1)
    dead = np.flatnonzero(sums <= 0.0)
    if dead.size:
        raise ZeroProbabilityError(int(dead[0]))
    return PosteriorTable(scan.triples / sums[:, None], scan.log_marginals())


def genotype_posteriors(model: FounderHMM, genotype) -> PosteriorTable:
    """Per-locus posteriors P(x at locus i | all other symbols) in O(n K^2)
    combination work on top of one forward and one backward sweep."""
    return table_from_scan(posterior_scan(model, genotype))


def forward_naive(model: FounderHMM, genotype) -> ForwardPass:
    """Reference forward sweep using the unfactored O(K^4) pair-transition
    contraction. Same scaling conventions as :func:`forward`."""
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    n = model.loci
    states = np.empty((n, model.founders, model.founders), dtype=np.float64)
    masses = np.empty(n, dtype=np.float64)
    state = np.outer(model.initial, model.initial)
    init_norm = float(state.sum())
    state /= init_norm
    for i in range(n):
        states[i] = state
        tmp, mass = _absorb(state, etab[i, symbol_plane(symbols[i])])
        if mass == 0.0:
            raise ZeroProbabilityError(i)
        masses[i] = mass
        if i < n - 1:
            t = model.transitions[i]
            state = np.einsum("ab,ac,bd->cd", tmp, t, t)
    factors = np.concatenate(([init_norm], masses[:-1])) if n > 1 \
        else np.array([init_norm])
    return ForwardPass(states, factors)


def backward_naive(model: FounderHMM, genotype) -> BackwardPass:
    """Reference backward sweep with the unfactored pair contraction."""
    symbols = _symbols_of(genotype)
    _check_length(model, symbols)
    etab = emission_stack(model)
    n, k = model.loci, model.founders
    states = np.empty((n, k, k), dtype=np.float64)
    betas = np.empty(n, dtype=np.float64)
    state = np.ones((k, k), dtype=np.float64)
    betas[n - 1] = 1.0
    for i in range(n - 1, -1, -1):
        states[i] = state
        if i > 0:
            tmp, mass = _absorb(state, etab[i, symbol_plane(symbols[i])])
            if mass == 0.0:
                raise ZeroProbabilityError(i)
            betas[i - 1] = mass
            t = model.transitions[i - 1]
            state = np.einsum("ac,bd,cd->ab", t, t, tmp)
    return BackwardPass(states, betas)
