"""Batched posterior inference over a genotype corpus.

Genotypes sharing a prefix share forward work: the corpus is loaded into a
prefix trie and the forward sweep runs once per trie node instead of once
per sample per locus. Backward sweeps are shared through a trie over the
reversed genotypes and cached per distinct genotype. MISSING branches like
any other symbol. Scale histories are tracked per node as prefix-cumulative
log sums, so shared prefixes also share their scaling.

Memory for the default mode is O(distinct genotypes * loci * K^2); a
block-chunked mode bounds the backward cache for long genotypes by
re-deriving per-block forward states from checkpoints, trading repeated
locus evaluations for memory while producing identical numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import (PosteriorScan, _absorb, _advance, _combine, _retreat,
                        posterior_scan, table_from_scan)
from .model import (FounderHMM, InputError, MultilocusGenotype,
                    ZeroProbabilityError, emission_stack, symbol_plane)


class TrieNode:
    __slots__ = ("symbol", "depth", "children", "count", "sample_ids")

    def __init__(self, symbol, depth):
        self.symbol = symbol
        self.depth = depth
        self.children = {}
        self.count = 0          # genotypes passing through this node
        self.sample_ids = []    # multiset of their sample ids

    def is_leaf(self):
        return not self.children


class GenotypeTrie:
    """Prefix trie over equal-length genotypes; construction touches each
    symbol once."""

    def __init__(self, loci: int):
        self.loci = loci
        self.root = TrieNode(None, 0)
        self.size = 0

    def insert(self, symbols, sample_id: str):
        if len(symbols) != self.loci:
            raise InputError(
                f"genotype {sample_id!r} has {len(symbols)} loci, trie expects {self.loci}")
        node = self.root
        node.count += 1
        node.sample_ids.append(sample_id)
        for s in symbols:
            s = int(s)
            child = node.children.get(s)
            if child is None:
                child = TrieNode(s, node.depth + 1)
                node.children[s] = child
            child.count += 1
            child.sample_ids.append(sample_id)
            node = child
        self.size += 1

    def node_count(self) -> int:
        """Number of non-root nodes."""
        return sum(self.depth_counts())

    def depth_counts(self) -> tuple:
        """Distinct prefixes per depth 1..loci."""
        counts = [0] * self.loci
        stack = list(self.root.children.values())
        while stack:
            node = stack.pop()
            counts[node.depth - 1] += 1
            stack.extend(node.children.values())
        return tuple(counts)

    def distinct_count(self) -> int:
        return sum(1 for _ in self.leaves())

    def leaves(self):
        stack = list(self.root.children.values())
        while stack:
            node = stack.pop()
            if node.is_leaf():
                yield node
            else:
                stack.extend(node.children.values())

    def genotypes(self):
        """Reconstruct (symbol tuple, sample ids) per distinct genotype."""
        out = []
        path = []
        stack = [(c, 1) for c in reversed(list(self.root.children.values()))]
        while stack:
            node, depth = stack.pop()
            del path[depth - 1:]
            path.append(node.symbol)
            if node.is_leaf():
                out.append((tuple(path), list(node.sample_ids)))
            else:
                for c in reversed(list(node.children.values())):
                    stack.append((c, depth + 1))
        return out


def _corpus_symbols(corpus):
    genos = list(corpus)
    if not genos:
        raise InputError("corpus must be non-empty")
    for g in genos:
        if not isinstance(g, MultilocusGenotype):
            raise InputError("corpus entries must be MultilocusGenotype values")
    n = len(genos[0])
    for g in genos:
        if len(g) != n:
            raise InputError(
                f"genotype {g.sample_id!r} has {len(g)} loci, expected {n}")
    return genos, n


def build_trie(corpus) -> GenotypeTrie:
    genos, n = _corpus_symbols(corpus)
    trie = GenotypeTrie(n)
    for g in genos:
        trie.insert(g.symbols, g.sample_id)
    return trie


def reversed_trie(corpus) -> GenotypeTrie:
    """Trie over reversed genotypes, so shared suffixes share nodes."""
    genos, n = _corpus_symbols(corpus)
    trie = GenotypeTrie(n)
    for g in genos:
        trie.insert(g.symbols[::-1], g.sample_id)
    return trie


@dataclass(frozen=True)
class BatchStats:
    """Work accounting for one batched run. A locus evaluation is one
    emission absorption plus its transition step."""

    samples: int
    loci: int
    distinct_genotypes: int
    forward_locus_evals: int
    backward_locus_evals: int
    prefix_nodes: int
    suffix_nodes: int
    engine: str

    @property
    def naive_locus_evals(self) -> int:
        return self.samples * self.loci

    @property
    def locus_evals_avoided(self) -> int:
        return self.naive_locus_evals - self.forward_locus_evals


@dataclass(frozen=True)
class BatchPosteriorResult:
    """Per-sample posterior scans and tables plus shared-work statistics.

    Samples whose genotype has a zero marginal at some locus get no table;
    ``failures`` maps them to the first such locus while ``scans`` still
    carries their raw (partially zero) triples.
    """

    tables: dict
    log_likelihoods: dict
    scans: dict
    failures: dict
    stats: BatchStats


def _init_root_state(model):
    state = np.outer(model.initial, model.initial)
    norm = float(state.sum())
    state /= norm
    return state, float(np.log(norm))


def batched_posteriors(model: FounderHMM, corpus, *, naive: bool = False,
                       block_size: int | None = None) -> BatchPosteriorResult:
    """Posterior scans for every corpus genotype.

    With ``naive`` the corpus is processed one sample at a time with no
    sharing (the reference path used for equivalence tests and the CLI
    escape hatch). ``block_size`` selects the memory-bounded chunked mode.
    Results are identical across all three paths and independent of corpus
    order.
    """
    genos, n = _corpus_symbols(corpus)
    if n != model.loci:
        raise InputError(f"corpus has {n} loci but the model has {model.loci}")
    ids = [g.sample_id for g in genos]
    if len(set(ids)) != len(ids):
        raise InputError("corpus sample ids must be unique")
    if block_size is not None and block_size < 1:
        raise InputError("block_size must be >= 1")

    if naive or len(genos) == 1:
        etab = emission_stack(model)
        scans = {g.sample_id: posterior_scan(model, g, etab) for g in genos}
        stats = BatchStats(samples=len(genos), loci=n,
                           distinct_genotypes=len({g.key() for g in genos}),
                           forward_locus_evals=len(genos) * n,
                           backward_locus_evals=len(genos) * (n - 1),
                           prefix_nodes=0, suffix_nodes=0, engine="naive")
        return _assemble(genos, scans, stats)

    etab = emission_stack(model)
    prefix_trie = build_trie(genos)
    suffix_trie = reversed_trie(genos)

    if block_size is None:
        bcaches, bevals = _reversed_traversal(model, suffix_trie, etab)
        scans_by_key, fevals = _forward_traversal(model, prefix_trie, etab, bcaches)
        engine = "trie"
    else:
        scans_by_key, fevals, bevals = _chunked_traversal(
            model, prefix_trie, etab, block_size)
        engine = "trie-chunked"

    scans = {g.sample_id: scans_by_key[g.key()] for g in genos}
    stats = BatchStats(samples=len(genos), loci=n,
                       distinct_genotypes=len(scans_by_key),
                       forward_locus_evals=fevals,
                       backward_locus_evals=bevals,
                       prefix_nodes=prefix_trie.node_count(),
                       suffix_nodes=suffix_trie.node_count(),
                       engine=engine)
    return _assemble(genos, scans, stats)


def _assemble(genos, scans, stats):
    tables = {}
    log_likelihoods = {}
    failures = {}
    table_cache = {}
    for g in genos:
        scan = scans[g.sample_id]
        log_likelihoods[g.sample_id] = scan.log_likelihood
        cached = table_cache.get(id(scan))
        if cached is None:
            try:
                cached = ("ok", table_from_scan(scan))
            except ZeroProbabilityError as exc:
                cached = ("dead", exc.locus)
            table_cache[id(scan)] = cached
        kind, value = cached
        if kind == "ok":
            tables[g.sample_id] = value
        else:
            failures[g.sample_id] = value
    return BatchPosteriorResult(tables=tables, log_likelihoods=log_likelihoods,
                                scans=scans, failures=failures, stats=stats)


def _reversed_traversal(model, suffix_trie, etab):
    """Backward sweeps shared over the reversed trie.

    Returns ({genotype key: (backward states (n,K,K), suffix log sums (n,))},
    evaluation count). The leaf step absorbs the first locus' emission so
    every non-root node performs exactly one locus evaluation.
    """
    n, k = model.loci, model.founders
    trans = model.transitions
    bstack = np.empty((n + 1, k, k), dtype=np.float64)
    bcum = np.empty(n + 1, dtype=np.float64)
    bstack[0] = 1.0
    bcum[0] = 0.0
    path = [0] * n
    caches = {}
    evals = 0
    stack = list(reversed(list(suffix_trie.root.children.values())))
    with np.errstate(divide="ignore"):
        while stack:
            node = stack.pop()
            d = node.depth
            locus = n - d  # this node's symbol sits at locus index n - d
            path[d - 1] = node.symbol
            tmp, mass = _absorb(bstack[d - 1], etab[locus, symbol_plane(node.symbol)])
            evals += 1
            cum = bcum[d - 1] + np.log(mass)
            if d < n:
                bstack[d] = _retreat(tmp, trans[locus - 1])
                bcum[d] = cum
                stack.extend(reversed(list(node.children.values())))
            else:
                key = tuple(reversed(path))
                caches[key] = (bstack[:n][::-1].copy(), bcum[:n][::-1].copy())
    return caches, evals


def _forward_traversal(model, prefix_trie, etab, bcaches):
    """Forward sweep over the prefix trie, combining with cached backward
    states at each leaf. Returns ({key: PosteriorScan}, evaluation count)."""
    n, k = model.loci, model.founders
    trans = model.transitions
    fstack = np.empty((n, k, k), dtype=np.float64)
    fcum = np.empty(n, dtype=np.float64)
    fstack[0], fcum[0] = _init_root_state(model)
    path = [0] * n
    scans = {}
    evals = 0
    stack = list(reversed(list(prefix_trie.root.children.values())))
    with np.errstate(divide="ignore"):
        while stack:
            node = stack.pop()
            d = node.depth
            locus = d - 1  # this node's symbol sits at locus index d - 1
            path[locus] = node.symbol
            tmp, mass = _absorb(fstack[d - 1], etab[locus, symbol_plane(node.symbol)])
            evals += 1
            cum = fcum[d - 1] + np.log(mass)
            if d < n:
                fstack[d] = _advance(tmp, trans[locus])
                fcum[d] = cum
                stack.extend(reversed(list(node.children.values())))
            else:
                key = tuple(path)
                bstates, blogs = bcaches[key]
                triples = _combine(fstack[:n], bstates, etab)
                scans[key] = PosteriorScan(triples, fcum[:n].copy(), blogs,
                                           float(cum))
    return scans, evals


def _chunked_traversal(model, prefix_trie, etab, block_size):
    """Memory-bounded variant: one shared forward pass records per-genotype
    checkpoints at block boundaries, then blocks are processed right to
    left with per-genotype forward re-derivation and rolling backward
    states. Numbers match the default mode exactly."""
    n, k = model.loci, model.founders
    trans = model.transitions
    boundaries = list(range(0, n, block_size))

    fstack = np.empty((n, k, k), dtype=np.float64)
    fcum = np.empty(n, dtype=np.float64)
    fstack[0], fcum[0] = _init_root_state(model)
    path = [0] * n
    ckpts = {}
    fevals = 0
    stack = list(reversed(list(prefix_trie.root.children.values())))
    with np.errstate(divide="ignore"):
        while stack:
            node = stack.pop()
            d = node.depth
            locus = d - 1
            path[locus] = node.symbol
            tmp, mass = _absorb(fstack[d - 1], etab[locus, symbol_plane(node.symbol)])
            fevals += 1
            cum = fcum[d - 1] + np.log(mass)
            if d < n:
                fstack[d] = _advance(tmp, trans[locus])
                fcum[d] = cum
                stack.extend(reversed(list(node.children.values())))
            else:
                key = tuple(path)
                ckpts[key] = (fstack[boundaries].copy(), fcum[boundaries].copy(),
                              float(cum))

    keys = list(ckpts.keys())
    triples = {key: np.empty((n, 3), dtype=np.float64) for key in keys}
    lf = {key: np.empty(n, dtype=np.float64) for key in keys}
    lb = {key: np.empty(n, dtype=np.float64) for key in keys}
    bstate = {key: np.ones((k, k), dtype=np.float64) for key in keys}
    bcum = {key: 0.0 for key in keys}
    bevals = 0
    with np.errstate(divide="ignore"):
        for bi in range(len(boundaries) - 1, -1, -1):
            lo = boundaries[bi]
            hi = boundaries[bi + 1] if bi + 1 < len(boundaries) else n
            span = hi - lo
            for key in keys:
                states, cums, _ = ckpts[key]
                state = states[bi].copy()
                cum = float(cums[bi])
                fs = np.empty((span, k, k), dtype=np.float64)
                for i in range(lo, hi):
                    fs[i - lo] = state
                    lf[key][i] = cum
                    tmp, mass = _absorb(state, etab[i, symbol_plane(key[i])])
                    fevals += 1
                    cum += np.log(mass)
                    if i < n - 1:
                        state = _advance(tmp, trans[i])
                bs = np.empty((span, k, k), dtype=np.float64)
                state = bstate[key]
                cum = bcum[key]
                for i in range(hi - 1, lo - 1, -1):
                    bs[i - lo] = state
                    lb[key][i] = cum
                    if i > 0:
                        tmp, mass = _absorb(state, etab[i, symbol_plane(key[i])])
                        bevals += 1
                        cum += np.log(mass)
                        state = _retreat(tmp, trans[i - 1])
                bstate[key] = state
                bcum[key] = cum
                triples[key][lo:hi] = _combine(fs, bs, etab[lo:hi])

    scans = {key: PosteriorScan(triples[key], lf[key], lb[key], ckpts[key][2])
             for key in keys}
    return scans, fevals, bevals
