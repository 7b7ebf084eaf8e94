"""Synthetic data generation, scoring, grid sweeps, and scaling benchmarks.

The generator draws founder alleles, builds mosaic haplotypes by switching
founders along the map, pairs them into genotypes, and pushes the result
through three corruption channels in a fixed order: symbol errors, then
missingness, then masking of map columns. Every corruption is recorded so
detection precision/recall can be scored exactly, not just discordance.
"""
from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .analysis import (PIPELINE_IMPUTE_ONLY, ImputationResult, WindowSpec,
                       run_pipeline)
from .model import (MISSING, FounderHMM, HaplotypeSequence, InputError,
                    LocusMap, MultilocusGenotype, genotype_from_haplotypes)
from .training import TrainConfig
from .trie import batched_posteriors


@dataclass(frozen=True)
class SimConfig:
    """Generative settings. All randomness flows from ``seed`` through one
    generator in a fixed draw order (founders, reference panel, sample
    haplotypes, error sites, error values, missing sites, mask columns), so
    a fixed seed reproduces every output byte for byte.
    """

    founder_count: int = 5
    loci: int = 200
    sample_count: int = 50
    panel_size: int = 100
    switch_rate: float = 0.02
    error_rate: float = 0.0
    missing_rate: float = 0.0
    mask_fraction: float = 0.0
    maf_range: tuple = (0.05, 0.5)
    founder_alleles: object = None  # optional (founder_count, loci) 0/1 array
    seed: int = 0

    def __post_init__(self):
        if self.founder_count < 1:
            raise InputError("founder_count must be >= 1")
        if self.loci < 1:
            raise InputError("loci must be >= 1")
        if self.sample_count < 1:
            raise InputError("sample_count must be >= 1")
        if self.panel_size < 1:
            raise InputError("panel_size must be >= 1")
        for name in ("switch_rate", "error_rate", "missing_rate", "mask_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        lo, hi = self.maf_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InputError(f"maf_range must be an ordered pair in [0, 1], got {self.maf_range}")
        if self.founder_alleles is not None:
            arr = np.asarray(self.founder_alleles)
            if arr.shape != (self.founder_count, self.loci):
                raise InputError(
                    f"founder_alleles shape {arr.shape} != "
                    f"({self.founder_count}, {self.loci})")
            if not np.isin(arr, (0, 1)).all():
                raise InputError("founder_alleles must be 0/1")


class ErrorRecord(NamedTuple):
    sample_id: str
    locus_index: int  # full-map coordinate
    truth: int
    observed: int


class MissingRecord(NamedTuple):
    sample_id: str
    locus_index: int


@dataclass(frozen=True)
class SimData:
    config: SimConfig
    founder_alleles: np.ndarray
    locus_map: LocusMap
    reference: list
    truth_haplotypes: list  # two per sample, full map
    truth_genotypes: list   # full map, no MISSING
    observed: list          # typed columns only, after all channels
    error_records: tuple
    missing_records: tuple
    masked_loci: tuple      # full-map indices relabeled untyped

    def typed_truth(self):
        """Truth genotypes restricted to the typed columns of the map."""
        typed = self.locus_map.typed_indices()
        return [MultilocusGenotype(g.sample_id, g.symbols[typed])
                for g in self.truth_genotypes]

    def typed_reference(self):
        """Reference panel restricted to the typed columns of the map."""
        typed = self.locus_map.typed_indices()
        return [HaplotypeSequence(h.id, h.alleles[typed])
                for h in self.reference]

    def observable_errors(self):
        """Injected errors still visible in the observed corpus: the locus
        survived masking and the symbol was not subsequently blanked."""
        masked = set(self.masked_loci)
        blanked = {(r.sample_id, r.locus_index) for r in self.missing_records}
        return tuple(r for r in self.error_records
                     if r.locus_index not in masked
                     and (r.sample_id, r.locus_index) not in blanked)

    def typed_column_of(self):
        """Map full-map locus index -> observed-corpus column index."""
        typed = self.locus_map.typed_indices()
        return {int(j): c for c, j in enumerate(typed)}


def _mosaics(rng, founder_alleles, count, switch_rate):
    """Mosaic haplotypes: start in a uniform founder, and at each interval
    redraw the founder uniformly with probability ``switch_rate`` (the
    redraw may land on the same founder)."""
    k, n = founder_alleles.shape
    paths = np.empty((count, n), dtype=np.int64)
    paths[:, 0] = rng.integers(k, size=count)
    if n > 1:
        switch = rng.random(size=(count, n - 1)) < switch_rate
        redraw = rng.integers(k, size=(count, n - 1))
        for i in range(1, n):
            paths[:, i] = np.where(switch[:, i - 1], redraw[:, i - 1],
                                   paths[:, i - 1])
    alleles = founder_alleles[paths, np.arange(n)[None, :]]
    return alleles.astype(np.int8), paths


def simulate(config: SimConfig) -> SimData:
    """Generate one synthetic dataset; see SimConfig for the draw order."""
    rng = np.random.default_rng(config.seed)
    k, n, m = config.founder_count, config.loci, config.sample_count

    if config.founder_alleles is not None:
        founders = np.asarray(config.founder_alleles, dtype=np.int8).copy()
        # keep the draw order stable whether or not founders are supplied
        rng.uniform(size=n)
        rng.random(size=(k, n))
    else:
        maf = rng.uniform(config.maf_range[0], config.maf_range[1], size=n)
        founders = (rng.random(size=(k, n)) < maf).astype(np.int8)

    panel_alleles, _ = _mosaics(rng, founders, config.panel_size, config.switch_rate)
    reference = [HaplotypeSequence(f"R{j}", panel_alleles[j])
                 for j in range(config.panel_size)]

    hap_alleles, _ = _mosaics(rng, founders, 2 * m, config.switch_rate)
    truth_haplotypes = []
    truth_genotypes = []
    for j in range(m):
        a = HaplotypeSequence(f"S{j}.a", hap_alleles[2 * j])
        b = HaplotypeSequence(f"S{j}.b", hap_alleles[2 * j + 1])
        truth_haplotypes.extend((a, b))
        truth_genotypes.append(genotype_from_haplotypes(f"S{j}", a, b))

    observed_matrix = np.stack([g.symbols for g in truth_genotypes]).astype(np.int8)

    error_sites = rng.random(size=(m, n)) < config.error_rate
    shifts = rng.integers(1, 3, size=(m, n))
    error_records = []
    rows, cols = np.nonzero(error_sites)
    for r, c in zip(rows, cols):
        truth_sym = int(observed_matrix[r, c])
        new_sym = (truth_sym + int(shifts[r, c])) % 3
        observed_matrix[r, c] = new_sym
        error_records.append(ErrorRecord(f"S{r}", int(c), truth_sym, new_sym))

    missing_sites = rng.random(size=(m, n)) < config.missing_rate
    missing_records = []
    rows, cols = np.nonzero(missing_sites)
    for r, c in zip(rows, cols):
        observed_matrix[r, c] = MISSING
        missing_records.append(MissingRecord(f"S{r}", int(c)))

    mask_count = int(round(config.mask_fraction * n))
    if mask_count > 0:
        masked = np.sort(rng.choice(n, size=mask_count, replace=False))
    else:
        masked = np.empty(0, dtype=np.int64)
    typed = np.ones(n, dtype=bool)
    typed[masked] = False

    locus_map = LocusMap(
        locus_ids=tuple(f"L{i}" for i in range(n)),
        positions=np.arange(1, n + 1, dtype=np.int64),
        typed=typed)

    typed_cols = np.flatnonzero(typed)
    observed = [MultilocusGenotype(f"S{j}", observed_matrix[j, typed_cols])
                for j in range(m)]

    return SimData(config=config, founder_alleles=founders, locus_map=locus_map,
                   reference=reference, truth_haplotypes=truth_haplotypes,
                   truth_genotypes=truth_genotypes, observed=observed,
                   error_records=tuple(error_records),
                   missing_records=tuple(missing_records),
                   masked_loci=tuple(int(j) for j in masked))


@dataclass(frozen=True)
class EvalReport:
    total: int
    discordant: int
    confusion: np.ndarray  # (3, 3), [truth, call]
    details: dict = field(default_factory=dict)

    @property
    def discordance_rate(self):
        return self.discordant / self.total if self.total else 0.0


def _truth_lookup(truth_genotypes):
    table = {}
    for g in truth_genotypes:
        if g.sample_id in table:
            raise InputError(f"duplicate truth sample {g.sample_id!r}")
        table[g.sample_id] = g.symbols
    return table


def evaluate(calls, truth_genotypes, *, loci=None) -> EvalReport:
    """Score calls against ground truth.

    ``calls`` is either an ImputationResult (scored at its own locus
    indices, optionally restricted to ``loci``) or a corpus of genotypes
    aligned column-for-column with ``truth_genotypes`` (every non-missing
    symbol is scored).
    """
    truth = _truth_lookup(truth_genotypes)
    confusion = np.zeros((3, 3), dtype=np.int64)
    total = discordant = 0
    if isinstance(calls, ImputationResult):
        wanted = None if loci is None else set(int(i) for i in loci)
        for e in calls.entries:
            if wanted is not None and e.locus_index not in wanted:
                continue
            symbols = truth.get(e.sample_id)
            if symbols is None:
                raise InputError(f"call names unknown sample {e.sample_id!r}")
            if not 0 <= e.locus_index < symbols.shape[0]:
                raise InputError(
                    f"call locus {e.locus_index} outside truth for {e.sample_id!r}")
            t = int(symbols[e.locus_index])
            if t == MISSING:
                raise InputError(
                    f"truth is missing at {e.sample_id!r} locus {e.locus_index}")
            confusion[t, e.call] += 1
            total += 1
            discordant += int(e.call != t)
        return EvalReport(total=total, discordant=discordant, confusion=confusion,
                          details={"kind": "imputation"})
    for g in calls:
        symbols = truth.get(g.sample_id)
        if symbols is None:
            raise InputError(f"call names unknown sample {g.sample_id!r}")
        if symbols.shape[0] != len(g):
            raise InputError(
                f"{g.sample_id!r}: {len(g)} call loci vs {symbols.shape[0]} truth loci")
        called = g.symbols != MISSING
        if loci is not None:
            picked = np.zeros(len(g), dtype=bool)
            picked[list(loci)] = True
            called &= picked
        for i in np.flatnonzero(called):
            t, c = int(symbols[i]), int(g.symbols[i])
            if t == MISSING:
                raise InputError(f"truth is missing at {g.sample_id!r} locus {i}")
            confusion[t, c] += 1
            total += 1
            discordant += int(c != t)
    return EvalReport(total=total, discordant=discordant, confusion=confusion,
                      details={"kind": "corpus"})


class SweepRow(NamedTuple):
    founders: int
    panel_size: int
    flank: int
    mode: str
    total: int
    discordant: int
    error_rate: float
    seconds: float
    failed: bool
    message: str


def sweep(data: SimData, *, founder_counts=(7,), panel_sizes=(100,),
          flanks=(10,), modes=(PIPELINE_IMPUTE_ONLY,), train_seed=0,
          threads: int = 1, cell_threads: int = 1):
    """One pipeline run per grid cell on a shared dataset.

    Panels are nested: a cell with panel size p uses the first p reference
    haplotypes, so growing the panel only adds information. Cell failures
    are captured in the row, never raised. Cell seeds derive from the
    dataset seed and the cell index, so results do not depend on execution
    order or thread count.
    """
    cells = list(itertools.product(founder_counts, panel_sizes, flanks, modes))
    if not cells:
        return []
    for _, p, _, _ in cells:
        if p > len(data.reference):
            raise InputError(
                f"panel size {p} exceeds the {len(data.reference)} reference haplotypes")
    seeds = np.random.SeedSequence(entropy=(data.config.seed, train_seed))
    children = seeds.spawn(len(cells))

    def run_cell(args):
        (founders, panel, flank, mode), child = args
        cell_seed = int(child.generate_state(1)[0])
        start = time.perf_counter()
        try:
            cfg = TrainConfig(founders=founders, seed=cell_seed)
            result = run_pipeline(mode, data.reference[:panel], data.observed,
                                  data.locus_map, cfg,
                                  window=WindowSpec(flank=flank),
                                  threads=cell_threads)
            report = evaluate(result.imputation, data.truth_genotypes)
            elapsed = time.perf_counter() - start
            return SweepRow(founders, panel, flank, mode, report.total,
                            report.discordant, report.discordance_rate,
                            elapsed, False, "")
        except Exception as exc:  # isolate the cell, keep the sweep alive
            elapsed = time.perf_counter() - start
            return SweepRow(founders, panel, flank, mode, 0, 0, float("nan"),
                            elapsed, True, f"{type(exc).__name__}: {exc}")

    jobs = list(zip(cells, children))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_cell, jobs))
    return [run_cell(j) for j in jobs]


class BenchRow(NamedTuple):
    axis: str
    value: int
    seconds: float  # median over repeats
    locus_evals: int


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    exponents: dict  # axis -> fitted log-log slope

    def series(self, axis):
        return [(r.value, r.seconds) for r in self.rows if r.axis == axis]


def fit_exponent(values, seconds):
    """Slope of log(seconds) against log(value) — the growth exponent."""
    v = np.log(np.asarray(values, dtype=float))
    t = np.log(np.asarray(seconds, dtype=float))
    if v.size < 2:
        raise InputError("need at least two points to fit an exponent")
    return float(np.polyfit(v, t, 1)[0])


def _random_model(rng, n, k):
    initial = np.full(k, 1.0 / k)
    transitions = rng.uniform(0.5, 1.5, size=(max(n - 1, 0), k, k))
    transitions /= transitions.sum(axis=2, keepdims=True)
    emissions = rng.uniform(0.1, 0.9, size=(n, k))
    return FounderHMM(initial=initial, transitions=transitions,
                      emissions=emissions)


def _bench_cell(rng, n, k, m, repeats):
    model = _random_model(rng, n, k)
    symbols = rng.integers(0, 3, size=(m, n)).astype(np.int8)
    corpus = [MultilocusGenotype(f"B{j}", symbols[j]) for j in range(m)]
    times = []
    batch = None
    for _ in range(repeats):
        start = time.perf_counter()
        batch = batched_posteriors(model, corpus)
        times.append(time.perf_counter() - start)
    evals = batch.stats.forward_locus_evals + batch.stats.backward_locus_evals
    return float(np.median(times)), evals


def bench_scaling(*, loci_grid=(250, 500, 1000, 2000), loci_samples=40,
                  loci_founders=5, sample_grid=(60, 120, 240, 480),
                  sample_loci=300, sample_founders=5,
                  founder_grid=(3, 5, 7, 9, 11, 13, 15), founder_loci=200,
                  founder_samples=30, repeats=3, seed=0) -> BenchReport:
    """Time the batched posterior engine along three axes and fit growth
    exponents from a log-log regression. Median of ``repeats`` runs per
    cell to stabilize small timings."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in loci_grid:
        sec, evals = _bench_cell(rng, n, loci_founders, loci_samples, repeats)
        rows.append(BenchRow("loci", int(n), sec, evals))
    for m in sample_grid:
        sec, evals = _bench_cell(rng, sample_loci, sample_founders, m, repeats)
        rows.append(BenchRow("samples", int(m), sec, evals))
    for k in founder_grid:
        sec, evals = _bench_cell(rng, founder_loci, k, founder_samples, repeats)
        rows.append(BenchRow("founders", int(k), sec, evals))
    exponents = {}
    for axis in ("loci", "samples", "founders"):
        pts = [(r.value, r.seconds) for r in rows if r.axis == axis]
        exponents[axis] = fit_exponent([p[0] for p in pts], [p[1] for p in pts])
    return BenchReport(rows=tuple(rows), exponents=exponents)
