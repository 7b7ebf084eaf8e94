"""Shared-prefix batch engine: equivalence with per-sample inference and
exact work accounting."""
import numpy as np
import pytest

from conftest import random_corpus, random_model
from founderhmm import (FounderHMM, InputError, MultilocusGenotype,
                        batched_posteriors, build_trie, genotype_posteriors,
                        posterior_scan, reversed_trie)

# Ten five-locus genotypes with heavy prefix sharing: seven distinct rows
# and 23 distinct non-empty prefixes, versus 10 x 5 = 50 row-by-row locus
# evaluations. Counts chosen so the savings are exact and easy to audit.
SHARED_PREFIX_ROWS = [
    "00000", "00000", "00000",
    "00001",
    "00100", "00100",
    "00120",
    "02111",
    "10000",
    "10222",
]


def shared_prefix_corpus():
    return [MultilocusGenotype(f"s{j}", np.array([int(c) for c in row],
                                                 dtype=np.int8))
            for j, row in enumerate(SHARED_PREFIX_ROWS)]


def test_trie_counts_on_shared_prefix_corpus():
    corpus = shared_prefix_corpus()
    trie = build_trie(corpus)
    assert trie.distinct_count() == 7
    assert trie.node_count() == 23
    assert trie.depth_counts() == (2, 3, 5, 6, 7)
    # every sample lands on exactly one leaf
    assert sorted(sid for _, ids in trie.genotypes() for sid in ids) == \
        sorted(g.sample_id for g in corpus)


def test_trie_reconstructs_genotypes():
    corpus = shared_prefix_corpus()
    trie = build_trie(corpus)
    seen = {syms: set(ids) for syms, ids in trie.genotypes()}
    for g in corpus:
        assert g.sample_id in seen[g.key()]


def test_batch_engine_counts_match_trie():
    rng = np.random.default_rng(0)
    model = random_model(rng, 3, 5)
    corpus = shared_prefix_corpus()
    batch = batched_posteriors(model, corpus)
    assert batch.stats.engine == "trie"
    assert batch.stats.samples == 10
    assert batch.stats.loci == 5
    assert batch.stats.distinct_genotypes == 7
    assert batch.stats.forward_locus_evals == 23
    assert batch.stats.naive_locus_evals == 50
    assert batch.stats.locus_evals_avoided == 27
    assert batch.stats.backward_locus_evals == reversed_trie(corpus).node_count()


def test_batch_matches_per_sample_bitwise():
    rng = np.random.default_rng(1)
    for trial in range(10):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(2, 15))
        m = int(rng.integers(2, 25))
        model = random_model(rng, k, n)
        corpus = random_corpus(rng, m, n, missing_rate=0.15)
        # force duplicates so sharing is exercised
        corpus.append(MultilocusGenotype("dup0", corpus[0].symbols.copy()))
        batch = batched_posteriors(model, corpus)
        for g in corpus:
            direct = genotype_posteriors(model, g)
            got = batch.tables[g.sample_id]
            assert np.array_equal(np.asarray(got.probs),
                                  np.asarray(direct.probs))
            assert got.log_marginals == pytest.approx(direct.log_marginals,
                                                      rel=1e-12)


def test_duplicates_share_one_scan_object():
    rng = np.random.default_rng(2)
    model = random_model(rng, 2, 5)
    corpus = shared_prefix_corpus()
    batch = batched_posteriors(model, corpus)
    assert batch.scans["s0"] is batch.scans["s1"] is batch.scans["s2"]
    assert batch.scans["s0"] is not batch.scans["s3"]


def test_naive_engine_is_identical_and_counts_rows():
    rng = np.random.default_rng(3)
    model = random_model(rng, 3, 5)
    corpus = shared_prefix_corpus()
    fast = batched_posteriors(model, corpus)
    slow = batched_posteriors(model, corpus, naive=True)
    assert slow.stats.engine == "naive"
    assert slow.stats.forward_locus_evals == 50
    for g in corpus:
        assert np.array_equal(np.asarray(fast.tables[g.sample_id].probs),
                              np.asarray(slow.tables[g.sample_id].probs))


@pytest.mark.parametrize("block_size", [1, 2, 3, 7, 64])
def test_chunked_mode_is_bitwise_identical(block_size):
    rng = np.random.default_rng(4)
    model = random_model(rng, 3, 11)
    corpus = random_corpus(rng, 12, 11, missing_rate=0.2)
    full = batched_posteriors(model, corpus)
    chunked = batched_posteriors(model, corpus, block_size=block_size)
    for g in corpus:
        assert np.array_equal(np.asarray(full.tables[g.sample_id].probs),
                              np.asarray(chunked.tables[g.sample_id].probs))
        assert np.array_equal(np.asarray(full.scans[g.sample_id].triples),
                              np.asarray(chunked.scans[g.sample_id].triples))


def test_impossible_sample_is_isolated_not_fatal():
    model = FounderHMM(initial=np.array([1.0]),
                       transitions=np.ones((2, 1, 1)),
                       emissions=np.array([[0.5], [0.0], [0.5]]))
    good = MultilocusGenotype("ok", np.array([1, 0, 2], dtype=np.int8))
    bad = MultilocusGenotype("dead", np.array([1, 2, 0], dtype=np.int8))
    batch = batched_posteriors(model, [good, bad])
    assert "ok" in batch.tables
    assert "dead" not in batch.tables
    assert batch.failures == {"dead": 0}
    direct = posterior_scan(model, bad)
    assert np.array_equal(np.asarray(batch.scans["dead"].triples),
                          np.asarray(direct.triples))


def test_batch_input_validation():
    rng = np.random.default_rng(5)
    model = random_model(rng, 2, 4)
    with pytest.raises(InputError):
        batched_posteriors(model, [])
    a = MultilocusGenotype("x", np.array([0, 1, 2, 0], dtype=np.int8))
    with pytest.raises(InputError):
        batched_posteriors(model, [a, MultilocusGenotype("x", a.symbols.copy())])
    with pytest.raises(InputError):
        batched_posteriors(model, [MultilocusGenotype("y", np.array([0, 1], dtype=np.int8))])
    with pytest.raises(InputError):
        batched_posteriors(model, [a], block_size=0)


def test_missing_symbols_branch_as_ordinary_symbols():
    rows = ["01?", "01?", "010"]
    corpus = [MultilocusGenotype(f"s{j}",
                                 np.array([-1 if c == "?" else int(c) for c in row],
                                          dtype=np.int8))
              for j, row in enumerate(rows)]
    trie = build_trie(corpus)
    assert trie.distinct_count() == 2
    # shared prefix "01" then a two-way branch
    assert trie.depth_counts() == (1, 1, 2)
