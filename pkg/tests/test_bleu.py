"""Corpus BLEU-4 against an independent brute-force oracle."""

import math
from collections import Counter

import numpy as np
import pytest

from lrmt.bleu import bleu4


def _oracle(cands, refs, max_n=4):
    """Straightforward pooled clipped-precision BLEU written independently."""
    match = [0] * max_n
    total = [0] * max_n
    c_len = sum(len(c) for c in cands)
    r_len = sum(len(r) for r in refs)
    for cand, ref in zip(cands, refs):
        for n in range(1, max_n + 1):
            c_counts = Counter(tuple(cand[i:i + n])
                               for i in range(len(cand) - n + 1))
            r_counts = Counter(tuple(ref[i:i + n])
                               for i in range(len(ref) - n + 1))
            total[n - 1] += sum(c_counts.values())
            for gram, cnt in c_counts.items():
                match[n - 1] += min(cnt, r_counts.get(gram, 0))
    precisions = [m / t if t else 0.0 for m, t in zip(match, total)]
    if any(p == 0.0 for p in precisions):
        return 0.0, precisions
    bp = math.exp(1.0 - r_len / c_len) if c_len < r_len else 1.0
    score = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return score, precisions


def _random_corpus(rng, vocab=20, max_sent=12):
    n = int(rng.integers(1, 9))
    cands, refs = [], []
    for _ in range(n):
        cl = int(rng.integers(1, max_sent + 1))
        rl = int(rng.integers(1, max_sent + 1))
        cands.append([str(rng.integers(vocab)) for _ in range(cl)])
        refs.append([str(rng.integers(vocab)) for _ in range(rl)])
        # sometimes overlap heavily so higher-order n-grams match
        if rng.random() < 0.5:
            refs[-1] = list(cands[-1])
            if rng.random() < 0.5 and len(refs[-1]) > 2:
                refs[-1][1] = str(rng.integers(vocab))
    return cands, refs


def test_matches_oracle_on_seeded_random_corpora():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        cands, refs = _random_corpus(rng)
        want, want_p = _oracle(cands, refs)
        rep = bleu4(cands, refs)
        assert abs(rep.score - want) < 1e-9, seed
        assert np.max(np.abs(np.asarray(rep.precisions) - want_p)) < 1e-9


def test_perfect_match_scores_exactly_one():
    cands = [["the", "cat", "sat", "on", "the", "mat"], ["hello", "world", "!", "."]]
    rep = bleu4(cands, [list(c) for c in cands])
    assert rep.score == 1.0
    assert rep.brevity_penalty == 1.0


def test_disjoint_corpus_scores_exactly_zero():
    rep = bleu4([["a", "b", "c", "d"]], [["w", "x", "y", "z"]])
    assert rep.score == 0.0


def test_frozen_example_with_brevity_penalty():
    cand = [["the", "cat", "sat"]]
    ref = [["the", "cat", "sat", "down"]]
    rep = bleu4(cand, ref)
    # p1=3/3, p2=2/2, p3=1/1, p4=0/0 -> pooled p4 total is 0 -> score 0
    assert rep.score == 0.0
    cand = [["the", "cat", "sat", "down"]]
    ref = [["the", "cat", "sat", "down", "now"]]
    rep = bleu4(cand, ref)
    want_bp = math.exp(1.0 - 5.0 / 4.0)
    assert abs(rep.brevity_penalty - want_bp) < 1e-12
    assert rep.precisions == [1.0, 1.0, 1.0, 1.0]  # every n-gram is in the ref
    assert abs(rep.score - want_bp) < 1e-12


def test_any_zero_precision_zeroes_score_without_smoothing():
    rep = bleu4([["a", "a", "a", "a", "a"]], [["a", "b", "a", "b", "a"]])
    assert rep.precisions[3] == 0.0 or rep.score == 0.0
    assert rep.score == 0.0 or rep.precisions[3] > 0.0


def test_corpus_pooling_differs_from_sentence_mean():
    # pooled counts: a short perfect pair can't fully offset a long bad one
    cands = [["a", "b", "c", "d"], ["x"] * 10]
    refs = [["a", "b", "c", "d"], ["y"] * 10]
    rep = bleu4(cands, refs)
    want, _ = _oracle(cands, refs)
    assert abs(rep.score - want) < 1e-12


def test_pair_order_permutation_invariance():
    rng = np.random.default_rng(99)
    cands, refs = _random_corpus(rng)
    base = bleu4(cands, refs).score
    order = rng.permutation(len(cands))
    shuffled = bleu4([cands[i] for i in order], [refs[i] for i in order]).score
    assert abs(base - shuffled) < 1e-12


def test_rejects_mismatched_or_empty_input():
    with pytest.raises(ValueError):
        bleu4([["a"]], [])
    with pytest.raises(ValueError):
        bleu4([], [])
