"""Text pipeline: cleaning, contractions, tokenization, vocab, batching."""

import json

import numpy as np
import pytest

from lrmt import text
from lrmt.text import (EOS, PAD, SOS, UNK, ParallelCorpus, Vocabulary,
                       build_vocab, encode, load_manifest, load_tsv,
                       make_batches, preprocess, tokenize)


def test_preprocess_expands_contractions_and_spaces_punctuation():
    assert preprocess("You're late!") == "you are late !"


def test_preprocess_handles_negations_and_odd_characters():
    assert preprocess("Won't  he—go?") == "will not he go ?"


def test_preprocess_more_contractions():
    assert preprocess("I'm sure they'll've... wait, can't!") \
        == "i am sure they will have . . . wait , cannot !"


def test_preprocess_empty_result():
    assert preprocess("€ ∞ 😀") == ""


def test_tokenize_splits_trailing_punctuation():
    assert tokenize("you are late !") == ["you", "are", "late", "!"]
    assert tokenize("hello, world.") == ["hello", ",", "world", "."]


def test_vocab_reserved_ids_and_frequency_order():
    c = ParallelCorpus("en-de", [(["b", "a", "a"], ["x"]),
                                 (["c", "a", "b"], ["y"])], "train")
    v = build_vocab([c], side="source")
    assert v.itos[:4] == ["<pad>", "<sos>", "<eos>", "<unk>"]
    assert (PAD, SOS, EOS, UNK) == (0, 1, 2, 3)
    # a (3) before b (2) before c (1); ties would break lexicographically
    assert v.itos[4:] == ["a", "b", "c"]


def test_vocab_tie_breaks_lexicographically_and_min_freq():
    c = ParallelCorpus("en-de", [(["z", "m", "z", "m", "q"], ["x"])], "train")
    v = build_vocab([c], side="source", min_freq=2)
    assert v.itos[4:] == ["m", "z"]
    assert v.id_of("q") == UNK


def test_vocab_extra_tokens_reserved_up_front():
    c = ParallelCorpus("en-de", [(["a"], ["x"])], "train")
    v = build_vocab([c], side="source", extra_tokens=("<2de>", "<2fr>"))
    assert v.itos[4:6] == ["<2de>", "<2fr>"]


def test_vocab_json_round_trip(tmp_path):
    c = ParallelCorpus("en-de", [(["a", "b"], ["x"])], "train")
    v = build_vocab([c], side="source")
    v.export_json(tmp_path / "v.json")
    v2 = Vocabulary.from_json(tmp_path / "v.json")
    assert v2.itos == v.itos and v2.stoi == v.stoi


def test_encode_adds_sos_eos_and_maps_unknowns():
    c = ParallelCorpus("en-de", [(["a"], ["x"])], "train")
    v = build_vocab([c], side="source")
    assert encode(["a", "zzz"], v) == [SOS, v.id_of("a"), UNK, EOS]


def test_corpus_rejects_empty_sentences():
    with pytest.raises(ValueError):
        ParallelCorpus("en-de", [([], ["x"])], "train")


def test_load_tsv_drops_long_training_pairs_but_truncates_eval(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("Hello there!\tGuten Tag!\n"
                    "a b c d e f\tx y z w v u\n", encoding="utf-8")
    train = load_tsv(path, "en-de", "train", max_len=4)
    assert len(train.pairs) == 1
    ev = load_tsv(path, "en-de", "test", max_len=4, truncate=True)
    assert len(ev.pairs) == 2
    assert ev.pairs[1] == (["a", "b", "c", "d"], ["x", "y", "z", "w"])


def test_load_manifest_resolves_relative_paths_and_flags_missing(tmp_path):
    (tmp_path / "t.tsv").write_text("hi!\thallo!\n", encoding="utf-8")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"datasets": [
        {"id": "en-de", "pair": "en-de", "train": "t.tsv"}]}), encoding="utf-8")
    corpora = load_manifest(manifest)
    assert corpora["en-de"]["train"].pairs == [(["hi", "!"], ["hallo", "!"])]
    manifest.write_text(json.dumps({"datasets": [
        {"id": "x", "pair": "x-y", "train": "missing.tsv"}]}), encoding="utf-8")
    with pytest.raises(FileNotFoundError):
        load_manifest(manifest)


def test_make_batches_pads_and_is_seed_deterministic():
    pairs = [(["a"] * n, ["b"] * n) for n in range(1, 9)]
    c = ParallelCorpus("en-de", pairs, "train")
    sv = build_vocab([c], side="source")
    tv = build_vocab([c], side="target")
    b1 = make_batches(c, sv, tv, batch_size=3, seed=7)
    b2 = make_batches(c, sv, tv, batch_size=3, seed=7)
    assert len(b1) == 3
    for x, y in zip(b1, b2):
        assert np.array_equal(x.source, y.source)
        assert np.array_equal(x.target, y.target)
    for batch in b1:
        # every row: sos ... eos then pad
        assert np.all(batch.source[:, 0] == SOS)
        for row, length in zip(batch.source, batch.source_lengths):
            assert row[length - 1] == EOS
            assert np.all(row[length:] == PAD)
    b3 = make_batches(c, sv, tv, batch_size=3, seed=8)
    assert any(not np.array_equal(x.source, y.source) for x, y in zip(b1, b3))


def test_make_batches_inserts_language_control_token():
    c = ParallelCorpus("en-de", [(["a", "b"], ["x"])], "train")
    sv = build_vocab([c], side="source", extra_tokens=("<2de>",))
    tv = build_vocab([c], side="target")
    (batch,) = make_batches(c, sv, tv, batch_size=1, seed=0,
                            lang_token="<2de>")
    assert batch.source[0, 0] == SOS
    assert batch.source[0, 1] == sv.id_of("<2de>")
    assert sv.token_of(batch.source[0, 2]) == "a"
