import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evsumm import corpus
from evsumm.corpus import (EOS, PAD, SOS, UNK, CorpusError, Vocabulary, build_vocab, corpus_stats, encode,
                           filter_pair, quartiles, split_dataset)
from evsumm.tokenizer import TokenSequence


def words(n):
    return " ".join("word" for _ in range(n))


def test_filter_lengths():
    assert filter_pair(words(3), "x").reason == "too_short_comment"
    assert filter_pair(words(36), "x").reason == "too_long_comment"
    assert filter_pair(words(35), words(100)).keep
    assert filter_pair(words(4), words(101)).reason == "too_long_code"
    assert filter_pair(words(4), "x").keep


def test_filter_heuristics():
    assert filter_pair("Auto-generated method stub here", "x").reason == "auto_generated"
    assert filter_pair("This file was Generated By a tool", "x").reason == "auto_generated"
    assert filter_pair("返回 用户 的 名字 列表", "x").reason == "non_english"
    assert filter_pair("Returns the naïve café name", "x").keep


@given(st.integers(36, 60), st.integers(0, 20))
def test_filter_monotone_in_comment_length(n, extra):
    assert not filter_pair(words(n), "x").keep
    assert not filter_pair(words(n + extra), "x").keep


def seq(*toks):
    return list(toks)


def test_build_vocab_reserved_and_order():
    v = build_vocab([seq("a", "a", "b")])
    assert v.itos == ["<pad>", "<unk>", "<sos>", "<eos>", "a", "b"]
    v = build_vocab([seq("b", "a")])
    assert v.stoi["a"] == 4 and v.stoi["b"] == 5


def test_build_vocab_empty_errors():
    with pytest.raises(CorpusError):
        build_vocab([])


def test_build_vocab_matches_counting_oracle():
    rng = random.Random(5)
    alphabet = [f"t{i}" for i in range(40)]
    seqs = [[rng.choice(alphabet) for _ in range(rng.randint(1, 15))] for _ in range(1000)]
    counts = {}
    for s in seqs:
        for t in s:
            counts[t] = counts.get(t, 0) + 1
    expected = sorted(counts, key=lambda t: (-counts[t], t))
    v = build_vocab(seqs)
    assert v.itos[4:] == expected
    v = build_vocab(seqs, max_size=10, min_freq=1)
    assert v.itos[4:] == expected[:10]
    assert v.id(expected[11]) == UNK


def test_vocab_min_freq():
    v = build_vocab([seq("a", "a", "b")], min_freq=2)
    assert v.itos[4:] == ["a"] and v.id("b") == UNK


def test_encode():
    v = build_vocab([seq("a", "a", "b")])
    assert encode(["a"], v, 4).tolist() == [4, 0, 0, 0]
    assert encode(["zzz-unseen"], v, 4).tolist() == [1, 0, 0, 0]
    expected = [SOS] + [v.stoi["a"], v.stoi["b"]] + [EOS] + [PAD, PAD]
    assert encode(["a", "b"], v, 6, add_delimiters=True).tolist() == expected == [2, 4, 5, 3, 0, 0]
    with pytest.raises(CorpusError):
        encode(["a"] * 5, v, 4)


@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=6), min_size=1, max_size=10))
def test_decode_encode_roundtrip(seqs):
    v = build_vocab(seqs)
    for s in seqs:
        assert v.decode(encode(s, v, 8, add_delimiters=True)) == s


def test_vocab_file_roundtrip(tmp_path):
    v = build_vocab([seq("a", "a", "b", "c")])
    v.save(tmp_path / "v.txt")
    lines = (tmp_path / "v.txt").read_text().splitlines()
    assert lines[:4] == ["<pad>", "<unk>", "<sos>", "<eos>"]
    assert Vocabulary.load(tmp_path / "v.txt").itos == v.itos


def test_split_sizes():
    ids = [str(i) for i in range(10)]
    s = split_dataset(ids, seed=1)
    assert (len(s.train), len(s.valid), len(s.test)) == (8, 1, 1)
    s7 = split_dataset(ids[:7], seed=1)
    assert (len(s7.train), len(s7.valid), len(s7.test)) == (5, 0, 2)
    assert split_dataset(ids, seed=3) == split_dataset(ids, seed=3)
    with pytest.raises(CorpusError):
        split_dataset(ids[:2])


@given(st.integers(3, 300), st.integers(0, 2**31))
def test_split_partition(n, seed):
    ids = [f"p{i}" for i in range(n)]
    s = split_dataset(ids, seed=seed)
    parts = [set(s.train), set(s.valid), set(s.test)]
    assert sum(map(len, parts)) == n
    assert set().union(*parts) == set(ids)
    assert len(s.train) == int(0.8 * n + 1e-9) and len(s.valid) == int(0.1 * n + 1e-9)


def _quartile_oracle(values):
    a = np.sort(np.asarray(values, dtype=float))
    n = len(a)
    if n == 1:
        return a[0], a[0], a[0]
    return np.median(a[: n // 2]), np.median(a), np.median(a[n - n // 2:])


def test_quartiles_small():
    assert quartiles([7, 9, 14]) == (7, 9, 14)
    assert quartiles([1, 2, 3, 4]) == (1.5, 2.5, 3.5)


def _pair(i, n_code, n_comment):
    return corpus.PairRecord(str(i), TokenSequence(tuple(f"c{k}" for k in range(n_code))),
                             TokenSequence(tuple(f"m{k % 7}" for k in range(n_comment)), "comment"))


def test_corpus_stats_small():
    pairs = [_pair(0, 1, 1), _pair(1, 2, 2), _pair(2, 3, 3), _pair(3, 4, 4)]
    assert corpus_stats(pairs)["code"]["mean"] == 2.5


def test_corpus_stats_match_sort_oracle():
    rng = random.Random(11)
    pairs = [_pair(i, rng.randint(1, 100), rng.randint(4, 35)) for i in range(500)]
    stats = corpus_stats(pairs)
    for name, attr in (("code", "code_tokens"), ("comment", "comment_tokens")):
        lengths = [len(getattr(p, attr)) for p in pairs]
        q = _quartile_oracle(lengths)
        assert (stats[name]["q1"], stats[name]["q2"], stats[name]["q3"]) == pytest.approx(q)
        assert stats[name]["mean"] == pytest.approx(np.mean(lengths))
        assert stats[name]["unique_tokens"] == len(Counter(t for p in pairs for t in getattr(p, attr)))


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40))
def test_quartiles_property(values):
    assert quartiles(values) == pytest.approx(_quartile_oracle(values))


def test_preprocess_roundtrip(tmp_path, data_dir):
    kept, dropped = corpus.preprocess(corpus.read_raw_pairs(data_dir / "desk_pairs.jsonl"))
    assert dropped == {"auto_generated": 1, "too_short_comment": 1}
    corpus.write_preprocessed(kept, tmp_path / "pre.jsonl")
    back = corpus.load_pairs(tmp_path / "pre.jsonl")
    assert [(p.id, p.code_tokens, p.comment_tokens) for p in back] == \
        [(p.id, p.code_tokens, p.comment_tokens) for p in kept]
    for p in kept:
        assert 4 <= len(p.comment_tokens) <= 35 and 1 <= len(p.code_tokens) <= 100


def test_pair_ids_are_padded_with_zero():
    pairs = [_pair(0, 3, 5), _pair(1, 6, 4)]
    cv, mv = corpus.build_vocabs(pairs)
    corpus.encode_pairs(pairs, cv, mv)
    for p in pairs:
        assert p.code_ids.shape == (100,) and p.comment_ids.shape == (37,)
        n = len(p.code_tokens)
        assert np.all(p.code_ids[n:] == 0) and np.all(p.code_ids[:n] >= 4)
        assert np.all(p.code_ids < len(cv)) and np.all(p.comment_ids < len(mv))
