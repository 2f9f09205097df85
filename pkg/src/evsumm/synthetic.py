"""Small generated corpora for smoke runs, benchmarks and memorization checks."""
from __future__ import annotations

import numpy as np

from .corpus import PairRecord, build_vocabs, encode_pairs
from .tokenizer import TokenSequence


def memorization_corpus(n_pairs: int = 50, code_words: int = 26, comment_words: int = 26,
                        code_len=(5, 10), comment_len=(4, 7), seed: int = 0) -> list[PairRecord]:
    """Pairs whose comments are arbitrary but fixed functions of their code."""
    rng = np.random.default_rng(seed)
    code_vocab = [f"c{i}" for i in range(code_words)]
    comment_vocab = [f"w{i}" for i in range(comment_words)]
    pairs, seen = [], set()
    while len(pairs) < n_pairs:
        code = tuple(rng.choice(code_vocab, rng.integers(code_len[0], code_len[1] + 1)))
        if code in seen:
            continue
        seen.add(code)
        comment = tuple(rng.choice(comment_vocab, rng.integers(comment_len[0], comment_len[1] + 1)))
        pairs.append(PairRecord(f"syn-{len(pairs)}", TokenSequence(tuple(map(str, code)), "code"),
                                TokenSequence(tuple(map(str, comment)), "comment")))
    return pairs


def encoded_memorization_corpus(**kwargs):
    pairs = memorization_corpus(**kwargs)
    code_vocab, comment_vocab = build_vocabs(pairs)
    encode_pairs(pairs, code_vocab, comment_vocab)
    return pairs, code_vocab, comment_vocab
