"""Pair filtering, vocabulary, id encoding and dataset splits."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tokenizer import TokenSequence, tokenize

PAD, UNK, SOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<sos>", "<eos>")

MIN_COMMENT = 4
MAX_COMMENT = 35
MAX_CODE = 100

AUTO_GENERATED_MARKERS = ("auto-generated", "generated by", "@generated")
ENGLISH_ASCII_RATIO = 0.9


class CorpusError(ValueError):
    pass


@dataclass
class PairRecord:
    id: str
    code_tokens: TokenSequence
    comment_tokens: TokenSequence
    code_ids: np.ndarray | None = None
    comment_ids: np.ndarray | None = None


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str | None = None


@dataclass
class FilterConfig:
    min_comment: int = MIN_COMMENT
    max_comment: int = MAX_COMMENT
    max_code: int = MAX_CODE
    ascii_ratio: float = ENGLISH_ASCII_RATIO
    auto_markers: tuple[str, ...] = AUTO_GENERATED_MARKERS


def _ascii_letter_ratio(text: str) -> float:
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return 1.0
    return sum(ch.isascii() for ch in letters) / len(letters)


def filter_pair(raw_comment: str, raw_code: str, config: FilterConfig | None = None) -> FilterDecision:
    cfg = config or FilterConfig()
    lowered = raw_comment.lower()
    if any(marker in lowered for marker in cfg.auto_markers):
        return FilterDecision(False, "auto_generated")
    if _ascii_letter_ratio(raw_comment) < cfg.ascii_ratio:
        return FilterDecision(False, "non_english")
    n_comment = len(tokenize(raw_comment, "comment"))
    if n_comment < cfg.min_comment:
        return FilterDecision(False, "too_short_comment")
    if n_comment > cfg.max_comment:
        return FilterDecision(False, "too_long_comment")
    n_code = len(tokenize(raw_code, "code"))
    if n_code > cfg.max_code or n_code < 1:
        return FilterDecision(False, "too_long_code" if n_code else "empty_code")
    return FilterDecision(True)


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.itos[:4]) != RESERVED:
            raise CorpusError("vocabulary must start with the four reserved tokens")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise CorpusError("duplicate token in vocabulary")

    @property
    def size(self) -> int:
        return len(self.itos)

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS:
                break
            if strip and i in (PAD, SOS):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(sequences: Iterable[Sequence[str]], max_size: int | None = None, min_freq: int = 1) -> Vocabulary:
    """Frequency-ordered vocabulary; ties broken lexicographically.

    ``max_size`` counts corpus tokens only, not the four reserved ids.
    """
    counts: Counter[str] = Counter()
    n = 0
    for seq in sequences:
        n += 1
        counts.update(seq)
    if n == 0 or not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    ranked = sorted((tok for tok, c in counts.items() if c >= min_freq and tok not in RESERVED),
                    key=lambda tok: (-counts[tok], tok))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary(list(RESERVED) + ranked)


def build_vocabs(pairs: Sequence[PairRecord], max_size: int | None = None,
                 min_freq: int = 1) -> tuple[Vocabulary, Vocabulary]:
    code = build_vocab((p.code_tokens.tokens for p in pairs), max_size, min_freq)
    comment = build_vocab((p.comment_tokens.tokens for p in pairs), max_size, min_freq)
    return code, comment


def encode(seq: Sequence[str], vocab: Vocabulary, max_len: int, add_delimiters: bool = False) -> np.ndarray:
    ids = [vocab.id(tok) for tok in seq]
    if add_delimiters:
        ids = [SOS] + ids + [EOS]
    if len(ids) > max_len:
        raise CorpusError(f"sequence of {len(ids)} ids exceeds max_len={max_len}")
    out = np.zeros(max_len, dtype=np.int64)
    out[: len(ids)] = ids
    return out


def encode_pairs(pairs: Sequence[PairRecord], code_vocab: Vocabulary, comment_vocab: Vocabulary,
                 max_code: int = MAX_CODE, max_comment: int = MAX_COMMENT) -> None:
    """Fill ``code_ids``/``comment_ids`` in place; comments carry SOS/EOS."""
    for p in pairs:
        p.code_ids = encode(p.code_tokens.tokens, code_vocab, max_code)
        p.comment_ids = encode(p.comment_tokens.tokens, comment_vocab, max_comment + 2, add_delimiters=True)


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]
    seed: int


def split_dataset(pair_ids: Sequence[str], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    n = len(pair_ids)
    if n < 3:
        raise CorpusError("need at least 3 pairs to split")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise CorpusError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [pair_ids[i] for i in order]
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_valid = math.floor(ratios[1] * n + 1e-9)
    return SplitAssignment(tuple(shuffled[:n_train]), tuple(shuffled[n_train:n_train + n_valid]),
                           tuple(shuffled[n_train + n_valid:]), seed)


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    """Q1, median, Q3 by the exclusive median-of-halves rule."""
    xs = sorted(values)
    n = len(xs)
    if n == 0:
        raise CorpusError("quartiles of an empty sample")

    def median(v):
        m = len(v)
        return v[m // 2] if m % 2 else (v[m // 2 - 1] + v[m // 2]) / 2

    if n == 1:
        return xs[0], xs[0], xs[0]
    lower = xs[: n // 2]
    upper = xs[(n + 1) // 2:]
    return median(lower), median(xs), median(upper)


def corpus_stats(pairs: Sequence[PairRecord]) -> dict:
    if not pairs:
        raise CorpusError("empty corpus")
    stats = {}
    for name, attr in (("comment", "comment_tokens"), ("code", "code_tokens")):
        seqs = [getattr(p, attr).tokens for p in pairs]
        lengths = [len(s) for s in seqs]
        q1, q2, q3 = quartiles(lengths)
        stats[name] = {
            "mean": sum(lengths) / len(lengths),
            "q1": q1, "q2": q2, "q3": q3,
            "unique_tokens": len({t for s in seqs for t in s}),
        }
    return stats


def read_raw_pairs(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = {"id", "code", "comment"} - row.keys()
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            rows.append(row)
    return rows


def preprocess(rows: Iterable[dict], config: FilterConfig | None = None) -> tuple[list[PairRecord], Counter]:
    """Tokenize and filter raw rows; returns kept records and drop-reason counts."""
    kept, dropped = [], Counter()
    for row in rows:
        decision = filter_pair(row["comment"], row["code"], config)
        if not decision.keep:
            dropped[decision.reason] += 1
            continue
        kept.append(PairRecord(str(row["id"]), tokenize(row["code"], "code"), tokenize(row["comment"], "comment")))
    return kept, dropped


def write_preprocessed(pairs: Iterable[PairRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "code_tokens": list(p.code_tokens.tokens),
                                 "comment_tokens": list(p.comment_tokens.tokens)}, ensure_ascii=False) + "\n")


def read_preprocessed(path) -> list[PairRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(PairRecord(str(row["id"]), TokenSequence(tuple(row["code_tokens"]), "code"),
                                      TokenSequence(tuple(row["comment_tokens"]), "comment")))
    return out


def load_pairs(path, config: FilterConfig | None = None) -> list[PairRecord]:
    """Read either a raw pairs file or a preprocessed one."""
    with open(path, encoding="utf-8") as fh:
        first = next((ln for ln in fh if ln.strip()), None)
    if first is None:
        raise CorpusError(f"{path}: no pairs")
    if "code_tokens" in json.loads(first):
        return read_preprocessed(path)
    kept, _ = preprocess(read_raw_pairs(path), config)
    return kept
