"""BLEU4, METEOR and perplexity."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

MAX_ORDER = 4
EXACT_CHUNK_LIMIT = 12


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_ngram_precision(candidate: Sequence[str], reference: Sequence[str], n: int) -> tuple[int, int]:
    """(clipped matches, candidate n-gram count)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams(candidate, n)
    if not cand:
        return 0, 0
    ref = _ngrams(reference, n)
    clipped = sum(min(count, ref[gram]) for gram, count in cand.items())
    return clipped, sum(cand.values())


def brevity_penalty(c: int, r: int) -> float:
    if c > r:
        return 1.0
    if c == 0:
        return 0.0
    return math.exp(1.0 - r / c)


def _bleu_from_counts(matches, totals, c, r, smooth: bool) -> float:
    log_sum = 0.0
    for n, (m, t) in enumerate(zip(matches, totals), 1):
        if smooth and n > 1:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    return brevity_penalty(c, r) * math.exp(log_sum / len(matches))


def sentence_bleu(candidate, reference, max_order: int = MAX_ORDER, smooth: bool = False) -> float:
    stats = [modified_ngram_precision(candidate, reference, n) for n in range(1, max_order + 1)]
    return _bleu_from_counts([s[0] for s in stats], [s[1] for s in stats], len(candidate), len(reference), smooth)


def bleu4(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
          aggregation: str = "corpus", smooth: bool = False, max_order: int = MAX_ORDER) -> float:
    """Corpus-pooled (default) or sentence-averaged BLEU.

    A zero modified precision at any order gives a score of 0 unless
    ``smooth`` adds one to the counts of orders two and up.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("no candidates to score")
    if aggregation == "mean":
        return sum(sentence_bleu(c, r, max_order, smooth) for c, r in zip(candidates, references)) / len(candidates)
    if aggregation != "corpus":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    matches, totals = [0] * max_order, [0] * max_order
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_order + 1):
            m, t = modified_ngram_precision(cand, ref, n)
            matches[n - 1] += m
            totals[n - 1] += t
    return _bleu_from_counts(matches, totals, c_len, r_len, smooth)


# --- METEOR -----------------------------------------------------------------

def count_chunks(alignment: Sequence[tuple[int, int]]) -> int:
    """Number of runs that are adjacent and in order on both sides."""
    pairs = sorted(alignment)
    if not pairs:
        return 0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    return chunks


def _greedy_alignment(candidate, reference) -> list[tuple[int, int]]:
    free: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        free.setdefault(tok, []).append(j)
    pairs, last_j = [], None
    for i, tok in enumerate(candidate):
        slots = free.get(tok)
        if not slots:
            continue
        j = last_j + 1 if last_j is not None and last_j + 1 in slots else slots[0]
        slots.remove(j)
        pairs.append((i, j))
        last_j = j
    return pairs


def _min_chunk_alignment(candidate, reference) -> list[tuple[int, int]]:
    """Maximum-cardinality exact alignment with the fewest chunks.

    Depth-first over candidate positions; a branch is cut when it can no
    longer reach full cardinality or cannot beat the best chunk count.
    """
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)
    need = Counter(candidate) & Counter(reference)
    target = sum(need.values())
    # matches still obtainable from position i onward, per token
    remaining_tok = [dict() for _ in range(len(candidate) + 1)]
    for i in range(len(candidate) - 1, -1, -1):
        d = dict(remaining_tok[i + 1])
        d[candidate[i]] = d.get(candidate[i], 0) + 1
        remaining_tok[i] = d

    best: list = [None, math.inf]
    used: set[int] = set()
    chosen: list[tuple[int, int]] = []
    matched = Counter()

    def reachable(i):
        return sum(min(need[t] - matched[t], c) for t, c in remaining_tok[i].items() if t in need)

    def search(i, chunks, last):
        if chunks >= best[1]:
            return
        if len(chosen) + reachable(i) < target:
            return
        if len(chosen) == target:
            best[0], best[1] = list(chosen), chunks
            return
        tok = candidate[i]
        if matched[tok] < need[tok]:
            opts = [j for j in positions.get(tok, ()) if j not in used]
            # try the chunk-continuing slot first so good bounds arrive early
            if last is not None and last[0] == i - 1 and last[1] + 1 in opts:
                opts.remove(last[1] + 1)
                opts.insert(0, last[1] + 1)
            for j in opts:
                extends = last is not None and last[0] == i - 1 and last[1] == j - 1
                used.add(j)
                chosen.append((i, j))
                matched[tok] += 1
                search(i + 1, chunks + (0 if extends else 1), (i, j))
                matched[tok] -= 1
                chosen.pop()
                used.discard(j)
        search(i + 1, chunks, last)

    search(0, 0, None)
    return best[0] or []


def align(candidate: Sequence[str], reference: Sequence[str],
          exact_limit: int = EXACT_CHUNK_LIMIT) -> list[tuple[int, int]]:
    n_matches = sum((Counter(candidate) & Counter(reference)).values())
    if n_matches == 0:
        return []
    if n_matches <= exact_limit:
        return _min_chunk_alignment(list(candidate), list(reference))
    return _greedy_alignment(candidate, reference)


@dataclass(frozen=True)
class MeteorStats:
    matches: int
    chunks: int
    cand_len: int
    ref_len: int


def meteor_stats(candidate, reference, exact_limit: int = EXACT_CHUNK_LIMIT) -> MeteorStats:
    alignment = align(candidate, reference, exact_limit)
    return MeteorStats(len(alignment), count_chunks(alignment), len(candidate), len(reference))


def meteor_from_stats(s: MeteorStats, mode: str = "paper_literal") -> float:
    if s.matches == 0:
        return 0.0
    p = s.matches / s.cand_len
    r = s.matches / s.ref_len
    penalty = 0.5 * (s.chunks / s.matches) ** 3
    if mode == "paper_literal":
        fmean = 10 * r * p / (r + p)
    elif mode == "standard":
        fmean = 10 * p * r / (r + 9 * p)
    else:
        raise ValueError(f"unknown METEOR mode {mode!r}")
    return fmean * (1 - penalty)


def meteor(candidate: Sequence[str], reference: Sequence[str], mode: str = "paper_literal",
           exact_limit: int = EXACT_CHUNK_LIMIT) -> float:
    """Exact-match METEOR.

    ``paper_literal`` uses 10RP/(R+P), which reaches 5 for identical inputs
    before the fragmentation penalty; ``standard`` uses 10PR/(R+9P).
    """
    return meteor_from_stats(meteor_stats(candidate, reference, exact_limit), mode)


def corpus_meteor(candidates, references, mode: str = "paper_literal", aggregation: str = "mean",
                  exact_limit: int = EXACT_CHUNK_LIMIT) -> float:
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("no candidates to score")
    stats = [meteor_stats(c, r, exact_limit) for c, r in zip(candidates, references)]
    if aggregation == "mean":
        return sum(meteor_from_stats(s, mode) for s in stats) / len(stats)
    if aggregation != "corpus":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    pooled = MeteorStats(sum(s.matches for s in stats), sum(s.chunks for s in stats),
                         sum(s.cand_len for s in stats), sum(s.ref_len for s in stats))
    return meteor_from_stats(pooled, mode)


def perplexity(total_loss: float, token_count: int) -> float:
    if token_count < 1:
        raise ValueError("perplexity needs at least one token")
    return math.exp(total_loss / token_count)


@dataclass
class MetricReport:
    bleu4: float
    meteor: float
    meteor_mode: str
    n: int
    perplexity: float | None = None
    bleu_aggregation: str = "corpus"
    meteor_aggregation: str = "mean"
    per_sentence: list[dict] = field(default_factory=list)
    extra_meteor: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"bleu4": self.bleu4, "meteor": self.meteor, "meteor_mode": self.meteor_mode,
               "perplexity": self.perplexity, "n": self.n,
               "bleu_aggregation": self.bleu_aggregation, "meteor_aggregation": self.meteor_aggregation}
        if self.extra_meteor:
            out["meteor_modes"] = dict(self.extra_meteor)
        out["per_sentence"] = self.per_sentence
        return out


def evaluate_pairs(ids, candidates, references, meteor_mode: str = "paper_literal",
                   bleu_aggregation: str = "corpus", meteor_aggregation: str = "mean",
                   all_meteor_modes: bool = False, perplexity_value: float | None = None) -> MetricReport:
    per = []
    for pid, cand, ref in zip(ids, candidates, references):
        s = meteor_stats(cand, ref)
        row = {"id": pid, "bleu4": sentence_bleu(cand, ref), "meteor": meteor_from_stats(s, meteor_mode)}
        if all_meteor_modes:
            row["meteor_modes"] = {m: meteor_from_stats(s, m) for m in ("paper_literal", "standard")}
        per.append(row)
    report = MetricReport(
        bleu4=bleu4(candidates, references, bleu_aggregation),
        meteor=corpus_meteor(candidates, references, meteor_mode, meteor_aggregation),
        meteor_mode=meteor_mode, n=len(candidates), perplexity=perplexity_value,
        bleu_aggregation=bleu_aggregation, meteor_aggregation=meteor_aggregation, per_sentence=per)
    if all_meteor_modes:
        report.extra_meteor = {m: corpus_meteor(candidates, references, m, meteor_aggregation)
                               for m in ("paper_literal", "standard")}
    return report
