"""Greedy and beam-search decoding.

Both work against a *step function*::

    step(prev_ids (K,), state) -> (log_probs (K, V), next_state)

where ``state`` is a tuple of arrays whose first axis indexes the K live
hypotheses.  :func:`model_step` adapts the trained network to that shape,
and toy step functions plug in the same way.

Scores are sums of per-step log-probabilities.  ``max_len`` bounds the
number of emitted tokens excluding EOS, so at most ``max_len + 1`` steps
run.  ``min_len`` suppresses EOS until that many tokens exist.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import EOS, SOS
from .network import DecoderContext, decode_steps, encode, initial_state


@dataclass
class BeamHypothesis:
    tokens: list[int]
    score: float
    state: tuple
    finished: bool = False


def _suppress_eos(logp, n_tokens, min_len, eos):
    if n_tokens < min_len:
        logp = logp.copy()
        logp[:, eos] = -np.inf
    return logp


def greedy_search(step, init_state, max_len: int = 35, sos: int = SOS, eos: int = EOS,
                  min_len: int = 0) -> tuple[list[int], float, bool]:
    """Argmax at each step; returns (tokens without EOS, score, finished)."""
    state = tuple(np.asarray(s)[None] for s in init_state)
    prev = np.array([sos])
    tokens: list[int] = []
    score = 0.0
    for _ in range(max_len + 1):
        logp, state = step(prev, state)
        logp = _suppress_eos(logp, len(tokens), min_len, eos)
        tok = int(np.argmax(logp[0]))
        score += float(logp[0, tok])
        if tok == eos:
            return tokens, score, True
        tokens.append(tok)
        prev = np.array([tok])
    return tokens[:max_len], score, False


def beam_search(step, init_state, beam_width: int, max_len: int = 35, sos: int = SOS, eos: int = EOS,
                min_len: int = 0, length_normalize: bool = False) -> BeamHypothesis:
    """Keep the ``beam_width`` best expansions per step.

    Expansions ending in EOS leave the beam as finished hypotheses.  Without
    length normalization, search stops as soon as the best finished score is
    at least the best live score, since scores can only decrease.  Ties go
    to the earlier hypothesis, then the lower token id, so a width of one
    reproduces :func:`greedy_search` exactly.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")

    def rank(h: BeamHypothesis) -> float:
        if length_normalize:
            return h.score / max(1, len(h.tokens) + int(h.finished))
        return h.score

    live_tokens: list[list[int]] = [[]]
    live_scores = np.zeros(1)
    state = tuple(np.asarray(s)[None] for s in init_state)
    prev = np.array([sos])
    finished: list[BeamHypothesis] = []
    for n_tokens in range(max_len + 1):
        logp, state = step(prev, state)
        logp = _suppress_eos(logp, n_tokens, min_len, eos)
        V = logp.shape[1]
        total = (live_scores[:, None] + logp).ravel()
        # rounding in the sum can tie distinct steps; fall back to the step's own log-prob
        order = np.lexsort((-logp.ravel(), -total))[:beam_width]
        order = order[np.isfinite(total[order])]
        keep_rows, keep_tokens, keep_scores = [], [], []
        for flat in order:
            row, tok = divmod(int(flat), V)
            if tok == eos:
                finished.append(BeamHypothesis(live_tokens[row], float(total[flat]), (), True))
            else:
                keep_rows.append(row)
                keep_tokens.append(live_tokens[row] + [tok])
                keep_scores.append(float(total[flat]))
        if not keep_rows:
            break
        idx = np.array(keep_rows)
        state = tuple(s[idx] for s in state)
        live_tokens, live_scores = keep_tokens, np.array(keep_scores)
        prev = np.array([t[-1] for t in live_tokens])
        if finished and not length_normalize and max(h.score for h in finished) >= live_scores.max():
            break
    if finished:
        return max(finished, key=rank)  # max keeps the first of equal ranks
    best = int(np.argmax(live_scores))
    return BeamHypothesis(live_tokens[best][:max_len], float(live_scores[best]),
                          tuple(s[best] for s in state), False)


def sequence_score(step, init_state, tokens, sos: int = SOS, eos: int = EOS, finished: bool = True,
                   min_len: int = 0) -> float:
    """Summed log-probability of ``tokens`` (+ EOS when ``finished``)."""
    state = tuple(np.asarray(s)[None] for s in init_state)
    prev = np.array([sos])
    seq = list(tokens) + ([eos] if finished else [])
    score = 0.0
    for n, tok in enumerate(seq):
        logp, state = step(prev, state)
        logp = _suppress_eos(logp, n, min_len, eos)
        score += float(logp[0, tok])
        prev = np.array([tok])
    return score


def model_step(params, enc):
    ctx = DecoderContext.from_states(enc, params)

    def step(prev_ids, state):
        h, c = state
        logp, h, c = decode_steps(prev_ids, h, c, ctx, params)
        return logp, (h, c)

    return step


def _prepare(code_ids, params, cfg):
    enc = encode(code_ids, params, cfg, "infer")
    return model_step(params, enc), initial_state(enc, params)


def greedy_decode(code_ids, params, cfg, min_len: int = 0) -> list[int]:
    step, init = _prepare(code_ids, params, cfg)
    return greedy_search(step, init, cfg.max_comment_len, min_len=min_len)[0]


def beam_decode(code_ids, params, cfg, beam_width: int | None = None, min_len: int = 0) -> list[int]:
    step, init = _prepare(code_ids, params, cfg)
    hyp = beam_search(step, init, beam_width or cfg.beam_width, cfg.max_comment_len, min_len=min_len,
                      length_normalize=cfg.length_normalize)
    return hyp.tokens
