import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evsumm.model import network as N
from evsumm.model.config import ModelConfig
from evsumm.model.decoding import (beam_decode, beam_search, greedy_decode, greedy_search, model_step,
                                   sequence_score)
from oracles import exhaustive_argmax
from toy import prefix_model, toy_model


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6), st.integers(0, 3))
def test_beam_one_equals_greedy(V, seed, min_len):
    step, init = toy_model(V, seed)
    eos = V - 1
    g_tokens, g_score, g_done = greedy_search(step, init, max_len=6, sos=V, eos=eos, min_len=min_len)
    hyp = beam_search(step, init, 1, max_len=6, sos=V, eos=eos, min_len=min_len)
    assert hyp.tokens == g_tokens and hyp.finished == g_done
    assert hyp.score == g_score


@pytest.mark.parametrize("V", [2, 3, 4])
@pytest.mark.parametrize("T", [1, 2, 3, 4])
def test_full_beam_matches_exhaustive(V, T):
    for seed in range(5):
        step, init = toy_model(V, seed * 31 + V * 7 + T)
        eos = V - 1
        score, seq = exhaustive_argmax(step, init, V, eos, max_len=T - 1, sos=V)
        hyp = beam_search(step, init, V ** T, max_len=T - 1, sos=V, eos=eos)
        assert hyp.finished
        assert hyp.score == pytest.approx(score, abs=1e-12)
        assert hyp.tokens == seq


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(1, 4), st.integers(0, 10**6), st.integers(1, 8))
def test_full_beam_dominates_smaller_beams(V, T, seed, width):
    step, init = toy_model(V, seed)
    full = beam_search(step, init, V ** T, max_len=T - 1, sos=V, eos=V - 1)
    small = beam_search(step, init, width, max_len=T - 1, sos=V, eos=V - 1)
    if small.finished:
        assert full.score >= small.score - 1e-12


def _trap(path):
    # greedy goes a -> a -> EOS; a width-2 beam is lured down b and never recovers
    table = {(): [0.40, 0.35, 0.05, 0.20], (0,): [0.26, 0.25, 0.25, 0.24],
             (0, 0): [1e-9, 1e-9, 1e-9, 1 - 3e-9], (1,): [0.45, 0.04, 0.50, 0.01]}
    return table.get(path, [0.3, 0.3, 0.3, 0.1])


def test_wider_beam_can_score_lower():
    step, init = prefix_model(_trap, sos=4)
    greedy = beam_search(step, init, 1, max_len=4, sos=4, eos=3)
    step, init = prefix_model(_trap, sos=4)
    wider = beam_search(step, init, 2, max_len=4, sos=4, eos=3)
    assert greedy.tokens == [0, 0] and greedy.finished
    assert wider.score < greedy.score


def test_beam_finished_hypotheses_score_is_sum():
    step, init = toy_model(5, 3)
    hyp = beam_search(step, init, 3, max_len=5, sos=5, eos=4)
    assert hyp.score == pytest.approx(sequence_score(step, init, hyp.tokens, sos=5, eos=4, finished=hyp.finished),
                                      abs=1e-12)


def test_max_and_min_length():
    # EOS is never likely: search stops at max_len, unfinished
    never = lambda path: [0.5, 0.5 - 1e-6, 1e-6]
    step, init = prefix_model(never, sos=3)
    tokens, _, done = greedy_search(step, init, max_len=4, sos=3, eos=2)
    assert len(tokens) == 4 and not done
    step, init = prefix_model(never, sos=3)
    hyp = beam_search(step, init, 2, max_len=4, sos=3, eos=2)
    assert len(hyp.tokens) == 4 and not hyp.finished
    always = lambda path: [0.1, 0.1, 0.8]
    step, init = prefix_model(always, sos=3)
    assert greedy_search(step, init, max_len=4, sos=3, eos=2)[0] == []
    step, init = prefix_model(always, sos=3)
    assert len(beam_search(step, init, 3, max_len=4, sos=3, eos=2, min_len=2).tokens) == 2
    with pytest.raises(ValueError):
        beam_search(step, init, 0)


CFG = ModelConfig(code_vocab=12, comment_vocab=9, embedding_dim=4, hidden_dim=4, num_layers=1, dropout=0.0,
                  max_comment_len=6)


def _model(seed):
    rng = np.random.default_rng(seed)
    p = N.init_params(CFG, rng)
    p["out_W"] = rng.normal(scale=3, size=p["out_W"].shape)
    return p


@pytest.mark.parametrize("seed", range(5))
def test_network_beam_one_equals_greedy(seed):
    p = _model(seed)
    code = np.array([4, 5, 6, 7, 0, 0])
    assert beam_decode(code, p, CFG, 1, min_len=1) == greedy_decode(code, p, CFG, min_len=1)


def test_network_decoding_ignores_padding():
    p = _model(9)
    a = beam_decode(np.array([4, 5, 6]), p, CFG, 3)
    b = beam_decode(np.array([4, 5, 6] + [0] * 40), p, CFG, 3)
    assert a == b


def test_model_step_batches_hypotheses():
    p = _model(1)
    enc = N.encode(np.array([4, 5, 6]), p, CFG)
    step = model_step(p, enc)
    h, c = N.initial_state(enc, p)
    logp, (h2, _) = step(np.array([2, 2, 5]), (np.stack([h] * 3), np.stack([c] * 3)))
    np.testing.assert_allclose(logp[0], logp[1])
    logits, _ = N.decode_step(5, (h, c), enc, p)
    np.testing.assert_allclose(logp[2], N._log_softmax(logits), atol=1e-13)
