"""Bidirectional LSTM encoder, additive attention, LSTM decoder.

Parameters live in a plain ``dict[str, ndarray]`` (float64).  Everything
is batch-first at the API and time-first inside the recurrences.

Shapes (E embedding, H hidden per direction, A = H attention width):

    enc_emb        (code_vocab, E)
    enc{l}_{f,b}_Wx (E or 2H, 4H)   _Wh (H, 4H)   _b (4H,)
    init_W (2H, H)  init_b (H,)      decoder h0 from final fwd/bwd states
    dec_emb        (comment_vocab, E)
    att_W (2H, A)   att_U (H, A)     att_v (A,)
    dec_Wx (E + 2H, 4H)  dec_Wh (H, 4H)  dec_b (4H,)
    out_W (H, comment_vocab)  out_b (comment_vocab,)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import EOS, PAD, SOS
from . import kernels
from .config import ModelConfig


class ModelError(ValueError):
    pass


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    E, H = cfg.embedding_dim, cfg.hidden_dim
    shapes = {"enc_emb": (cfg.code_vocab, E)}
    for layer in range(cfg.num_layers):
        d_in = E if layer == 0 else 2 * H
        for side in "fb":
            shapes[f"enc{layer}_{side}_Wx"] = (d_in, 4 * H)
            shapes[f"enc{layer}_{side}_Wh"] = (H, 4 * H)
            shapes[f"enc{layer}_{side}_b"] = (4 * H,)
    shapes.update({
        "init_W": (2 * H, H), "init_b": (H,),
        "dec_emb": (cfg.comment_vocab, E),
        "att_W": (2 * H, H), "att_U": (H, H), "att_v": (H,),
        "dec_Wx": (E + 2 * H, 4 * H), "dec_Wh": (H, 4 * H), "dec_b": (4 * H,),
        "out_W": (H, cfg.comment_vocab), "out_b": (cfg.comment_vocab,),
    })
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator, enc_emb: np.ndarray | None = None,
                dec_emb: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Embeddings U(-1, 1); weights U(-1/sqrt(H), 1/sqrt(H)); forget bias 1."""
    cfg.validate()
    H = cfg.hidden_dim
    scale = 1.0 / np.sqrt(H)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_emb"):
            params[name] = rng.uniform(-1.0, 1.0, shape)
        elif name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-scale, scale, shape)
    for name in params:
        if name.endswith("_b") and params[name].shape == (4 * H,):
            params[name][H:2 * H] = 1.0
    for name, given in (("enc_emb", enc_emb), ("dec_emb", dec_emb)):
        if given is not None:
            if given.shape != params[name].shape:
                raise ModelError(f"{name}: expected shape {params[name].shape}, got {given.shape}")
            params[name] = np.array(given, dtype=np.float64)
    return params


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _check_ids(ids: np.ndarray, vocab: int, what: str) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ModelError(f"{what} id out of range [0, {vocab})")


# --- encoder ----------------------------------------------------------------

@dataclass
class EncoderStates:
    """Top-layer states of one source sequence: ``H`` is (T_x, 2H)."""
    H: np.ndarray
    final: np.ndarray

    @property
    def length(self) -> int:
        return self.H.shape[0]


def _encode_batch(params, cfg: ModelConfig, src: np.ndarray, train: bool, rng):
    """src (B, T) ids, right-padded with 0 -> (Henc (B, T, 2H), mask (B, T), cache)."""
    _check_ids(src, cfg.code_vocab, "code")
    mask = (src != PAD).astype(np.float64)
    lengths = mask.sum(axis=1).astype(int)
    T = int(lengths.max()) if lengths.size else 0
    src, mask = src[:, :T], mask[:, :T]
    m = np.ascontiguousarray(mask.T)
    inp = params["enc_emb"][src.T]  # (T, B, E)
    layers = []
    for layer in range(cfg.num_layers):
        drop = None
        if layer > 0 and train and cfg.dropout > 0:
            drop = _dropout_mask(rng, inp.shape, cfg.dropout)
            inp = inp * drop
        sides = {}
        for side, reverse in (("f", False), ("b", True)):
            xproj = np.ascontiguousarray(inp @ params[f"enc{layer}_{side}_Wx"] + params[f"enc{layer}_{side}_b"])
            hs, cs, gates = kernels.lstm_forward(xproj, m, params[f"enc{layer}_{side}_Wh"], reverse)
            sides[side] = (hs, cs, gates)
        layers.append({"inp": inp, "drop": drop, "sides": sides})
        inp = np.concatenate([sides["f"][0], sides["b"][0]], axis=-1)
    Henc = np.ascontiguousarray(inp.transpose(1, 0, 2))  # (B, T, 2H)
    if T:
        final = np.concatenate([inp[T - 1, :, :cfg.hidden_dim], inp[0, :, cfg.hidden_dim:]], axis=-1)
    else:
        final = np.zeros((src.shape[0], 2 * cfg.hidden_dim))
    cache = {"src": src, "m": m, "layers": layers, "T": T}
    return Henc, mask, final, cache


def encode(code_ids, params, cfg: ModelConfig, mode: str = "infer", rng=None) -> EncoderStates:
    """Encode one padded source sequence; padding positions are dropped from ``H``."""
    src = np.asarray(code_ids, dtype=np.int64)[None, :]
    Henc, mask, final, _ = _encode_batch(params, cfg, src, mode == "train", rng)
    n = int(mask.sum())
    return EncoderStates(Henc[0, :n], final[0])


# --- attention / decoder step -------------------------------------------------

def _attend(params, Henc, WH, mask, h_prev):
    """Additive scores ``v . tanh(W h_j + U s)`` softmaxed over real positions."""
    pre = WH + (h_prev @ params["att_U"])[:, None, :]
    ta = np.tanh(pre)
    e = ta @ params["att_v"]
    e = np.where(mask > 0, e, -np.inf)
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    ctx = np.einsum("bt,btk->bk", alpha, Henc)
    return alpha, ctx, ta


def attention(s_prev, enc: EncoderStates, params) -> tuple[np.ndarray, np.ndarray]:
    if enc.length == 0:
        raise ModelError("attention over an empty source")
    Henc = enc.H[None]
    WH = Henc @ params["att_W"]
    alpha, ctx, _ = _attend(params, Henc, WH, np.ones((1, enc.length)), np.asarray(s_prev)[None])
    return alpha[0], ctx[0]


def _cell(params, x, h, c):
    H = h.shape[1]
    z = x @ params["dec_Wx"] + h @ params["dec_Wh"] + params["dec_b"]
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H:2 * H])
    o = _sigmoid(z[:, 2 * H:3 * H])
    g = np.tanh(z[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, o, g, tc)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class DecoderContext:
    """Per-source quantities reused at every decoding step."""
    Henc: np.ndarray  # (1, T, 2H)
    WH: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_states(cls, enc: EncoderStates, params) -> "DecoderContext":
        if enc.length == 0:
            raise ModelError("cannot decode from an empty source")
        Henc = enc.H[None]
        return cls(Henc, Henc @ params["att_W"], np.ones((1, enc.length)))


def initial_state(enc: EncoderStates, params) -> tuple[np.ndarray, np.ndarray]:
    h0 = enc.final @ params["init_W"] + params["init_b"]
    return h0, np.zeros_like(h0)


def decode_steps(prev_ids, h, c, ctx: DecoderContext, params):
    """One decoder step for K hypotheses sharing a source; returns log-probs (K, V)."""
    prev_ids = np.asarray(prev_ids, dtype=np.int64)
    _check_ids(prev_ids, params["dec_emb"].shape[0], "comment")
    K = prev_ids.shape[0]
    emb = params["dec_emb"][prev_ids]
    Henc = np.broadcast_to(ctx.Henc, (K,) + ctx.Henc.shape[1:])
    WH = np.broadcast_to(ctx.WH, (K,) + ctx.WH.shape[1:])
    mask = np.broadcast_to(ctx.mask, (K, ctx.mask.shape[1]))
    _, context, _ = _attend(params, Henc, WH, mask, h)
    h_new, c_new, _ = _cell(params, np.concatenate([emb, context], axis=1), h, c)
    logits = h_new @ params["out_W"] + params["out_b"]
    return _log_softmax(logits), h_new, c_new


def decode_step(prev_token_id: int, state, enc: EncoderStates, params, mode: str = "infer", rng=None,
                dropout: float = 0.0):
    """Single-hypothesis step: (logits, (h, c))."""
    h, c = state
    h = np.asarray(h)[None]
    c = np.asarray(c)[None]
    ctx = DecoderContext.from_states(enc, params)
    emb = params["dec_emb"][np.array([prev_token_id])]
    if mode == "train" and dropout > 0:
        emb = emb * _dropout_mask(rng, emb.shape, dropout)
    _, context, _ = _attend(params, ctx.Henc, ctx.WH, ctx.mask, h)
    h_new, c_new, _ = _cell(params, np.concatenate([emb, context], axis=1), h, c)
    logits = h_new @ params["out_W"] + params["out_b"]
    return logits[0], (h_new[0], c_new[0])


# --- teacher-forced loss and gradients --------------------------------------

@dataclass
class Batch:
    code_ids: np.ndarray     # (B, Tx) padded
    comment_ids: np.ndarray  # (B, Ty) with SOS ... EOS, padded

    @classmethod
    def from_pairs(cls, pairs) -> "Batch":
        return cls(np.stack([p.code_ids for p in pairs]), np.stack([p.comment_ids for p in pairs]))


def forward(params, cfg: ModelConfig, batch: Batch, train: bool = False, rng=None):
    """Teacher-forced pass; returns (summed loss, target token count, cache)."""
    if batch.code_ids.shape[0] == 0:
        raise ModelError("empty batch")
    if train and cfg.dropout > 0 and rng is None:
        raise ModelError("training-mode forward with dropout needs an rng")
    Henc, mask, final, enc_cache = _encode_batch(params, cfg, batch.code_ids, train, rng)
    if enc_cache["T"] == 0:
        raise ModelError("batch contains no source tokens")
    if np.any(mask.sum(axis=1) == 0):
        raise ModelError("empty source sequence in batch")
    tgt = np.asarray(batch.comment_ids, dtype=np.int64)
    _check_ids(tgt, cfg.comment_vocab, "comment")
    Ty = int((tgt != PAD).sum(axis=1).max())
    dec_in, dec_out = tgt[:, :Ty - 1], tgt[:, 1:Ty]
    tmask = (dec_out != PAD).astype(np.float64)

    WH = Henc @ params["att_W"]
    h = final @ params["init_W"] + params["init_b"]
    c = np.zeros_like(h)
    B = tgt.shape[0]
    rows = np.arange(B)
    total = 0.0
    steps = []
    for t in range(Ty - 1):
        emb = params["dec_emb"][dec_in[:, t]]
        drop = None
        if train and cfg.dropout > 0:
            drop = _dropout_mask(rng, emb.shape, cfg.dropout)
            emb = emb * drop
        alpha, ctx, ta = _attend(params, Henc, WH, mask, h)
        x = np.concatenate([emb, ctx], axis=1)
        h_new, c_new, gates = _cell(params, x, h, c)
        logits = h_new @ params["out_W"] + params["out_b"]
        logp = _log_softmax(logits)
        total -= float(np.sum(tmask[:, t] * logp[rows, dec_out[:, t]]))
        steps.append({"x": x, "drop": drop, "alpha": alpha, "ta": ta, "h_prev": h, "c_prev": c,
                      "gates": gates, "h": h_new, "logp": logp})
        h, c = h_new, c_new
    cache = {"enc": enc_cache, "Henc": Henc, "mask": mask, "final": final, "dec_in": dec_in,
             "dec_out": dec_out, "tmask": tmask, "steps": steps}
    return total, int(tmask.sum()), cache


def loss(params, cfg: ModelConfig, batch: Batch, train: bool = False, rng=None) -> tuple[float, int]:
    total, count, _ = forward(params, cfg, batch, train, rng)
    return total, count


def backward(params, cfg: ModelConfig, cache) -> dict[str, np.ndarray]:
    """Exact gradients of the summed loss recorded in ``cache``."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    H = cfg.hidden_dim
    E = cfg.embedding_dim
    Henc, mask = cache["Henc"], cache["mask"]
    dec_in, dec_out, tmask = cache["dec_in"], cache["dec_out"], cache["tmask"]
    B = Henc.shape[0]
    rows = np.arange(B)
    dHenc = np.zeros_like(Henc)
    dWH = np.zeros(Henc.shape[:2] + (H,))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    v, U = params["att_v"], params["att_U"]
    for t in range(len(cache["steps"]) - 1, -1, -1):
        st = cache["steps"][t]
        dlogits = np.exp(st["logp"])
        dlogits[rows, dec_out[:, t]] -= 1.0
        dlogits *= tmask[:, t][:, None]
        grads["out_W"] += st["h"].T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        dh = dh + dlogits @ params["out_W"].T
        i, f, o, g, tc = st["gates"]
        do = dh * tc
        dcn = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([dcn * g * i * (1.0 - i), dcn * st["c_prev"] * f * (1.0 - f),
                             do * o * (1.0 - o), dcn * i * (1.0 - g * g)], axis=1)
        grads["dec_Wx"] += st["x"].T @ dz
        grads["dec_Wh"] += st["h_prev"].T @ dz
        grads["dec_b"] += dz.sum(axis=0)
        dx = dz @ params["dec_Wx"].T
        dh = dz @ params["dec_Wh"].T
        dc = dcn * f
        demb = dx[:, :E]
        if st["drop"] is not None:
            demb = demb * st["drop"]
        np.add.at(grads["dec_emb"], dec_in[:, t], demb)
        dctx = dx[:, E:]
        alpha, ta = st["alpha"], st["ta"]
        dHenc += alpha[:, :, None] * dctx[:, None, :]
        dalpha = np.einsum("bk,btk->bt", dctx, Henc)
        de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        grads["att_v"] += np.einsum("bt,bta->a", de, ta)
        dpre = de[:, :, None] * v * (1.0 - ta * ta)
        dWH += dpre
        dpre_sum = dpre.sum(axis=1)
        grads["att_U"] += st["h_prev"].T @ dpre_sum
        dh = dh + dpre_sum @ U.T
    # dh now holds the gradient w.r.t. the decoder's initial hidden state
    grads["att_W"] += np.einsum("btk,bta->ka", Henc, dWH)
    dHenc += dWH @ params["att_W"].T
    grads["init_W"] += cache["final"].T @ dh
    grads["init_b"] += dh.sum(axis=0)
    dfinal = dh @ params["init_W"].T

    enc = cache["enc"]
    T = enc["T"]
    dtop = np.ascontiguousarray(dHenc.transpose(1, 0, 2))  # (T, B, 2H)
    dtop[T - 1, :, :H] += dfinal[:, :H]
    dtop[0, :, H:] += dfinal[:, H:]
    m = enc["m"]
    for layer in range(cfg.num_layers - 1, -1, -1):
        rec = enc["layers"][layer]
        dinp = np.zeros_like(rec["inp"])
        for side, reverse, part in (("f", False, slice(0, H)), ("b", True, slice(H, 2 * H))):
            hs, cs, gates = rec["sides"][side]
            Wh = params[f"enc{layer}_{side}_Wh"]
            dxproj, dWh = kernels.lstm_backward(np.ascontiguousarray(dtop[:, :, part]), m, Wh, hs, cs, gates, reverse)
            grads[f"enc{layer}_{side}_Wh"] += dWh
            grads[f"enc{layer}_{side}_Wx"] += np.einsum("tbd,tbg->dg", rec["inp"], dxproj)
            grads[f"enc{layer}_{side}_b"] += dxproj.sum(axis=(0, 1))
            dinp += dxproj @ params[f"enc{layer}_{side}_Wx"].T
        if rec["drop"] is not None:
            dinp = dinp * rec["drop"]
        if layer > 0:
            dtop = dinp
        else:
            np.add.at(grads["enc_emb"], enc["src"].T, dinp)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads


def loss_and_grads(params, cfg: ModelConfig, batch: Batch, train: bool = True, rng=None):
    total, count, cache = forward(params, cfg, batch, train, rng)
    return total, count, backward(params, cfg, cache)
