"""Masked LSTM recurrences over a whole sequence.

Gate layout along the last axis is [input, forget, output, candidate].
A position with mask 0 carries the previous (h, c) through unchanged, so
right-padding never leaks into real positions: the forward direction ends
on the last real state and the reverse direction starts from zeros.

``xproj`` already holds ``x_t @ Wx + b``; the kernels add ``h_prev @ Wh``.
"""
import numpy as np

from .._accel import USE_NUMBA, njit


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_forward_numpy(xproj, mask, Wh, reverse):
    T, B, G = xproj.shape
    H = G // 4
    hs = np.zeros((T, B, H))
    cs = np.zeros((T, B, H))
    gates = np.zeros((T, B, G))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = xproj[t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        m = mask[t][:, None]
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = o
        gates[t, :, 3 * H:] = g
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def lstm_backward_numpy(dhs, mask, Wh, hs, cs, gates, reverse):
    T, B, H = dhs.shape
    dxproj = np.zeros((T, B, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    zeros = np.zeros((B, H))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        p = t + 1 if reverse else t - 1
        h_prev = hs[p] if 0 <= p < T else zeros
        c_prev = cs[p] if 0 <= p < T else zeros
        m = mask[t][:, None]
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        o = gates[t, :, 2 * H:3 * H]
        g = gates[t, :, 3 * H:]
        dh = dhs[t] + dh_next
        # masked positions store c_prev in cs[t]; their dz is zero anyway
        c_new = f * c_prev + i * g
        tc = np.tanh(c_new)
        dh_new = m * dh
        dc_new = m * dc_next + dh_new * o * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, :H] = dc_new * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc_new * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh_new * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc_new * i * (1.0 - g * g)
        dxproj[t] = dz
        dWh += h_prev.T @ dz
        dh_next = dz @ Wh.T + (1.0 - m) * dh
        dc_next = dc_new * f + (1.0 - m) * dc_next
    return dxproj, dWh


@njit
def _sig(x):
    # exp-based: scalar libm tanh is several times slower than exp under numba
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit
def _tanh(x):
    return 2.0 * _sig(2.0 * x) - 1.0


@njit
def lstm_forward_loops(xproj, mask, Wh, reverse):
    T, B, G = xproj.shape
    H = G // 4
    hs = np.zeros((T, B, H))
    cs = np.zeros((T, B, H))
    gates = np.zeros((T, B, G))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for s in range(T):
        t = T - 1 - s if reverse else s
        z = np.dot(h, Wh)
        for b in range(B):
            m = mask[t, b]
            for q in range(H):
                ig = _sig(z[b, q] + xproj[t, b, q])
                fg = _sig(z[b, H + q] + xproj[t, b, H + q])
                og = _sig(z[b, 2 * H + q] + xproj[t, b, 2 * H + q])
                gg = _tanh(z[b, 3 * H + q] + xproj[t, b, 3 * H + q])
                gates[t, b, q] = ig
                gates[t, b, H + q] = fg
                gates[t, b, 2 * H + q] = og
                gates[t, b, 3 * H + q] = gg
                c_new = fg * c[b, q] + ig * gg
                h_new = og * _tanh(c_new)
                c[b, q] = m * c_new + (1.0 - m) * c[b, q]
                h[b, q] = m * h_new + (1.0 - m) * h[b, q]
                cs[t, b, q] = c[b, q]
                hs[t, b, q] = h[b, q]
    return hs, cs, gates


@njit
def lstm_backward_loops(dhs, mask, Wh, hs, cs, gates, reverse):
    T, B, H = dhs.shape
    G = 4 * H
    dxproj = np.zeros((T, B, G))
    dWh = np.zeros(Wh.shape)
    WhT = np.ascontiguousarray(Wh.T)
    dh_carry = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    h_prev = np.zeros((B, H))
    dz = np.empty((B, G))
    for s in range(T):
        t = s if reverse else T - 1 - s
        p = t + 1 if reverse else t - 1
        has_prev = 0 <= p < T
        for b in range(B):
            m = mask[t, b]
            for q in range(H):
                hp = hs[p, b, q] if has_prev else 0.0
                cp = cs[p, b, q] if has_prev else 0.0
                h_prev[b, q] = hp
                ig = gates[t, b, q]
                fg = gates[t, b, H + q]
                og = gates[t, b, 2 * H + q]
                gg = gates[t, b, 3 * H + q]
                dh = dhs[t, b, q] + dh_carry[b, q]
                tc = _tanh(fg * cp + ig * gg)
                dh_new = m * dh
                dc_new = m * dc_next[b, q] + dh_new * og * (1.0 - tc * tc)
                dz[b, q] = dc_new * gg * ig * (1.0 - ig)
                dz[b, H + q] = dc_new * cp * fg * (1.0 - fg)
                dz[b, 2 * H + q] = dh_new * tc * og * (1.0 - og)
                dz[b, 3 * H + q] = dc_new * ig * (1.0 - gg * gg)
                dc_next[b, q] = dc_new * fg + (1.0 - m) * dc_next[b, q]
                dh_carry[b, q] = (1.0 - m) * dh
        dxproj[t] = dz
        dWh += np.dot(h_prev.T, dz)
        dh_carry += np.dot(dz, WhT)
    return dxproj, dWh


if USE_NUMBA:
    lstm_forward, lstm_backward = lstm_forward_loops, lstm_backward_loops
else:
    lstm_forward, lstm_backward = lstm_forward_numpy, lstm_backward_numpy
