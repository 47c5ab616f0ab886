"""Vectorized numpy kernels (loops only over time)."""

import numpy as np


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_forward(xproj, w_hh):
    """Run the LSTM recurrence.

    Args:
        xproj: (T, B, 4H) input projection ``x_t @ W_ih.T + b_ih + b_hh``.
        w_hh: (4H, H) recurrent weights, gate blocks ordered [i, f, g, o].

    Returns:
        gates: (T, B, 4H) activated gates.
        c: (T + 1, B, H) cell states, ``c[0]`` is the zero initial state.
        h: (T + 1, B, H) hidden states, ``h[0]`` is zero.
        tanh_c: (T, B, H) ``tanh(c[1:])``.
    """
    T, B, G = xproj.shape
    H = G // 4
    gates = np.empty((T, B, G))
    c = np.zeros((T + 1, B, H))
    h = np.zeros((T + 1, B, H))
    tanh_c = np.empty((T, B, H))
    w_hh_t = np.ascontiguousarray(w_hh.T)
    for t in range(T):
        pre = xproj[t] + h[t] @ w_hh_t
        gates[t, :, : 2 * H] = _sigmoid(pre[:, : 2 * H])
        gates[t, :, 2 * H : 3 * H] = np.tanh(pre[:, 2 * H : 3 * H])
        gates[t, :, 3 * H :] = _sigmoid(pre[:, 3 * H :])
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        g = gates[t, :, 2 * H : 3 * H]
        o = gates[t, :, 3 * H :]
        c[t + 1] = f * c[t] + i * g
        tanh_c[t] = np.tanh(c[t + 1])
        h[t + 1] = o * tanh_c[t]
    return gates, c, h, tanh_c


def lstm_backward(dh_out, gates, c, tanh_c, w_hh):
    """Backpropagate through the recurrence.

    ``dh_out`` (T, B, H) is the loss gradient reaching each ``h_t`` from the
    output head. Returns the pre-activation gate gradients (T, B, 4H).
    """
    T, B, G = gates.shape
    H = G // 4
    dpre = np.empty((T, B, G))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        g = gates[t, :, 2 * H : 3 * H]
        o = gates[t, :, 3 * H :]
        tc = tanh_c[t]
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dpre[t, :, :H] = dc * g * i * (1.0 - i)
        dpre[t, :, H : 2 * H] = dc * c[t] * f * (1.0 - f)
        dpre[t, :, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dpre[t, :, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dpre[t] @ w_hh
    return dpre


def lookup_cells(xs, ys, origin_x, origin_y, cell_size, values, outside):
    """Class code under each point; ``outside`` where a point misses the grid."""
    height, width = values.shape
    col = np.floor((xs - origin_x) / cell_size)
    row = np.floor((origin_y - ys) / cell_size)
    inside = (col >= 0) & (col < width) & (row >= 0) & (row < height)
    codes = np.full(xs.shape, outside, dtype=np.int64)
    codes[inside] = values[row[inside].astype(np.int64), col[inside].astype(np.int64)]
    return codes
