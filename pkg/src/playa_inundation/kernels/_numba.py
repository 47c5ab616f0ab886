"""Loop-level kernels compiled with numba; same contracts as ``_numpy``."""

import math

import numpy as np

from .._backend import njit


@njit
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit
def lstm_forward(xproj, w_hh):
    T, B, G = xproj.shape
    H = G // 4
    w_t = np.ascontiguousarray(w_hh.T)
    gates = np.empty((T, B, G))
    c = np.zeros((T + 1, B, H))
    h = np.zeros((T + 1, B, H))
    tanh_c = np.empty((T, B, H))
    pre = np.empty(G)
    for t in range(T):
        for b in range(B):
            # axpy order (no reductions) so the inner loop vectorizes
            for k in range(G):
                pre[k] = xproj[t, b, k]
            for j in range(H):
                hj = h[t, b, j]
                for k in range(G):
                    pre[k] += hj * w_t[j, k]
            for k in range(G):
                if 2 * H <= k < 3 * H:
                    gates[t, b, k] = math.tanh(pre[k])
                else:
                    gates[t, b, k] = _sigmoid(pre[k])
            for j in range(H):
                i = gates[t, b, j]
                f = gates[t, b, H + j]
                g = gates[t, b, 2 * H + j]
                o = gates[t, b, 3 * H + j]
                cn = f * c[t, b, j] + i * g
                c[t + 1, b, j] = cn
                tc = math.tanh(cn)
                tanh_c[t, b, j] = tc
                h[t + 1, b, j] = o * tc
    return gates, c, h, tanh_c


@njit
def lstm_backward(dh_out, gates, c, tanh_c, w_hh):
    T, B, G = gates.shape
    H = G // 4
    dpre = np.empty((T, B, G))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                i = gates[t, b, j]
                f = gates[t, b, H + j]
                g = gates[t, b, 2 * H + j]
                o = gates[t, b, 3 * H + j]
                tc = tanh_c[t, b, j]
                dh = dh_out[t, b, j] + dh_next[b, j]
                dc = dc_next[b, j] + dh * o * (1.0 - tc * tc)
                dpre[t, b, j] = dc * g * i * (1.0 - i)
                dpre[t, b, H + j] = dc * c[t, b, j] * f * (1.0 - f)
                dpre[t, b, 2 * H + j] = dc * i * (1.0 - g * g)
                dpre[t, b, 3 * H + j] = dh * tc * o * (1.0 - o)
                dc_next[b, j] = dc * f
            for j in range(H):
                dh_next[b, j] = 0.0
            for k in range(G):
                d = dpre[t, b, k]
                for j in range(H):
                    dh_next[b, j] += d * w_hh[k, j]
    return dpre


@njit
def lookup_cells(xs, ys, origin_x, origin_y, cell_size, values, outside):
    height, width = values.shape
    n = xs.shape[0]
    codes = np.empty(n, dtype=np.int64)
    for p in range(n):
        col = math.floor((xs[p] - origin_x) / cell_size)
        row = math.floor((origin_y - ys[p]) / cell_size)
        if 0 <= col < width and 0 <= row < height:
            codes[p] = values[int(row), int(col)]
        else:
            codes[p] = outside
    return codes
