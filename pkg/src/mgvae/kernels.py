"""Sequence kernels for the gated recurrent layers.

The full-sequence forward and backward-through-time loops live here as numba
kernels (pure-python fallback if numba is unavailable). They are wrapped into
single graph nodes by ``layers.Recurrent``; correctness is enforced by the
finite-difference checks and by the cell-vs-kernel equivalence tests.

Gate block order in all fused (4H) arrays: input, forget, candidate, output.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True, nogil=True)
def lstm_forward(xw: np.ndarray, u: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    """Run the recurrence over ``xw = X @ Wx.T + b`` of shape (T, 4H).

    Returns hidden states (T, H) and a cache (T, 6H) holding per-step
    [i, f, g, o, c_prev, tanh(c)] needed by the backward pass.
    """
    T, h4 = xw.shape
    H = h4 // 4
    hs = np.empty((T, H), xw.dtype)
    cache = np.empty((T, 6 * H), xw.dtype)
    h = h0.copy()
    c = c0.copy()
    for t in range(T):
        a = xw[t] + u @ h
        for j in range(H):
            i = 1.0 / (1.0 + np.exp(-a[j]))
            f = 1.0 / (1.0 + np.exp(-a[H + j]))
            g = np.tanh(a[2 * H + j])
            o = 1.0 / (1.0 + np.exp(-a[3 * H + j]))
            c_prev = c[j]
            c_new = f * c_prev + i * g
            tc = np.tanh(c_new)
            cache[t, j] = i
            cache[t, H + j] = f
            cache[t, 2 * H + j] = g
            cache[t, 3 * H + j] = o
            cache[t, 4 * H + j] = c_prev
            cache[t, 5 * H + j] = tc
            c[j] = c_new
            h[j] = o * tc
        hs[t] = h
    return hs, cache


@njit(cache=True, nogil=True)
def lstm_backward(dhs: np.ndarray, cache: np.ndarray, u: np.ndarray,
                  hs: np.ndarray, h0: np.ndarray):
    """Backward through time. Returns (d_xw, d_u, d_h0)."""
    T, H = dhs.shape
    dxw = np.zeros((T, 4 * H), dhs.dtype)
    du = np.zeros_like(u)
    dh = np.zeros(H, dhs.dtype)
    dc = np.zeros(H, dhs.dtype)
    da = np.empty(4 * H, dhs.dtype)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            dhj = dhs[t, j] + dh[j]
            i = cache[t, j]
            f = cache[t, H + j]
            g = cache[t, 2 * H + j]
            o = cache[t, 3 * H + j]
            c_prev = cache[t, 4 * H + j]
            tc = cache[t, 5 * H + j]
            do = dhj * tc
            dcj = dhj * o * (1.0 - tc * tc) + dc[j]
            da[j] = dcj * g * i * (1.0 - i)
            da[H + j] = dcj * c_prev * f * (1.0 - f)
            da[2 * H + j] = dcj * i * (1.0 - g * g)
            da[3 * H + j] = do * o * (1.0 - o)
            dc[j] = dcj * f
        h_prev = hs[t - 1] if t > 0 else h0
        for k in range(4 * H):
            v = da[k]
            dxw[t, k] = v
            for j in range(H):
                du[k, j] += v * h_prev[j]
        dh = u.T @ da
    return dxw, du, dh
