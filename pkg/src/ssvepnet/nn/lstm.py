"""Stacked LSTM forward/backward.

Gate layout along the ``4H`` axis is input, forget, output, candidate. The
time recursions run in numba; the dense products around them stay in numpy.
"""
import numba
import numpy as np


_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10


@numba.njit(cache=True, fastmath=True)
def _vexp(x, out, kbuf):
    """``out = exp(x)`` over flat arrays, written so the loops vectorise.

    Range reduction to ``r`` in [-ln2/2, ln2/2], a degree-12 Taylor
    polynomial (error below 1e-15 relative), then scaling by ``2**k`` built
    directly in the exponent bits.
    """
    n = x.size
    for i in range(n):
        v = min(max(x[i], -700.0), 700.0)
        k = np.floor(v * _LOG2E + 0.5)
        r = v - k * _LN2_HI - k * _LN2_LO
        p = 1.0 / 479001600.0
        p = p * r + 1.0 / 39916800.0
        p = p * r + 1.0 / 3628800.0
        p = p * r + 1.0 / 362880.0
        p = p * r + 1.0 / 40320.0
        p = p * r + 1.0 / 5040.0
        p = p * r + 1.0 / 720.0
        p = p * r + 1.0 / 120.0
        p = p * r + 1.0 / 24.0
        p = p * r + 1.0 / 6.0
        p = p * r + 0.5
        p = p * r + 1.0
        p = p * r + 1.0
        out[i] = p
        kbuf[i] = (np.int64(k) + 1023) << 52
    scale = kbuf.view(np.float64)
    for i in range(n):
        out[i] *= scale[i]


@numba.njit(cache=True, fastmath=True)
def _vexp32(x, out, kbuf):
    """Single-precision ``_vexp``: degree-7 polynomial, ``2**k`` via int32 exponent bits."""
    n = x.size
    for i in range(n):
        v = min(max(x[i], np.float32(-80.0)), np.float32(80.0))
        k = np.floor(v * np.float32(_LOG2E) + np.float32(0.5))
        r = v - k * np.float32(0.693145751953125) - k * np.float32(1.428606765330187e-06)
        p = np.float32(1.0 / 5040.0)
        p = p * r + np.float32(1.0 / 720.0)
        p = p * r + np.float32(1.0 / 120.0)
        p = p * r + np.float32(1.0 / 24.0)
        p = p * r + np.float32(1.0 / 6.0)
        p = p * r + np.float32(0.5)
        p = p * r + np.float32(1.0)
        p = p * r + np.float32(1.0)
        out[i] = p
        kbuf[i] = (np.int32(k) + 127) << 23
    scale = kbuf.view(np.float32)
    for i in range(n):
        out[i] *= scale[i]


@numba.njit(cache=True, fastmath=True)
def _recur_forward(xw, U, hs, cs, tcs, gates, single, arg, ex, kbuf, carg, cex, ckbuf):
    # integer literals keep the arithmetic in the array dtype. ``single``
    # selects the exp routine at run time; a function argument would make the
    # kernel uncacheable.
    T, N, H4 = xw.shape
    H = H4 // 4
    z = np.zeros((N, H4), xw.dtype)
    for t in range(T):
        if t > 0:
            # BLAS into a preallocated buffer; no per-step allocation
            np.dot(hs[t - 1], U, z)
        # sigmoid(z) = 1 / (1 + e^-z), tanh(z) = 2 / (1 + e^-2z) - 1
        for n in range(N):
            for j in range(3 * H):
                arg[n * H4 + j] = -(z[n, j] + xw[t, n, j])
            for j in range(3 * H, H4):
                arg[n * H4 + j] = -2 * (z[n, j] + xw[t, n, j])
        if single:
            _vexp32(arg, ex, kbuf)
        else:
            _vexp(arg, ex, kbuf)
        for n in range(N):
            for j in range(3 * H):
                gates[t, n, j] = 1 / (1 + ex[n * H4 + j])
            for j in range(3 * H, H4):
                gates[t, n, j] = 2 / (1 + ex[n * H4 + j]) - 1
            for j in range(H):
                c = gates[t, n, j] * gates[t, n, 3 * H + j]
                if t > 0:
                    c += gates[t, n, H + j] * cs[t - 1, n, j]
                cs[t, n, j] = c
                carg[n * H + j] = -2 * c
        if single:
            _vexp32(carg, cex, ckbuf)
        else:
            _vexp(carg, cex, ckbuf)
        for n in range(N):
            for j in range(H):
                tc = 2 / (1 + cex[n * H + j]) - 1
                tcs[t, n, j] = tc
                hs[t, n, j] = gates[t, n, 2 * H + j] * tc


def _run_forward(xw, U, hs, cs, tcs, gates):
    N, H4 = xw.shape[1:]
    dt = xw.dtype
    if dt not in (np.float32, np.float64):
        raise TypeError(f"LSTM runs in float32 or float64, not {dt}")
    single = dt == np.float32
    kdt = np.int32 if single else np.int64
    H = H4 // 4
    _recur_forward(xw, U, hs, cs, tcs, gates, single,
                   np.empty(N * H4, dt), np.empty(N * H4, dt), np.empty(N * H4, kdt),
                   np.empty(N * H, dt), np.empty(N * H, dt), np.empty(N * H, kdt))


@numba.njit(cache=True, fastmath=True)
def _recur_backward(dhs, cs, tcs, gates, UT, dz):
    T, N, H = cs.shape
    dc = np.zeros((N, H), cs.dtype)
    dh = np.zeros((N, H), cs.dtype)
    for t in range(T - 1, -1, -1):
        for n in range(N):
            for j in range(H):
                d = dh[n, j] + dhs[t, n, j]
                i = gates[t, n, j]
                f = gates[t, n, H + j]
                o = gates[t, n, 2 * H + j]
                g = gates[t, n, 3 * H + j]
                tc = tcs[t, n, j]
                dcc = dc[n, j] + d * o * (1.0 - tc * tc)
                c_prev = cs[t - 1, n, j] if t > 0 else 0.0
                dz[t, n, j] = dcc * g * i * (1.0 - i)
                dz[t, n, H + j] = dcc * c_prev * f * (1.0 - f)
                dz[t, n, 2 * H + j] = d * tc * o * (1.0 - o)
                dz[t, n, 3 * H + j] = dcc * i * (1.0 - g * g)
                dc[n, j] = dcc * f
        if t > 0:
            np.dot(dz[t], UT, dh)


def layer_forward(x, W, U, b):
    """One LSTM layer over a ``(T, N, D)`` sequence; returns all hidden states and a cache."""
    T, N, D = x.shape
    H = U.shape[0]
    if W.shape != (D, 4 * H):
        raise ValueError(f"input size {D} does not match LSTM weight {W.shape}")
    xw = (x.reshape(T * N, D) @ W + b).reshape(T, N, 4 * H)
    hs = np.empty((T, N, H), x.dtype)
    cs = np.empty((T, N, H), x.dtype)
    tcs = np.empty((T, N, H), x.dtype)
    gates = np.empty((T, N, 4 * H), x.dtype)
    _run_forward(np.ascontiguousarray(xw), np.ascontiguousarray(U.astype(x.dtype, copy=False)), hs, cs, tcs, gates)
    return hs, (x, hs, cs, tcs, gates)


def layer_backward(dhs, cache, W, U, need_dx=True):
    x, hs, cs, tcs, gates = cache
    T, N, D = x.shape
    H = U.shape[0]
    dz = np.empty((T, N, 4 * H), x.dtype)
    _recur_backward(np.ascontiguousarray(dhs), cs, tcs, gates, np.ascontiguousarray(U.T), dz)
    dz2 = dz.reshape(T * N, 4 * H)
    dW = x.reshape(T * N, D).T @ dz2
    dU = hs[:-1].reshape((T - 1) * N, H).T @ dz[1:].reshape((T - 1) * N, 4 * H)
    db = dz2.sum(axis=0)
    dx = (dz2 @ W.T).reshape(T, N, D) if need_dx else None
    return dx, dW, dU, db


def stack_forward(x, layers):
    """Run ``x`` of shape ``(T, N, D)`` through ``[(W, U, b), ...]``; returns final hidden ``(N, H)``."""
    caches = []
    h = x
    for W, U, b in layers:
        h, cache = layer_forward(h, W, U, b)
        caches.append(cache)
    return h[-1].copy(), caches


def stack_backward(dh_last, caches, layers, need_input_grad=True):
    T, N, _ = caches[-1][1].shape
    dhs = np.zeros((T, N, dh_last.shape[1]), dh_last.dtype)
    dhs[-1] = dh_last
    grads = []
    for depth, (cache, (W, U, b)) in enumerate(zip(reversed(caches), reversed(layers))):
        dhs, dW, dU, db = layer_backward(dhs, cache, W, U, need_dx=need_input_grad or depth < len(layers) - 1)
        grads.append((dW, dU, db))
    return dhs, grads[::-1]


def reference_forward(x, layers):
    """Plain numpy LSTM used to cross-check the compiled recursion."""
    h_seq = np.asarray(x, dtype=float)
    for W, U, b in layers:
        T, N, _ = h_seq.shape
        H = U.shape[0]
        h = np.zeros((N, H))
        c = np.zeros((N, H))
        out = np.empty((T, N, H), x.dtype)
        for t in range(T):
            z = h_seq[t] @ W + h @ U + b
            i = 1 / (1 + np.exp(-z[:, :H]))
            f = 1 / (1 + np.exp(-z[:, H:2 * H]))
            o = 1 / (1 + np.exp(-z[:, 2 * H:3 * H]))
            g = np.tanh(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            out[t] = h
        h_seq = out
    return h_seq[-1]
