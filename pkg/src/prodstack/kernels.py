"""Hot inner loops, each in two flavours.

Every kernel exists as a vectorised numpy implementation (``*_np``) and an
explicit-loop implementation (``*_loops``) that is compiled with numba when
it is available. The unsuffixed public names dispatch to the compiled loop
version unless numba is missing or ``PRODSTACK_DISABLE_NUMBA`` is set.

Both flavours agree to rounding error; neither is bit-identical to the
other, so a given run is reproducible only within one backend.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "lstm_forward",
    "lstm_backward",
    "xcorr_lags",
    "ordinal_codes",
    "ste_from_codes",
]


# ---------------------------------------------------------------------------
# LSTM recurrence
#
# Gate rows in W/b are stacked [input, forget, output, candidate], each block
# c rows. W is (4c, l + c): the first l columns act on x_t, the rest on h_{t-1}.
# H and C hold the zero initial state at index 0, so H[:, t + 1] is h_t.
# G holds post-activation gate values.
# ---------------------------------------------------------------------------


def lstm_forward_np(x, W, b):
    n, T, l = x.shape
    c = W.shape[0] // 4
    Wx = W[:, :l]
    Wh = W[:, l:]
    H = np.zeros((n, T + 1, c))
    C = np.zeros((n, T + 1, c))
    G = np.empty((n, T, 4 * c))
    for t in range(T):
        z = x[:, t, :] @ Wx.T + H[:, t, :] @ Wh.T + b
        g = G[:, t, :]
        g[:, : 3 * c] = expit(z[:, : 3 * c])
        g[:, 3 * c :] = np.tanh(z[:, 3 * c :])
        C[:, t + 1] = g[:, c : 2 * c] * C[:, t] + g[:, :c] * g[:, 3 * c :]
        H[:, t + 1] = g[:, 2 * c : 3 * c] * np.tanh(C[:, t + 1])
    return H, C, G


def lstm_backward_np(x, W, H, C, G, dh_last):
    n, T, l = x.shape
    c = W.shape[0] // 4
    Wx = W[:, :l]
    Wh = W[:, l:]
    dW = np.zeros_like(W)
    db = np.zeros(4 * c)
    dx = np.zeros_like(x)
    dh = dh_last.copy()
    dc = np.zeros((n, c))
    dz = np.empty((n, 4 * c))
    for t in range(T - 1, -1, -1):
        g = G[:, t, :]
        i, f, o, cand = g[:, :c], g[:, c : 2 * c], g[:, 2 * c : 3 * c], g[:, 3 * c :]
        tc = np.tanh(C[:, t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :c] = dc * cand * i * (1.0 - i)
        dz[:, c : 2 * c] = dc * C[:, t] * f * (1.0 - f)
        dz[:, 2 * c : 3 * c] = dh * tc * o * (1.0 - o)
        dz[:, 3 * c :] = dc * i * (1.0 - cand * cand)
        dW[:, :l] += dz.T @ x[:, t, :]
        dW[:, l:] += dz.T @ H[:, t, :]
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ Wx
        dh = dz @ Wh
        dc = dc * f
    return dW, db, dx


@njit
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit
def lstm_forward_loops(x, W, b):
    n, T, l = x.shape
    c = W.shape[0] // 4
    H = np.zeros((n, T + 1, c))
    C = np.zeros((n, T + 1, c))
    G = np.empty((n, T, 4 * c))
    z = np.empty(4 * c)
    for s in range(n):
        for t in range(T):
            for r in range(4 * c):
                acc = b[r]
                for j in range(l):
                    acc += W[r, j] * x[s, t, j]
                for j in range(c):
                    acc += W[r, l + j] * H[s, t, j]
                z[r] = acc
            for r in range(3 * c):
                G[s, t, r] = _sigmoid(z[r])
            for r in range(3 * c, 4 * c):
                G[s, t, r] = math.tanh(z[r])
            for j in range(c):
                cell = G[s, t, c + j] * C[s, t, j] + G[s, t, j] * G[s, t, 3 * c + j]
                C[s, t + 1, j] = cell
                H[s, t + 1, j] = G[s, t, 2 * c + j] * math.tanh(cell)
    return H, C, G


@njit
def lstm_backward_loops(x, W, H, C, G, dh_last):
    n, T, l = x.shape
    c = W.shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros(4 * c)
    dx = np.zeros_like(x)
    dz = np.empty(4 * c)
    dh = np.empty(c)
    dc = np.empty(c)
    for s in range(n):
        for j in range(c):
            dh[j] = dh_last[s, j]
            dc[j] = 0.0
        for t in range(T - 1, -1, -1):
            for j in range(c):
                i = G[s, t, j]
                f = G[s, t, c + j]
                o = G[s, t, 2 * c + j]
                cand = G[s, t, 3 * c + j]
                tc = math.tanh(C[s, t + 1, j])
                dcj = dc[j] + dh[j] * o * (1.0 - tc * tc)
                dz[j] = dcj * cand * i * (1.0 - i)
                dz[c + j] = dcj * C[s, t, j] * f * (1.0 - f)
                dz[2 * c + j] = dh[j] * tc * o * (1.0 - o)
                dz[3 * c + j] = dcj * i * (1.0 - cand * cand)
                dc[j] = dcj * f
            for r in range(4 * c):
                g = dz[r]
                db[r] += g
                for j in range(l):
                    dW[r, j] += g * x[s, t, j]
                for j in range(c):
                    dW[r, l + j] += g * H[s, t, j]
            for j in range(l):
                acc = 0.0
                for r in range(4 * c):
                    acc += dz[r] * W[r, j]
                dx[s, t, j] = acc
            for j in range(c):
                acc = 0.0
                for r in range(4 * c):
                    acc += dz[r] * W[r, l + j]
                dh[j] = acc
    return dW, db, dx


# ---------------------------------------------------------------------------
# Lagged Pearson correlation, injection leading production by theta.
# ---------------------------------------------------------------------------


def xcorr_lags_np(y, b, theta_max):
    n = y.shape[0]
    out = np.zeros(theta_max + 1)
    for theta in range(theta_max + 1):
        yy = y[theta:]
        bb = b[: n - theta]
        yc = yy - yy.mean()
        bc = bb - bb.mean()
        syy = np.dot(yc, yc)
        sbb = np.dot(bc, bc)
        if syy <= 0.0 or sbb <= 0.0:
            continue
        out[theta] = np.dot(yc, bc) / math.sqrt(syy * sbb)
    return out


@njit
def xcorr_lags_loops(y, b, theta_max):
    n = y.shape[0]
    out = np.zeros(theta_max + 1)
    for theta in range(theta_max + 1):
        m = n - theta
        my = 0.0
        mb = 0.0
        for t in range(m):
            my += y[t + theta]
            mb += b[t]
        my /= m
        mb /= m
        syy = 0.0
        sbb = 0.0
        syb = 0.0
        for t in range(m):
            dy = y[t + theta] - my
            db_ = b[t] - mb
            syy += dy * dy
            sbb += db_ * db_
            syb += dy * db_
        if syy <= 0.0 or sbb <= 0.0:
            continue
        out[theta] = syb / math.sqrt(syy * sbb)
    return out


# ---------------------------------------------------------------------------
# Ordinal patterns.
#
# The symbol of a window is the stable argsort (equal values keep index
# order). It is stored as its Lehmer code, a dense integer in [0, m!).
# ---------------------------------------------------------------------------


def ordinal_codes_np(series, m, l):
    windows = sliding_window_view(series, (m - 1) * l + 1)[:, ::l]
    perms = np.argsort(windows, axis=1, kind="stable")
    codes = np.zeros(perms.shape[0], dtype=np.int64)
    for j in range(m):
        smaller_after = (perms[:, j + 1 :] < perms[:, j : j + 1]).sum(axis=1)
        codes = codes * (m - j) + smaller_after
    return codes


@njit
def ordinal_codes_loops(series, m, l):
    N = series.shape[0] - (m - 1) * l
    codes = np.zeros(N, dtype=np.int64)
    perm = np.empty(m, dtype=np.int64)
    for i in range(N):
        # insertion sort on indices is stable and cheap for small m
        for j in range(m):
            perm[j] = j
        for j in range(1, m):
            key = perm[j]
            v = series[i + key * l]
            k = j - 1
            while k >= 0 and series[i + perm[k] * l] > v:
                perm[k + 1] = perm[k]
                k -= 1
            perm[k + 1] = key
        code = 0
        for j in range(m):
            cnt = 0
            for k in range(j + 1, m):
                if perm[k] < perm[j]:
                    cnt += 1
            code = code * (m - j) + cnt
        codes[i] = code
    return codes


# ---------------------------------------------------------------------------
# Symbolic transfer entropy from code streams.
#
# Triples are (future target, present target, present source) over
# i = 0 .. N - delta - 1. All probabilities are plug-in counts, so the
# log-ratio p(a,b,c) p(b) / (p(b,c) p(a,b)) is formed from integers.
# ---------------------------------------------------------------------------


def ste_from_codes_np(target, source, delta, n_symbols):
    N = target.shape[0] - delta
    a = target[delta:]
    bb = target[:N]
    cc = source[:N]
    S = n_symbols
    n_abc = np.bincount((a * S + bb) * S + cc, minlength=S**3).reshape(S, S, S)
    n_ab = n_abc.sum(axis=2)
    n_bc = n_abc.sum(axis=0)
    n_b = n_ab.sum(axis=0)
    ia, ib, ic = np.nonzero(n_abc)
    num = n_abc[ia, ib, ic].astype(np.float64) * n_b[ib]
    den = n_bc[ib, ic].astype(np.float64) * n_ab[ia, ib]
    w = n_abc[ia, ib, ic] / N
    return float(np.sum(w * np.log2(num / den)))


@njit
def ste_from_codes_loops(target, source, delta, n_symbols):
    N = target.shape[0] - delta
    S = n_symbols
    n_abc = np.zeros((S, S, S), dtype=np.int64)
    for i in range(N):
        n_abc[target[i + delta], target[i], source[i]] += 1
    n_ab = np.zeros((S, S), dtype=np.int64)
    n_bc = np.zeros((S, S), dtype=np.int64)
    n_b = np.zeros(S, dtype=np.int64)
    for a in range(S):
        for b in range(S):
            for c in range(S):
                k = n_abc[a, b, c]
                n_ab[a, b] += k
                n_bc[b, c] += k
                n_b[b] += k
    total = 0.0
    for a in range(S):
        for b in range(S):
            for c in range(S):
                k = n_abc[a, b, c]
                if k == 0:
                    continue
                ratio = (float(k) * n_b[b]) / (float(n_bc[b, c]) * n_ab[a, b])
                total += (k / N) * math.log2(ratio)
    return total


if HAVE_NUMBA:
    lstm_forward = lstm_forward_loops
    lstm_backward = lstm_backward_loops
    xcorr_lags = xcorr_lags_loops
    ordinal_codes = ordinal_codes_loops
    ste_from_codes = ste_from_codes_loops
else:
    lstm_forward = lstm_forward_np
    lstm_backward = lstm_backward_np
    xcorr_lags = xcorr_lags_np
    ordinal_codes = ordinal_codes_np
    ste_from_codes = ste_from_codes_np
