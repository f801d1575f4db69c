"""The numpy and loop flavours of every hot kernel must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prodstack import _accel, kernels


def test_backend_flag_consistent():
    assert _accel.backend() in ("numba", "numpy")
    expected = kernels.lstm_forward_loops if _accel.HAVE_NUMBA else kernels.lstm_forward_np
    assert kernels.lstm_forward is expected


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(1, 4), st.integers(1, 5), st.integers(0, 10_000))
def test_lstm_flavours_agree(n, T, l, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, T, l))
    W = rng.normal(size=(4 * c, l + c))
    b = rng.normal(size=4 * c)
    out_np = kernels.lstm_forward_np(x, W, b)
    out_lp = kernels.lstm_forward_loops(x, W, b)
    for a, bb in zip(out_np, out_lp):
        assert np.allclose(a, bb, rtol=1e-12, atol=1e-13)
    H, C, G = out_np
    dh = rng.normal(size=(n, c))
    for a, bb in zip(kernels.lstm_backward_np(x, W, H, C, G, dh), kernels.lstm_backward_loops(x, W, H, C, G, dh)):
        assert np.allclose(a, bb, rtol=1e-11, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(15, 120), st.integers(0, 12), st.integers(0, 10_000))
def test_xcorr_flavours_agree(n, theta_max, seed):
    rng = np.random.default_rng(seed)
    y, b = rng.normal(size=n), rng.normal(size=n)
    b[: n // 3] = 1.0  # exercise near-constant windows
    assert np.allclose(kernels.xcorr_lags_np(y, b, theta_max), kernels.xcorr_lags_loops(y, b, theta_max), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 10_000))
def test_ordinal_and_ste_flavours_agree(m, l, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, size=300).astype(float)  # many ties
    y = rng.normal(size=300)
    cx_np, cx_lp = kernels.ordinal_codes_np(x, m, l), kernels.ordinal_codes_loops(x, m, l)
    assert np.array_equal(cx_np, cx_lp)
    cy = kernels.ordinal_codes_np(y, m, l)
    S = int(np.prod(np.arange(1, m + 1)))
    for delta in (1, 3):
        a = kernels.ste_from_codes_np(cy, cx_np, delta, S)
        b = kernels.ste_from_codes_loops(cy, cx_np, delta, S)
        assert a == pytest.approx(b, abs=1e-12)
