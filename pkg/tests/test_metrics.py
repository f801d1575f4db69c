import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prodstack.metrics import ConstantTruth, LengthMismatch, evaluate, mae, r2_score, rmse

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_r2_examples():
    assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
    assert r2_score([2, 2, 2], [1, 2, 3]) == 0.0
    # ss_res = 8, ss_tot = 2
    assert r2_score([3, 2, 1], [1, 2, 3]) == -3.0


def test_rmse_mae_examples():
    y = np.array([10.0, 10.0])
    y_hat = y + np.array([3.0, -4.0])
    assert rmse(y_hat, y) == pytest.approx(np.sqrt(25.0 / 2.0), abs=0.0)
    assert rmse(y_hat, y) == pytest.approx(3.5355, abs=1e-4)
    assert mae(y_hat, y) == 3.5
    assert rmse(y, y) == 0.0 and mae(y, y) == 0.0


def test_errors():
    with pytest.raises(ConstantTruth):
        r2_score([1, 2, 3], [5, 5, 5])
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        mae([], [])


def test_evaluate_triple():
    m = evaluate([3, 2, 1], [1, 2, 3])
    assert (m.r2, m.mae, m.rmse) == (-3.0, 4.0 / 3.0, np.sqrt(8.0 / 3.0))


def test_rmse_dominates_mae_on_random_residuals():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        y = rng.normal(size=n)
        y_hat = y + rng.standard_cauchy(size=n)
        assert rmse(y_hat, y) >= mae(y_hat, y) - 1e-12


@settings(max_examples=200, deadline=None)
@given(arrays(float, st.integers(1, 40), elements=finite), st.floats(0.1, 100.0))
def test_rmse_equals_mae_for_equal_magnitudes(signs, scale):
    res = np.where(signs >= 0, scale, -scale)
    assert rmse(res, np.zeros_like(res)) == pytest.approx(mae(res, np.zeros_like(res)), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    arrays(float, st.integers(3, 40), elements=finite),
    st.data(),
    st.floats(0.01, 100.0),
    st.floats(-100.0, 100.0),
)
def test_r2_affine_and_permutation_invariance(y, data, a, b):
    if np.ptp(y) < 1e-3:
        return
    y_hat = data.draw(arrays(float, y.shape, elements=finite))
    base = r2_score(y_hat, y)
    assert base <= 1.0
    assert r2_score(a * y_hat + b, a * y + b) == pytest.approx(base, rel=1e-9, abs=1e-9)
    perm = np.random.default_rng(0).permutation(y.size)
    assert r2_score(y_hat[perm], y[perm]) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert rmse(y_hat[perm], y[perm]) == pytest.approx(rmse(y_hat, y), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 40), elements=finite), st.floats(-100.0, 100.0))
def test_mae_translation_invariance(y, c):
    y_hat = y[::-1].copy()
    assert mae(y_hat + c, y + c) == pytest.approx(mae(y_hat, y), rel=1e-9, abs=1e-9)
