import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prodstack.core_data import StaticRecord, WellId
from prodstack.preprocess import (
    AllMissing,
    ConstantSeries,
    InsufficientDonors,
    TooShort,
    acf,
    apply_minmax,
    build_samples,
    clean_dynamic,
    clean_static,
    detect_outliers_iqr,
    fit_minmax,
    fit_sample_scalers,
    impute_dynamic_interp,
    impute_static_knn,
    normalize_samples,
    read_scalers,
    window_series,
    write_scalers,
)


def r7_quantile(values, p):
    """Linear interpolation between order statistics, written out by hand."""
    xs = sorted(values)
    h = (len(xs) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def oracle_outliers(values, fence=1.5):
    q1, q3 = r7_quantile(values, 0.25), r7_quantile(values, 0.75)
    iqr = q3 - q1
    if iqr == 0:
        return [False] * len(values)
    return [v < q1 - fence * iqr or v > q3 + fence * iqr for v in values]


def test_r7_hand_values():
    x = [1, 2, 3, 4, 5, 6, 7, 8, 9, 100]
    assert r7_quantile(x, 0.25) == 3.25 and r7_quantile(x, 0.75) == 7.75


def test_outliers_examples():
    assert not detect_outliers_iqr([5, 5, 5, 5, 5]).any()
    mask = detect_outliers_iqr([1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
    assert mask.tolist() == [False] * 9 + [True]
    assert not detect_outliers_iqr(np.arange(1, 21)).any()
    with pytest.raises(TooShort):
        detect_outliers_iqr([1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(arrays(float, st.integers(4, 60), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_outliers_match_oracle_and_spare_interior(x):
    mask = detect_outliers_iqr(x)
    assert mask.tolist() == oracle_outliers(x.tolist())
    q1, q3 = r7_quantile(x.tolist(), 0.25), r7_quantile(x.tolist(), 0.75)
    interior = (x >= q1) & (x <= q3)
    assert not mask[interior].any()


def _static(i, vals):
    return StaticRecord(WellId(f"P{i:02d}"), *vals)


def knn_oracle(rows, target, feature, k):
    """Brute-force: scale over present values, rank all donors, average k."""
    X = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
    lo, hi = np.nanmin(X, axis=0), np.nanmax(X, axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (X - lo) / span
    ranked = []
    for d in range(len(rows)):
        if d == target or np.isnan(X[d, feature]):
            continue
        shared = ~np.isnan(Z[target]) & ~np.isnan(Z[d])
        ranked.append((float(np.sqrt(np.sum((Z[target, shared] - Z[d, shared]) ** 2))), d))
    ranked.sort()
    return float(np.mean([X[d, feature] for _, d in ranked[:k]]))


def test_knn_one_missing_among_six_donors():
    rng = np.random.default_rng(4)
    rows = [list(rng.uniform([1500, 15, 60, 5e4, 3], [2500, 25, 100, 3e5, 15])) for _ in range(7)]
    rows[6][1] = None
    table = [_static(i, r) for i, r in enumerate(rows)]
    out = impute_static_knn(table, 5)
    expected = knn_oracle(rows, 6, 1, 5)
    assert out[6].original_formation_pressure == pytest.approx(expected, rel=1e-12)
    assert out[:6] == table[:6]


def test_knn_identity_and_symmetry():
    table = [_static(i, [1.0 + i, 2.0, 3.0, 4.0, 5.0]) for i in range(6)]
    assert impute_static_knn(table, 5) == table
    same = [_static(i, [1.0, 2.0, 3.0, 4.0, 5.0]) for i in range(6)]
    same[3] = _static(3, [1.0, None, 3.0, 4.0, 5.0])
    assert impute_static_knn(same, 5)[3].original_formation_pressure == 2.0


def test_knn_insufficient_donors():
    table = [_static(0, [1, None, 3, 4, 5]), _static(1, [1, 2, 3, 4, 5])]
    with pytest.raises(InsufficientDonors):
        impute_static_knn(table, 5)


def test_interp_examples():
    nan = np.nan
    assert impute_dynamic_interp([1, nan, 3]).tolist() == [1, 2, 3]
    assert impute_dynamic_interp([nan, 4, 5]).tolist() == [4, 4, 5]
    assert impute_dynamic_interp([0, nan, nan, 9]).tolist() == [0, 3, 6, 9]
    assert impute_dynamic_interp([7, nan]).tolist() == [7, 7]
    with pytest.raises(AllMissing):
        impute_dynamic_interp([nan, nan])


def test_minmax_examples():
    sc = fit_minmax(np.array([[10.0], [30.0]]), ["f"])
    assert apply_minmax(sc, [[20.0]]).tolist() == [[0.5]]
    assert apply_minmax(sc, [[40.0]])[0, 0] == 1.5
    const = fit_minmax(np.array([[3.0, 1.0], [3.0, 2.0]]), ["a", "b"])
    assert apply_minmax(const, [[3.0, 1.5], [7.0, 2.0]])[:, 0].tolist() == [0.0, 0.0]


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.tuples(st.integers(2, 20), st.integers(1, 5)), elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_minmax_round_trip(a):
    sc = fit_minmax(a, [f"f{i}" for i in range(a.shape[1])])
    back = sc.inverse(sc.transform(a))
    varying = sc.maxs > sc.mins
    assert np.allclose(back[:, varying], a[:, varying], rtol=0, atol=1e-12 * max(1.0, np.abs(a).max()))
    scaled = sc.transform(a)[:, varying]
    assert np.all((scaled >= 0.0) & (scaled <= 1.0))


def test_window_examples():
    x = np.arange(1.0, 61.0)
    assert window_series(x, 60).tolist() == x.tolist()
    w = window_series(np.arange(1.0, 51.0), 60)
    assert w[:10].tolist() == [0.0] * 10 and w[10:].tolist() == list(range(1, 51))
    assert window_series(np.arange(1.0, 71.0), 60).tolist() == list(range(11, 71))
    m = window_series(np.ones((5, 3)), 8)
    assert m.shape == (8, 3) and m[:3].sum() == 0


def test_acf_examples():
    x = np.random.default_rng(0).normal(size=500)
    res = acf(x, 20)
    assert res.coefficients[0] == pytest.approx(1.0, abs=1e-15)
    assert res.confidence_bound == pytest.approx(1.96 / math.sqrt(500))
    assert np.mean(np.abs(res.coefficients[1:]) < res.confidence_bound) >= 0.9
    alt = np.where(np.arange(100) % 2 == 0, 1.0, -1.0)
    # closed form for the biased estimator: r1 = -(n - 1) / n
    assert acf(alt, 3).coefficients[1] == pytest.approx(-0.99, abs=1e-12)
    with pytest.raises(ConstantSeries):
        acf(np.ones(10), 3)
    with pytest.raises(TooShort):
        acf(np.arange(5.0), 5)


def test_scaler_file_round_trip(tmp_path, small_field):
    f = small_field
    raw = build_samples(clean_static(f.statics), clean_dynamic(f.dynamics), 60)
    sc = fit_sample_scalers(raw)
    write_scalers(tmp_path / "scaler.txt", sc)
    back = read_scalers(tmp_path / "scaler.txt")
    for a, b in zip(sc.all().values(), back.all().values()):
        assert a.names == b.names
        assert np.array_equal(a.mins, b.mins) and np.array_equal(a.maxs, b.maxs)


def test_padding_stays_zero_and_pipeline_idempotent(small_field):
    f = small_field
    statics = clean_static(f.statics)
    dynamics = clean_dynamic([r for r in f.dynamics if r.month > 40])
    raw = build_samples(statics, dynamics, 60)
    s = raw.samples[0]
    assert (s.months[:16] == 0).all() and (s.months[16:] > 0).all()
    norm = normalize_samples(raw, fit_sample_scalers(raw))
    assert np.all(norm.samples[0].x_dynamic[:16] == 0.0) and np.all(norm.samples[0].y[:16] == 0.0)
    assert all(np.isfinite(x.x_dynamic).all() for x in norm.samples)
    again = build_samples(statics, dynamics, 60)
    assert all(np.array_equal(a.x_dynamic, b.x_dynamic) for a, b in zip(raw.samples, again.samples))


def test_cleaning_is_identity_on_clean_data():
    from prodstack.synthgen import SynthConfig, generate_field

    f = generate_field(SynthConfig(seed=3).noiseless())
    dyn = sorted(f.dynamics, key=lambda r: (r.well, r.month))
    assert clean_static(f.statics) == f.statics
    assert clean_dynamic(dyn) == dyn
    assert clean_dynamic(clean_dynamic(dyn)) == dyn
