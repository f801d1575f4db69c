import math
from collections import Counter
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prodstack.ste import (
    SteParams,
    TooShort,
    aggregate_driver,
    directivity,
    mi_delay,
    small_sample,
    ste_curve,
    ste_pair,
    ste_value,
    surrogate_threshold,
    symbolize,
)


def pattern(window):
    """Ascending order of 1-based indices, ties to the earlier index."""
    return tuple(i + 1 for i in sorted(range(len(window)), key=lambda i: (window[i], i)))


def brute_ste(x, y, m, delta):
    """Triple-frequency STE x -> y straight from the definition, in bits."""
    sx = [pattern(x[i : i + m]) for i in range(len(x) - m + 1)]
    sy = [pattern(y[i : i + m]) for i in range(len(y) - m + 1)]
    N = len(sy) - delta
    abc = Counter((sy[i + delta], sy[i], sx[i]) for i in range(N))
    ab = Counter((sy[i + delta], sy[i]) for i in range(N))
    bc = Counter((sy[i], sx[i]) for i in range(N))
    b = Counter(sy[i] for i in range(N))
    total = 0.0
    for (ka, kb, kc), n in abc.items():
        p_a_given_bc = n / bc[(kb, kc)]
        p_a_given_b = ab[(ka, kb)] / b[kb]
        total += n / N * math.log2(p_a_given_bc / p_a_given_b)
    return total


def copy_process_exact_ste():
    """Exact STE for y_{t+1} = x_t, iid continuous x, m = 2, delta = 1.

    The target pattern at i covers (x_{i-1}, x_i), the source pattern at i
    covers (x_i, x_{i+1}) and equals the target pattern at i + 1. All 3!
    orderings of (x_{i-1}, x_i, x_{i+1}) are equally likely.
    """
    joint = Counter()
    for order in permutations(range(3)):
        prev, cur, nxt = order
        b = pattern((prev, cur))
        c = pattern((cur, nxt))
        joint[(c, b, c)] += 1
    total = sum(joint.values())
    p = {k: v / total for k, v in joint.items()}
    pab, pbc, pb = Counter(), Counter(), Counter()
    for (a, b, c), v in p.items():
        pab[(a, b)] += v
        pbc[(b, c)] += v
        pb[b] += v
    return sum(v * math.log2((v / pbc[(b, c)]) / (pab[(a, b)] / pb[b])) for (a, b, c), v in p.items())


def test_exact_value_is_binary_entropy_of_one_third():
    h = -(1 / 3) * math.log2(1 / 3) - (2 / 3) * math.log2(2 / 3)
    assert copy_process_exact_ste() == pytest.approx(h, abs=1e-15)


def test_symbolize_examples():
    assert symbolize([4, 7, 9], 3).symbols == [(1, 2, 3)]
    assert symbolize([9, 7, 4], 3).symbols == [(3, 2, 1)]
    assert symbolize([5, 5], 2).symbols == [(1, 2)]
    s = symbolize(np.arange(20.0), 3, 2)
    assert len(s) == 20 - 2 * 2
    with pytest.raises(TooShort):
        symbolize([1.0, 2.0], 3)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(6, 60), elements=st.integers(-50, 50).map(float)), st.integers(2, 4), st.integers(1, 2))
def test_symbols_match_oracle_and_are_ordinal(x, m, l):
    if x.size < (m - 1) * l + 1:
        return
    seq = symbolize(x, m, l)
    expected = [pattern(x[i : i + (m - 1) * l + 1 : l]) for i in range(x.size - (m - 1) * l)]
    assert seq.symbols == expected
    assert all(sorted(s) == list(range(1, m + 1)) for s in seq.symbols)
    assert np.array_equal(symbolize(x**3 + 2.0 * x + 7.0, m, l).codes, seq.codes)


def test_ste_matches_brute_force():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = np.empty(200)
    y[0] = rng.normal()
    y[1:] = x[:-1]
    for m, delta in ((2, 1), (3, 1), (3, 2)):
        sx, sy = symbolize(x, m), symbolize(y, m)
        assert ste_value(sx, sy, delta) == pytest.approx(brute_ste(x, y, m, delta), abs=1e-12)
        assert ste_value(sy, sx, delta) == pytest.approx(brute_ste(y, x, m, delta), abs=1e-12)
    fwd, back = ste_pair(x, y, SteParams(m=2))
    assert fwd > 0.5 and back < 0.05


def test_redundant_source_is_exactly_zero():
    s = symbolize(np.random.default_rng(1).normal(size=500), 3)
    assert ste_value(s, s, 1) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4), st.integers(1, 3))
def test_ste_non_negative(seed, m, delta):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=120), rng.normal(size=120)
    assert ste_value(symbolize(x, m), symbolize(y, m), delta) >= -1e-12


def test_independent_pair_below_surrogates():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=5000), rng.normal(size=5000)
    p = SteParams(m=3)
    assert ste_pair(x, y, p)[0] < surrogate_threshold(x, y, p, n_surrogates=100, seed=0)
    assert abs(directivity(x, y, p)) < surrogate_threshold(x, y, p, seed=0)


def test_directivity_sign_and_antisymmetry():
    rng = np.random.default_rng(3)
    x = rng.normal(size=3000)
    y = np.empty_like(x)
    y[0] = 0.0
    y[1:] = 0.8 * x[:-1] + 0.3 * rng.normal(size=2999)
    p = SteParams(m=3)
    d = directivity(x, y, p)
    assert d > surrogate_threshold(x, y, p, seed=1)
    assert directivity(y, x, p) == -d
    assert surrogate_threshold(x, y, p, seed=5) == surrogate_threshold(x, y, p, seed=5)


def test_mi_delay_examples():
    t = np.arange(2400)
    sine = np.sin(2 * np.pi * t / 24)
    # the MI curve is flat around the quarter period; the first flat point counts
    assert abs(mi_delay(sine, 12) - 6) <= 2
    assert mi_delay(np.random.default_rng(4).normal(size=2000), 10) == 1
    assert mi_delay(sine, 1) == 1


def test_ste_curve_peaks_at_planted_delay():
    rng = np.random.default_rng(5)
    x = rng.normal(size=4000)
    y = np.zeros_like(x)
    y[4:] = x[:-4] + 0.2 * rng.normal(size=3996)
    rows = ste_curve(x, y, SteParams(m=3), range(1, 9))
    assert len(rows) == 8 and [r.delta for r in rows] == list(range(1, 9))
    assert max(rows, key=lambda r: r.ste_xy).delta == 4
    assert len(ste_curve(x, y, SteParams(), [1])) == 1


def test_small_sample_flag():
    assert small_sample(60, SteParams(m=3))
    assert not small_sample(2520, SteParams(m=3))


def test_aggregate_examples():
    x = np.array([1.0, 2.0, 4.0, 9.0])
    z = (x - x.mean()) / x.std()
    assert np.allclose(aggregate_driver([x]), z, atol=1e-15)
    assert np.allclose(aggregate_driver([x, x]), z, atol=1e-15)
    assert np.allclose(aggregate_driver([x, -x]), 0.0, atol=1e-15)
    assert np.allclose(aggregate_driver([x, np.full(4, 3.0)]), z / 2, atol=1e-15)
    with pytest.raises(ValueError):
        aggregate_driver([])
