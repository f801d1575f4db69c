"""Symbolic transfer entropy on ordinal patterns.

Symbols are the stable ascending argsort of each embedded window (ties keep
index order), so every window maps to exactly one of m! permutations.
Probabilities are plug-in relative frequencies; entropies are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import kernels


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class SteParams:
    m: int = 3
    l: int = 1
    delta: int = 1

    def __post_init__(self):
        if self.m < 2 or self.l < 1 or self.delta < 1:
            raise ValueError("need m >= 2, l >= 1, delta >= 1")


@dataclass
class SymbolSequence:
    codes: np.ndarray
    m: int
    l: int

    def __len__(self):
        return int(self.codes.shape[0])

    @property
    def n_symbols(self) -> int:
        return math.factorial(self.m)

    @property
    def symbols(self) -> list[tuple[int, ...]]:
        """Permutations as 1-based index tuples (k_1, ..., k_m)."""
        table = _perm_table(self.m)
        return [table[c] for c in self.codes.tolist()]


_PERMS: dict[int, list[tuple[int, ...]]] = {}


def _perm_table(m: int) -> list[tuple[int, ...]]:
    # itertools.permutations yields lexicographic order == Lehmer code order
    if m not in _PERMS:
        _PERMS[m] = [tuple(k + 1 for k in p) for p in permutations(range(m))]
    return _PERMS[m]


def symbolize(series, m: int = 3, l: int = 1) -> SymbolSequence:
    x = np.ascontiguousarray(series, dtype=float)
    if m < 2 or l < 1:
        raise ValueError("need m >= 2 and l >= 1")
    if x.shape[0] < (m - 1) * l + 1:
        raise TooShort(f"series of length {x.shape[0]} shorter than one window ({(m - 1) * l + 1})")
    return SymbolSequence(kernels.ordinal_codes(x, m, l), m, l)


def ste_value(source_sym: SymbolSequence, target_sym: SymbolSequence, delta: int = 1) -> float:
    """STE from source to target: information the source's present symbol
    adds about the target symbol ``delta`` steps ahead, given the target's
    present symbol."""
    if len(source_sym) != len(target_sym):
        raise ValueError(f"symbol sequences differ in length: {len(source_sym)} vs {len(target_sym)}")
    if source_sym.m != target_sym.m:
        raise ValueError("symbol sequences use different embedding dimensions")
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if len(target_sym) <= delta:
        raise TooShort(f"need more than delta={delta} symbols, got {len(target_sym)}")
    return float(kernels.ste_from_codes(target_sym.codes, source_sym.codes, delta, target_sym.n_symbols))


def _symbol_pair(x, y, params: SteParams):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"series lengths differ: {x.shape} vs {y.shape}")
    return symbolize(x, params.m, params.l), symbolize(y, params.m, params.l)


def ste_pair(x, y, params: SteParams = SteParams()) -> tuple[float, float]:
    """(STE x->y, STE y->x)."""
    sx, sy = _symbol_pair(x, y, params)
    return ste_value(sx, sy, params.delta), ste_value(sy, sx, params.delta)


def directivity(x, y, params: SteParams = SteParams()) -> float:
    """STE x->y minus STE y->x; positive when x drives y."""
    fwd, back = ste_pair(x, y, params)
    return fwd - back


def small_sample(n: int, params: SteParams) -> bool:
    """True when fewer than 30 triples per symbol are available."""
    usable = n - (params.m - 1) * params.l - params.delta
    return usable < 30 * math.factorial(params.m)


def _fd_bins(x: np.ndarray) -> int:
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    span = x.max() - x.min()
    if iqr <= 0 or span <= 0:
        return 1
    width = 2.0 * iqr / x.size ** (1.0 / 3.0)
    return max(1, int(math.ceil(span / width)))


def lagged_mutual_information(series, max_delta: int) -> np.ndarray:
    """Histogram MI (bits) between x_t and x_{t+d} for d = 0..max_delta."""
    x = np.asarray(series, dtype=float)
    bins = _fd_bins(x)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    out = np.empty(max_delta + 1)
    for d in range(max_delta + 1):
        a = idx[: x.size - d]
        b = idx[d:]
        joint = np.bincount(a * bins + b, minlength=bins * bins).reshape(bins, bins) / a.size
        pa = joint.sum(axis=1)
        pb = joint.sum(axis=0)
        nz = joint > 0
        out[d] = float(np.sum(joint[nz] * np.log2(joint[nz] / np.outer(pa, pb)[nz])))
    return out


def mi_delay(series, max_delta: int, flat_tol: float = 0.01) -> int:
    """First local minimum of the lagged self-MI curve over d = 1..max_delta.

    The curve counts as no longer decreasing once a step drops it by less
    than ``flat_tol`` times the lag-0 MI, which absorbs estimator jitter on
    flat curves. Without such a point the global argmin is returned.
    """
    x = np.asarray(series, dtype=float)
    if max_delta < 1:
        raise ValueError("max_delta must be >= 1")
    if x.size < 4 * (max_delta + 1):
        raise TooShort(f"series of length {x.size} too short for max_delta={max_delta}")
    if max_delta == 1:
        return 1
    mi = lagged_mutual_information(x, max_delta)
    tol = flat_tol * mi[0]
    for d in range(1, max_delta):
        if mi[d + 1] > mi[d] - tol:
            return d
    return int(np.argmin(mi[1:])) + 1


def surrogate_threshold(x, y, params: SteParams = SteParams(), n_surrogates: int = 100, seed: int = 0, q: float = 95.0) -> float:
    """95th percentile of STE x->y with the source symbols circularly shifted."""
    sx, sy = _symbol_pair(x, y, params)
    N = len(sx)
    rng = np.random.default_rng(seed)
    margin = params.m * params.l + params.delta
    lo, hi = margin, N - margin
    if hi <= lo:
        lo, hi = 1, N
    values = np.empty(n_surrogates)
    for k in range(n_surrogates):
        shift = int(rng.integers(lo, hi))
        shifted = SymbolSequence(np.roll(sx.codes, shift), sx.m, sx.l)
        values[k] = ste_value(shifted, sy, params.delta)
    return float(max(np.percentile(values, q), 0.0))


@dataclass(frozen=True)
class SteRow:
    delta: int
    ste_xy: float
    ste_yx: float
    small_sample: bool = False


def ste_curve(x, y, params: SteParams = SteParams(), delta_range=range(1, 13)) -> list[SteRow]:
    sx, sy = _symbol_pair(x, y, params)
    rows = []
    for d in delta_range:
        p = SteParams(params.m, params.l, int(d))
        rows.append(SteRow(int(d), ste_value(sx, sy, d), ste_value(sy, sx, d), small_sample(len(x), p)))
    return rows


def aggregate_driver(feature_series) -> np.ndarray:
    """Elementwise mean of z-scored series; a constant series contributes 0."""
    series = [np.asarray(s, dtype=float) for s in feature_series]
    if not series:
        raise ValueError("need at least one series")
    if len({s.shape for s in series}) != 1:
        raise ValueError("series lengths differ")
    z = []
    for s in series:
        sd = s.std()
        z.append((s - s.mean()) / (sd if sd > 0 else 1.0))
    return np.mean(z, axis=0)
