"""Outlier masking, imputation, min-max scaling, windowing and ACF."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_data import (
    DYNAMIC_FEATURES,
    STATIC_FEATURES,
    TARGET,
    DynamicRecord,
    SampleSet,
    StaticRecord,
    WellId,
    WellSample,
)


class PreprocessError(ValueError):
    pass


class TooShort(PreprocessError):
    pass


class InsufficientDonors(PreprocessError):
    pass


class AllMissing(PreprocessError):
    pass


class ConstantSeries(PreprocessError):
    pass


def detect_outliers_iqr(series, fence: float = 1.5) -> np.ndarray:
    """Boxplot rule with R-7 (linear) quantiles; NaNs are never flagged.

    A zero IQR flags nothing.
    """
    x = np.asarray(series, dtype=float)
    present = ~np.isnan(x)
    if present.sum() < 4:
        raise TooShort(f"need at least 4 present values, got {int(present.sum())}")
    q1, q3 = np.quantile(x[present], [0.25, 0.75], method="linear")
    iqr = q3 - q1
    mask = np.zeros(x.shape, dtype=bool)
    if iqr <= 0:
        return mask
    lo, hi = q1 - fence * iqr, q3 + fence * iqr
    mask[present] = (x[present] < lo) | (x[present] > hi)
    return mask


def impute_static_knn(table: list[StaticRecord], k_neighbors: int = 5) -> list[StaticRecord]:
    """Fill missing static cells with the mean over the k nearest donor wells.

    Distance is Euclidean over features present in both wells, after
    min-max scaling each feature over the present values. Ties go to the
    smaller well id.
    """
    if not table:
        return []
    X = np.array([[np.nan if v is None else v for v in r.values()] for r in table], dtype=float)
    if not np.isnan(X).any():
        return list(table)
    lo = np.nanmin(X, axis=0)
    span = np.nanmax(X, axis=0) - lo
    span[~(span > 0)] = 1.0
    Z = (X - lo) / span
    ids = [r.well.id for r in table]
    out = []
    for i, rec in enumerate(table):
        miss = np.isnan(X[i])
        if not miss.any():
            out.append(rec)
            continue
        filled = X[i].copy()
        for j in np.flatnonzero(miss):
            donors = [d for d in range(len(table)) if d != i and not np.isnan(X[d, j])]
            if len(donors) < k_neighbors:
                raise InsufficientDonors(
                    f"feature {STATIC_FEATURES[j]!r}: {len(donors)} donors for well {rec.well}, need {k_neighbors}"
                )
            dists = []
            for d in donors:
                shared = ~np.isnan(Z[i]) & ~np.isnan(Z[d])
                diff = Z[i, shared] - Z[d, shared]
                dists.append((math.sqrt(float(diff @ diff)), ids[d], d))
            dists.sort()
            nearest = [d for _, _, d in dists[:k_neighbors]]
            filled[j] = float(np.mean(X[nearest, j]))
        out.append(dataclasses.replace(rec, **dict(zip(STATIC_FEATURES, map(float, filled)))))
    return out


def impute_dynamic_interp(series) -> np.ndarray:
    """Linear interpolation inside, flat extension at the edges."""
    x = np.asarray(series, dtype=float)
    present = ~np.isnan(x)
    if not present.any():
        raise AllMissing("series has no present values")
    if present.all():
        return x.copy()
    idx = np.arange(x.size)
    return np.interp(idx, idx[present], x[present])


@dataclass
class MinMaxScaler:
    names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=float)
        self.maxs = np.asarray(self.maxs, dtype=float)
        if np.any(self.maxs < self.mins):
            raise ValueError("scaler max below min")

    @property
    def span(self) -> np.ndarray:
        s = self.maxs - self.mins
        return np.where(s > 0, s, 1.0)

    def transform(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        out = (data - self.mins) / self.span
        const = self.maxs == self.mins
        if const.any():
            out[..., const] = 0.0
        return out

    def inverse(self, data) -> np.ndarray:
        return np.asarray(data, dtype=float) * self.span + self.mins

    def to_lines(self) -> list[str]:
        return [f"{n} = {lo!r}, {hi!r}" for n, lo, hi in zip(self.names, self.mins.tolist(), self.maxs.tolist())]


def fit_minmax(data, names) -> MinMaxScaler:
    """Per-feature min/max over the last axis of ``data``."""
    a = np.asarray(data, dtype=float).reshape(-1, len(names))
    return MinMaxScaler(tuple(names), a.min(axis=0), a.max(axis=0))


def apply_minmax(scaler: MinMaxScaler, data) -> np.ndarray:
    return scaler.transform(data)


@dataclass
class SampleScalers:
    static: MinMaxScaler
    dynamic: MinMaxScaler
    target: MinMaxScaler

    def all(self) -> dict[str, MinMaxScaler]:
        return {"static": self.static, "dynamic": self.dynamic, "target": self.target}


def fit_sample_scalers(train: SampleSet) -> SampleScalers:
    """Fit static, dynamic and target scalers on raw training samples.

    Zero-padded head months (``months == 0``) are excluded from the fit.
    """
    if train.normalized:
        raise PreprocessError("fit scalers on raw (un-normalized) samples")
    if not train.samples:
        raise PreprocessError("cannot fit scalers on an empty set")
    Xs, Xd, Y = train.arrays()
    real = np.stack([_real_mask(s) for s in train.samples])
    return SampleScalers(
        fit_minmax(Xs, train.static_names),
        fit_minmax(Xd[real], train.dynamic_names),
        fit_minmax(Y[real].reshape(-1, 1), (TARGET,)),
    )


def _real_mask(sample: WellSample) -> np.ndarray:
    if sample.months is None:
        return np.ones(sample.y.shape[0], dtype=bool)
    return sample.months > 0


def normalize_samples(data: SampleSet, scalers: SampleScalers) -> SampleSet:
    """Scale every sample; zero-padded head months stay exactly zero."""
    if data.normalized:
        raise PreprocessError("set is already normalized")
    out = []
    for s in data.samples:
        real = _real_mask(s)
        xd = np.zeros_like(s.x_dynamic)
        xd[real] = scalers.dynamic.transform(s.x_dynamic[real])
        y = np.zeros_like(s.y)
        y[real] = scalers.target.transform(s.y[real, None])[:, 0]
        out.append(
            dataclasses.replace(s, x_static=scalers.static.transform(s.x_static), x_dynamic=xd, y=y)
        )
    return SampleSet(out, scalers.all(), data.static_names, data.dynamic_names, normalized=True)


def write_scalers(path, scalers: SampleScalers) -> None:
    lines = ["# prodstack scaler: <section>.<feature> = <min>, <max>"]
    for section, sc in scalers.all().items():
        lines.extend(f"{section}.{ln}" for ln in sc.to_lines())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scalers(path) -> SampleScalers:
    parts: dict[str, tuple[list, list, list]] = {"static": ([], [], []), "dynamic": ([], [], []), "target": ([], [], [])}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            key, value = (p.strip() for p in line.split("=", 1))
            section, name = key.split(".", 1)
            lo, hi = (float(v) for v in value.split(","))
            names, mins, maxs = parts[section]
        except (ValueError, KeyError):
            raise PreprocessError(f"{path}:{n}: malformed scaler line {raw!r}") from None
        names.append(name)
        mins.append(lo)
        maxs.append(hi)
    return SampleScalers(*(MinMaxScaler(tuple(n), lo, hi) for n, lo, hi in parts.values()))


def window_series(series, T: int = 60) -> np.ndarray:
    """Keep the most recent T entries, zero-padding the front when short."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] >= T:
        return x[x.shape[0] - T :].copy()
    pad = np.zeros((T - x.shape[0],) + x.shape[1:])
    return np.concatenate([pad, x])


@dataclass
class AcfResult:
    coefficients: np.ndarray
    confidence_bound: float

    def significant_lags(self) -> np.ndarray:
        lags = np.arange(self.coefficients.size)
        return lags[1:][np.abs(self.coefficients[1:]) > self.confidence_bound]


def acf(series, max_lag: int) -> AcfResult:
    x = np.asarray(series, dtype=float)
    n = x.size
    if n <= max_lag:
        raise TooShort(f"series length {n} must exceed max_lag {max_lag}")
    xc = x - x.mean()
    c0 = float(xc @ xc)
    if c0 == 0.0:
        raise ConstantSeries("autocorrelation undefined for a constant series")
    coef = np.array([float(xc[: n - k] @ xc[k:]) / c0 for k in range(max_lag + 1)])
    return AcfResult(coef, 1.96 / math.sqrt(n))


# ---------------------------------------------------------------------------
# Record-level cleaning
# ---------------------------------------------------------------------------


def clean_static(records: list[StaticRecord], fence: float = 1.5, k_neighbors: int = 5) -> list[StaticRecord]:
    """Mask cross-well outliers per feature, then KNN-impute."""
    if not records:
        return []
    X = np.array([[np.nan if v is None else v for v in r.values()] for r in records], dtype=float)
    for j in range(X.shape[1]):
        if (~np.isnan(X[:, j])).sum() >= 4:
            X[detect_outliers_iqr(X[:, j], fence), j] = np.nan
    masked = [
        dataclasses.replace(r, **{n: (None if np.isnan(v) else float(v)) for n, v in zip(STATIC_FEATURES, row)})
        for r, row in zip(records, X)
    ]
    k = min(k_neighbors, len(records) - 1)
    return impute_static_knn(masked, k)


def clean_dynamic(records: list[DynamicRecord], fence: float = 1.5) -> list[DynamicRecord]:
    """Per well: mask feature outliers, interpolate gaps, clip production at 0.

    The production target is gap-filled but not outlier-masked, so genuine
    production shocks stay visible to the early-warning stage.
    """
    by_well: dict[WellId, list[DynamicRecord]] = {}
    for r in records:
        by_well.setdefault(r.well, []).append(r)
    out = []
    for well in sorted(by_well):
        recs = sorted(by_well[well], key=lambda r: r.month)
        cols = {}
        for name in DYNAMIC_FEATURES + (TARGET,):
            x = np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in recs], dtype=float)
            if name != TARGET and (~np.isnan(x)).sum() >= 4:
                x[detect_outliers_iqr(x, fence)] = np.nan
            x = impute_dynamic_interp(x)
            if name == TARGET:
                x = np.maximum(x, 0.0)
            elif name == "production_days":
                x = np.clip(x, 0.0, 31.0)
            cols[name] = x
        for i, r in enumerate(recs):
            out.append(dataclasses.replace(r, **{n: float(cols[n][i]) for n in cols}))
    return out


def build_samples(statics: list[StaticRecord], dynamics: list[DynamicRecord], T: int = 60) -> SampleSet:
    """Raw-unit, windowed samples for every producer having both record kinds."""
    static_by = {r.well: r for r in statics}
    by_well: dict[WellId, list[DynamicRecord]] = {}
    for r in dynamics:
        by_well.setdefault(r.well, []).append(r)
    samples = []
    for well in sorted(by_well):
        if well not in static_by:
            continue
        recs = sorted(by_well[well], key=lambda r: r.month)
        xs = np.array(static_by[well].values(), dtype=float)
        xd = np.array([[getattr(r, n) for n in DYNAMIC_FEATURES] for r in recs], dtype=float)
        y = np.array([getattr(r, TARGET) for r in recs], dtype=float)
        months = np.array([r.month for r in recs])
        if np.isnan(xs).any() or np.isnan(xd).any() or np.isnan(y).any():
            raise PreprocessError(f"well {well} still has missing values; clean before building samples")
        samples.append(
            WellSample(well, xs, window_series(xd, T), window_series(y, T), months=window_series(months, T).astype(int))
        )
    return SampleSet(samples)
