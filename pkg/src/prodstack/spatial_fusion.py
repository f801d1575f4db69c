"""Injector selection by lagged cross-correlation and injection fusion."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .core_data import (
    INJECTION_FEATURE,
    FieldGeometry,
    InjectionRecord,
    SampleSet,
    WellId,
    WellKind,
)
from .preprocess import impute_dynamic_interp


class NoInjectorsInField(ValueError):
    pass


class WindowTooShort(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LagCorrResult:
    theta: int
    r: float


@dataclass(frozen=True)
class InjectorSelection:
    """Chosen injector for a producer, or a fallback over ``averaged``.

    For a fallback ``theta`` is 0 and ``r`` is the best correlation that
    failed the gate.
    """

    producer: WellId
    injector: WellId | None
    theta: int
    r: float
    averaged: tuple[WellId, ...] = ()

    @property
    def is_fallback(self) -> bool:
        return self.injector is None


def candidate_injectors(geometry: FieldGeometry, producer: WellId, radius: float) -> list[WellId]:
    injectors = geometry.wells(WellKind.INJECTOR)
    if not injectors:
        raise NoInjectorsInField("field has no injectors")
    ranked = sorted((geometry.distance(producer, w), w.id, w) for w in injectors)
    within = [w for d, _, w in ranked if d <= radius]
    return within if within else [ranked[0][2]]


def _check_pair(y, b):
    y = np.ascontiguousarray(y, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if y.shape != b.shape or y.ndim != 1:
        raise LengthMismatch(f"series shapes differ: {y.shape} vs {b.shape}")
    return y, b


def lagged_xcorr(y, b, theta: int) -> float:
    """Pearson r between b_t and y_{t+theta} over the overlapping window."""
    y, b = _check_pair(y, b)
    n = y.shape[0]
    if theta < 0 or theta >= n - 2:
        raise WindowTooShort(f"theta={theta} needs series longer than {theta + 2}, got {n}")
    return float(kernels.xcorr_lags(y, b, theta)[theta])


def xcorr_curve(y, b, theta_max: int = 12) -> np.ndarray:
    """r(theta) for theta = 0..theta_max."""
    y, b = _check_pair(y, b)
    if theta_max < 0 or theta_max >= y.shape[0] - 2:
        raise WindowTooShort(f"theta_max={theta_max} too large for series of length {y.shape[0]}")
    return kernels.xcorr_lags(y, b, theta_max)


def best_lag(y, b, theta_max: int = 12) -> LagCorrResult:
    r = xcorr_curve(y, b, theta_max)
    # argmax returns the first maximum, i.e. the smaller lag on ties
    theta = int(np.argmax(np.abs(r)))
    return LagCorrResult(theta, float(r[theta]))


def select_injector(
    producer: WellId,
    candidates: list[WellId],
    series_store: Mapping[WellId, np.ndarray],
    r_min: float = 0.3,
    theta_max: int = 12,
    inclusive: bool = True,
) -> InjectorSelection:
    """Pick the candidate with the largest |r*|; fall back to their mean if gated out.

    ``series_store`` must hold the producer's production series and every
    candidate's injection series on the same month index.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    y = series_store[producer]
    best: tuple[WellId, LagCorrResult] | None = None
    for cand in candidates:
        res = best_lag(y, series_store[cand], theta_max)
        if best is None or abs(res.r) > abs(best[1].r):
            best = (cand, res)
    cand, res = best
    lag_ok = res.theta <= theta_max if inclusive else res.theta < theta_max
    if abs(res.r) >= r_min and lag_ok:
        return InjectorSelection(producer, cand, res.theta, res.r)
    return InjectorSelection(producer, None, 0, res.r, tuple(candidates))


def align_injection(b, theta: int) -> np.ndarray:
    """w_t = b_{t - theta}, zeros for the first theta months."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    b = np.asarray(b, dtype=float)
    w = np.zeros_like(b)
    if theta < b.shape[0]:
        w[theta:] = b[: b.shape[0] - theta]
    return w


# ---------------------------------------------------------------------------
# Field-level helpers
# ---------------------------------------------------------------------------


InjectionTable = dict[WellId, dict[int, float]]


def injection_table(records: list[InjectionRecord]) -> InjectionTable:
    """Per-injector month -> volume, interior gaps interpolated, edges held flat."""
    by_well: dict[WellId, list[InjectionRecord]] = {}
    for r in records:
        by_well.setdefault(r.well, []).append(r)
    table: InjectionTable = {}
    for well, recs in by_well.items():
        recs.sort(key=lambda r: r.month)
        vals = np.array([np.nan if r.monthly_water_injection is None else r.monthly_water_injection for r in recs])
        vals = np.maximum(impute_dynamic_interp(vals), 0.0)
        table[well] = {r.month: float(v) for r, v in zip(recs, vals)}
    return table


def injection_on(table: InjectionTable, injector: WellId, months) -> np.ndarray:
    """Injection of one injector on the given months; absent months read as 0."""
    series = table.get(injector, {})
    return np.array([series.get(int(m), 0.0) for m in months], dtype=float)


def select_all(
    geometry: FieldGeometry,
    production: Mapping[WellId, tuple[np.ndarray, np.ndarray]],
    injections: InjectionTable,
    radius: float,
    r_min: float = 0.3,
    theta_max: int = 12,
    inclusive: bool = True,
) -> list[InjectorSelection]:
    """Run candidate screening and selection for every producer.

    ``production`` maps producer -> (months, production series).
    """
    out = []
    for producer in sorted(production):
        months, y = production[producer]
        cands = candidate_injectors(geometry, producer, radius)
        store = {producer: np.asarray(y, dtype=float)}
        for c in cands:
            store[c] = injection_on(injections, c, months)
        out.append(select_injector(producer, cands, store, r_min, theta_max, inclusive))
    return out


def fused_column(selection: InjectorSelection, injections: InjectionTable, months) -> np.ndarray:
    """Aligned injection for the given (real) months of one producer."""
    months = np.asarray(months, dtype=int)
    if selection.is_fallback:
        cols = [injection_on(injections, w, months) for w in selection.averaged]
        return np.mean(cols, axis=0)
    return injection_on(injections, selection.injector, months - selection.theta)


def build_fused_samples(
    samples: SampleSet,
    selections: list[InjectorSelection],
    injections: InjectionTable,
) -> SampleSet:
    """Append the aligned injection as the last dynamic column (l' = l + 1).

    Samples must carry their month index. Zero-padded head months stay 0;
    months whose lagged source month predates the injection record read 0.
    A normalized set needs an ``injection`` scaler in ``samples.scalers``.
    """
    if not samples.samples:
        return dataclasses.replace(samples, samples=[], dynamic_names=samples.dynamic_names + (INJECTION_FEATURE,))
    by_producer = {s.producer: s for s in selections}
    missing = [s.well for s in samples.samples if s.well not in by_producer]
    if missing:
        raise ValueError(f"no selection for producer(s): {', '.join(map(str, missing))}")
    if any(s.fused for s in samples.samples):
        raise ValueError("samples are already fused")
    scaler = samples.scalers.get("injection")
    if samples.normalized and scaler is None:
        raise ValueError("normalized samples need an 'injection' scaler")
    out = []
    for s in samples.samples:
        if s.months is None:
            raise ValueError(f"sample {s.well} has no month index")
        T = s.y.shape[0]
        if s.x_dynamic.shape[0] != T or s.months.shape[0] != T:
            raise LengthMismatch(f"sample {s.well}: dynamic/target/month lengths differ")
        real = s.months > 0
        col = np.zeros(T)
        col[real] = fused_column(by_producer[s.well], injections, s.months[real])
        if scaler is not None and samples.normalized:
            col[real] = scaler.transform(col[real, None])[:, 0]
        xd = np.concatenate([s.x_dynamic, col[:, None]], axis=1)
        out.append(dataclasses.replace(s, x_dynamic=xd, fused=True))
    return SampleSet(
        out,
        dict(samples.scalers),
        samples.static_names,
        samples.dynamic_names + (INJECTION_FEATURE,),
        samples.normalized,
    )


__all__ = [
    "LagCorrResult",
    "InjectorSelection",
    "candidate_injectors",
    "lagged_xcorr",
    "xcorr_curve",
    "best_lag",
    "select_injector",
    "align_injection",
    "injection_table",
    "injection_on",
    "select_all",
    "fused_column",
    "build_fused_samples",
]
