"""Training, prediction, evaluation, early warning and the ablation harness."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .core_data import SampleSet, WellId, WellSample
from .metrics import MetricTriple, evaluate
from .neural import (
    AdamState,
    CorruptFile,
    Dims,
    StackNetParams,
    VersionMismatch,
    adam_step,
    forward_batch,
    init_params,
    load_params,
    loss_and_grads,
    mse_loss,
    save_params,
    sgd_step,
)
from .preprocess import (
    SampleScalers,
    build_samples,
    clean_dynamic,
    clean_static,
    fit_sample_scalers,
    normalize_samples,
)
from .spatial_fusion import build_fused_samples, injection_table, select_all

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "LearningCurve",
    "WarningEvent",
    "Episode",
    "DimMismatch",
    "NonFiniteLoss",
    "TooFewWells",
    "EmptyResidualPool",
    "CorruptFile",
    "VersionMismatch",
    "split_wells",
    "prepare_samples",
    "train_model",
    "predict_well",
    "evaluate_model",
    "early_warning",
    "group_episodes",
    "save_model",
    "load_model",
]


class DimMismatch(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


class TooFewWells(ValueError):
    pass


class EmptyResidualPool(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 700
    lr: float = 2e-3
    batch_size: int = 16  # 0 = full batch
    patience: int = 150
    seed: int = 0
    c: int = 16
    hs: int = 32
    hf: int = 32
    T: int = 60
    fuse: bool = True
    branches: str = "stack"
    fusion: str = "channel"
    optimizer: str = "adam"
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    radius: float = 800.0
    r_min: float = 0.3
    theta_max: int = 12
    theta_inclusive: bool = True
    knn_neighbors: int = 5
    outlier_fence: float = 1.5

    def __post_init__(self):
        if self.T <= 0 or self.epochs <= 0:
            raise ValueError("T and epochs must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def dims(self, k: int, l: int) -> Dims:
        return Dims(k, l, self.c, self.hs, self.hf, self.T, self.branches, self.fusion)


@dataclass
class LearningCurve:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        return [(e + 1, tr, va) for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss))]


@dataclass(frozen=True)
class WarningEvent:
    well: WellId | None
    month: int
    residual: float
    threshold: float


@dataclass(frozen=True)
class Episode:
    well: WellId | None
    onset_month: int
    months: tuple[int, ...]
    residual: float
    threshold: float


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


def split_wells(data: SampleSet, test_fraction: float = 0.2, seed: int = 0, val_fraction: float = 0.2):
    """Well-level (train, validation, test) split, deterministic per seed."""
    n = len(data)
    if n < 3:
        raise TooFewWells(f"need at least 3 wells, got {n}")
    ids = sorted(data.ids())
    order = np.random.default_rng(seed).permutation(n)
    n_test = min(max(1, int(round(n * test_fraction))), n - 2)
    n_val = min(max(1, int(round((n - n_test) * val_fraction))), n - n_test - 1)
    test = {ids[i] for i in order[:n_test]}
    val = {ids[i] for i in order[n_test : n_test + n_val]}
    train = {ids[i] for i in order[n_test + n_val :]}
    return data.subset(train), data.subset(val), data.subset(test)


def prepare_samples(statics, dynamics, injections, geometry, config: TrainConfig):
    """Clean records, build raw windowed samples, optionally fuse injection.

    Returns (raw SampleSet, selections or None).
    """
    statics = clean_static(statics, config.outlier_fence, config.knn_neighbors)
    dynamics = clean_dynamic(dynamics, config.outlier_fence)
    raw = build_samples(statics, dynamics, config.T)
    if not config.fuse:
        return raw, None
    production: dict[WellId, tuple[list, list]] = {}
    for r in dynamics:
        ms, ys = production.setdefault(r.well, ([], []))
        ms.append(r.month)
        ys.append(r.monthly_oil_production)
    production = {w: (np.array(ms), np.array(ys)) for w, (ms, ys) in production.items() if w in set(raw.ids())}
    table = injection_table(injections)
    selections = select_all(
        geometry, production, table, config.radius, config.r_min, config.theta_max, config.theta_inclusive
    )
    return build_fused_samples(raw, selections, table), selections


def normalize_split(train: SampleSet, *others: SampleSet):
    """Fit scalers on ``train`` and apply them to every set."""
    scalers = fit_sample_scalers(train)
    return scalers, [normalize_samples(s, scalers) for s in (train, *others)]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _check_dims(params: StackNetParams, data: SampleSet):
    d = params.dims
    if not data.samples:
        return
    if (data.k, data.l, data.T) != (d.k, d.l, d.T):
        raise DimMismatch(f"model dims (k={d.k}, l={d.l}, T={d.T}) vs data dims (k={data.k}, l={data.l}, T={data.T})")


def _loss(params, data: SampleSet) -> float:
    xs, xd, y = data.arrays()
    y_hat, _ = forward_batch(params, xs, xd)
    return mse_loss(y_hat, y)


def train_model(config: TrainConfig, train: SampleSet, validation: SampleSet):
    """Optimise the MSE loss; return the best-validation parameters and the curve."""
    if not train.samples:
        raise ValueError("empty training set")
    if not train.normalized:
        raise ValueError("train on normalized samples")
    dims = config.dims(train.k, train.l)
    params = init_params(dims, config.seed)
    _check_dims(params, train)
    _check_dims(params, validation)
    xs, xd, y = train.arrays()
    val = validation if validation.samples else train
    rng = np.random.default_rng(config.seed + 1)
    n = xs.shape[0]
    state = AdamState.zeros_like(params)
    curve = LearningCurve()
    best, best_val, since = params, math.inf, 0

    for epoch in range(config.epochs):
        if config.batch_size and config.batch_size < n:
            order = rng.permutation(n)
            batches = [order[i : i + config.batch_size] for i in range(0, n, config.batch_size)]
        else:
            batches = [np.arange(n)]
        for idx in batches:
            loss, grads = loss_and_grads(params, xs[idx], xd[idx], y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch + 1}: training loss is {loss}")
            if config.optimizer == "adam":
                params, state = adam_step(params, grads, state, config.lr)
            else:
                params = sgd_step(params, grads, config.lr)
        tr, va = _loss(params, train), _loss(params, val)
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise NonFiniteLoss(f"epoch {epoch + 1}: train loss {tr}, validation loss {va}")
        curve.train_loss.append(tr)
        curve.val_loss.append(va)
        if va < best_val:
            best, best_val, since = params, va, 0
            curve.best_epoch = epoch
        else:
            since += 1
            if since > config.patience:
                break
    return best, curve


# ---------------------------------------------------------------------------
# Prediction / evaluation
# ---------------------------------------------------------------------------


def _real(sample: WellSample) -> np.ndarray:
    return np.ones(sample.y.shape[0], bool) if sample.months is None else sample.months > 0


def predict_well(params: StackNetParams, sample: WellSample, scalers: SampleScalers) -> np.ndarray:
    """Forward pass on a normalized sample, returned in tonnes."""
    d = params.dims
    if (sample.x_static.shape[0], sample.x_dynamic.shape[1], sample.y.shape[0]) != (d.k, d.l, d.T):
        raise DimMismatch(
            f"model dims (k={d.k}, l={d.l}, T={d.T}) vs sample dims "
            f"(k={sample.x_static.shape[0]}, l={sample.x_dynamic.shape[1]}, T={sample.y.shape[0]})"
        )
    y_hat, _ = forward_batch(params, sample.x_static[None], sample.x_dynamic[None])
    return scalers.target.inverse(y_hat[0][:, None])[:, 0]


def true_target(sample: WellSample, scalers: SampleScalers) -> np.ndarray:
    y = scalers.target.inverse(sample.y[:, None])[:, 0]
    y[~_real(sample)] = 0.0
    return y


@dataclass
class EvalTable:
    wells: list[WellId]
    metrics: list[MetricTriple]

    @property
    def mean(self) -> MetricTriple:
        if not self.metrics:
            return MetricTriple(math.nan, math.nan, math.nan)
        return MetricTriple(*(float(np.mean([getattr(m, f) for m in self.metrics])) for f in ("r2", "mae", "rmse")))

    def rows(self):
        return [(w.id, m.r2, m.mae, m.rmse) for w, m in zip(self.wells, self.metrics)]


def evaluate_model(params: StackNetParams, data: SampleSet, scalers: SampleScalers) -> EvalTable:
    """Per-well R^2 / MAE / RMSE over the real (non-padded) months, in tonnes."""
    _check_dims(params, data)
    wells, rows = [], []
    for s in data.samples:
        real = _real(s)
        y_hat = predict_well(params, s, scalers)[real]
        y = true_target(s, scalers)[real]
        wells.append(s.well)
        rows.append(evaluate(y_hat, y))
    return EvalTable(wells, rows)


def residuals(params: StackNetParams, data: SampleSet, scalers: SampleScalers) -> np.ndarray:
    """Pooled y_hat - y over the real months of every sample, in tonnes."""
    out = []
    for s in data.samples:
        real = _real(s)
        out.append(predict_well(params, s, scalers)[real] - true_target(s, scalers)[real])
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------------------
# Early warning
# ---------------------------------------------------------------------------


def early_warning(y_hat, y, validation_residuals, months=None, well=None, k_sigma=3.0, threshold=None):
    """Months where |y_hat - y| exceeds k_sigma * std(validation residuals).

    ``threshold`` overrides the residual-derived value with an absolute one.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape:
        raise ValueError(f"prediction/target lengths differ: {y_hat.shape} vs {y.shape}")
    if threshold is None:
        pool = np.asarray(validation_residuals, dtype=float)
        if pool.size == 0:
            raise EmptyResidualPool("validation residual pool is empty")
        threshold = k_sigma * float(np.std(pool))
    months = np.arange(1, y.size + 1) if months is None else np.asarray(months)
    resid = y_hat - y
    return [
        WarningEvent(well, int(m), float(r), float(threshold))
        for m, r in zip(months, resid)
        if abs(r) > threshold
    ]


def group_episodes(events: list[WarningEvent]) -> list[Episode]:
    """Merge runs of consecutive months (per well) into episodes."""
    out: list[Episode] = []
    run: list[WarningEvent] = []

    def flush():
        if run:
            out.append(Episode(run[0].well, run[0].month, tuple(e.month for e in run), run[0].residual, run[0].threshold))

    for ev in sorted(events, key=lambda e: (str(e.well), e.month)):
        if run and (ev.well != run[-1].well or ev.month != run[-1].month + 1):
            flush()
            run = []
        run.append(ev)
    flush()
    return out


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def save_model(params: StackNetParams, path) -> None:
    save_params(params, path)


def load_model(path) -> StackNetParams:
    return load_params(path)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    """Outcome of one train/evaluate run on one dataset split."""

    config: TrainConfig
    test: EvalTable
    curve: LearningCurve
    params: StackNetParams = field(repr=False, default=None)
    scalers: SampleScalers = field(repr=False, default=None)

    @property
    def r2(self) -> float:
        return self.test.mean.r2

    @property
    def rmse(self) -> float:
        return self.test.mean.rmse


def run_experiment(raw: SampleSet, config: TrainConfig, split_seed: int | None = None) -> RunResult:
    """Split, normalize, train and evaluate on the test wells."""
    seed = config.seed if split_seed is None else split_seed
    train, val, test = split_wells(raw, config.test_fraction, seed, config.val_fraction)
    scalers, (train, val, test) = normalize_split(train, val, test)
    params, curve = train_model(config, train, val)
    return RunResult(config, evaluate_model(params, test, scalers), curve, params, scalers)


def field_samples(field_, config: TrainConfig):
    """Raw samples (and selections) for a synthetic field under ``config``."""
    return prepare_samples(field_.statics, field_.dynamics, field_.injections, field_.geometry, config)


def drop_injection(data: SampleSet) -> SampleSet:
    """Remove the fused injection column."""
    if not data.samples or not data.samples[0].fused:
        return data
    samples = [dataclasses.replace(s, x_dynamic=s.x_dynamic[:, :-1], fused=False) for s in data.samples]
    return SampleSet(samples, dict(data.scalers), data.static_names, data.dynamic_names[:-1], data.normalized)


@dataclass(frozen=True)
class AblationRow:
    seed: int
    variant: str
    r2: float
    mae: float
    rmse: float


def _row(seed: int, variant: str, res: RunResult) -> AblationRow:
    m = res.test.mean
    return AblationRow(seed, variant, m.r2, m.mae, m.rmse)


def compare_models(field_, config: TrainConfig, seed: int, branches=("stack", "lstm", "mlp")) -> list[AblationRow]:
    """Stacking network against its single-branch variants on one field."""
    raw, _ = field_samples(field_, config)
    return [_row(seed, b, run_experiment(raw, dataclasses.replace(config, branches=b), seed)) for b in branches]


def fusion_ablation(field_, config: TrainConfig, seed: int) -> list[AblationRow]:
    """Same split and initialisation seed with and without the injection column."""
    fused_cfg = dataclasses.replace(config, fuse=True)
    raw, _ = field_samples(field_, fused_cfg)
    rows = [_row(seed, "fused", run_experiment(raw, fused_cfg, seed))]
    rows.append(_row(seed, "unfused", run_experiment(drop_injection(raw), dataclasses.replace(config, fuse=False), seed)))
    return rows


def length_ablation(field_, config: TrainConfig, seed: int, lengths=(60, 30, 12)) -> list[AblationRow]:
    """Retrain with windows of each length; selection always uses the full history."""
    rows = []
    for T in lengths:
        cfg = dataclasses.replace(config, T=T)
        raw, _ = field_samples(field_, cfg)
        rows.append(_row(seed, f"T={T}", run_experiment(raw, cfg, seed)))
    return rows
