"""Command-line entry point: ``prodstack <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

Every subcommand accepts ``--config FILE``. The file holds one
``key = value`` per line, ``#`` starts a comment, and keys are option
names with dashes replaced by underscores (``theta_max = 12``). Flags given
on the command line override file values; a key no subcommand declares is
a usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import core_data, pipeline, preprocess, spatial_fusion, ste, synthgen
from .core_data import DYNAMIC_FEATURES, INJECTION_FEATURE, DataError, SampleSet, WellId, WellKind
from .neural import CorruptFile, VersionMismatch
from .pipeline import DimMismatch, NonFiniteLoss, TrainConfig
from .plots import write_line_chart
from .preprocess import MinMaxScaler, PreprocessError, SampleScalers

log = logging.getLogger("prodstack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_HELP = (
    "config file grammar: one 'key = value' per line, '#' starts a comment; "
    "keys are option names with '-' replaced by '_'; command-line flags override file values"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

RAW_FILES = ("static.csv", "dynamic.csv", "injection.csv", "geometry.csv")
FALLBACK = "FALLBACK"


def load_dir(path):
    d = Path(path)
    return (
        core_data.load_static_csv(d / "static.csv"),
        core_data.load_dynamic_csv(d / "dynamic.csv"),
        core_data.load_injection_csv(d / "injection.csv"),
        core_data.load_geometry_csv(d / "geometry.csv"),
    )


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None


def write_split(path, split: dict[str, str]):
    _write_csv(path, ("well_id", "split"), sorted(split.items()))


def read_split(path) -> dict[str, str]:
    return {r["well_id"]: r["split"] for r in _read_csv(path)}


def write_selections(path, selections):
    rows = [
        (
            s.producer.id,
            FALLBACK if s.injector is None else s.injector.id,
            s.theta,
            float(s.r),
            int(s.is_fallback),
            ";".join(w.id for w in s.averaged),
        )
        for s in selections
    ]
    _write_csv(path, ("producer_id", "injector_id", "theta", "r", "fallback", "averaged"), rows)


def read_selections(path):
    out = []
    for r in _read_csv(path):
        inj = None if r["injector_id"] in ("", FALLBACK) else WellId(r["injector_id"], WellKind.INJECTOR)
        avg = tuple(WellId(w, WellKind.INJECTOR) for w in r["averaged"].split(";") if w)
        out.append(
            spatial_fusion.InjectorSelection(
                WellId(r["producer_id"], WellKind.PRODUCER), inj, int(r["theta"]), float(r["r"]), avg
            )
        )
    return out


def _scalers_for(scalers: SampleScalers, dynamic_names) -> SampleScalers:
    dyn = scalers.dynamic
    idx = []
    for n in dynamic_names:
        if n not in dyn.names:
            raise DataError(f"scaler file has no entry for dynamic feature {n!r}; run 'fuse' first")
        idx.append(dyn.names.index(n))
    return SampleScalers(scalers.static, MinMaxScaler(tuple(dynamic_names), dyn.mins[idx], dyn.maxs[idx]), scalers.target)


# ---------------------------------------------------------------------------
# Dataset assembly shared by train / predict / evaluate / warn
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class Prepared:
    raw: SampleSet
    split: dict[str, str]
    scalers: SampleScalers
    data: SampleSet  # normalized

    def part(self, name: str) -> SampleSet:
        if name == "all":
            return self.data
        return self.data.subset(w for w in self.data.ids() if self.split.get(w.id) == name)


def prepare(data_dir, T: int, fuse: bool) -> Prepared:
    d = Path(data_dir)
    statics, dynamics, injections, _ = load_dir(d)
    raw = preprocess.build_samples(statics, dynamics, T)
    sel_path = d / "selections.csv"
    if fuse:
        if not sel_path.exists():
            raise DataError(f"{sel_path}: not found; run 'fuse' first or pass --no-fuse")
        raw = spatial_fusion.build_fused_samples(raw, read_selections(sel_path), spatial_fusion.injection_table(injections))
    split = read_split(d / "split.csv")
    scalers = _scalers_for(preprocess.read_scalers(d / "scaler.txt"), raw.dynamic_names)
    return Prepared(raw, split, scalers, preprocess.normalize_samples(raw, scalers))


def _fuse_flag(args, data_dir) -> bool:
    if args.no_fuse:
        return False
    return (Path(data_dir) / "selections.csv").exists()


def _prepare_for_model(args, params) -> Prepared:
    d = params.dims
    fuse = d.l == len(DYNAMIC_FEATURES) + 1
    if args.T is not None and args.T != d.T:
        raise DimMismatch(f"model dims (k={d.k}, l={d.l}, T={d.T}) vs data window T={args.T}")
    if fuse and not (Path(args.data) / "selections.csv").exists():
        raise DimMismatch(
            f"model dims (k={d.k}, l={d.l}, T={d.T}) vs data dims "
            f"(k={len(core_data.STATIC_FEATURES)}, l={len(DYNAMIC_FEATURES)}, T={d.T}): data has no fused injection"
        )
    return prepare(args.data, d.T, fuse)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    anomalies = []
    for spec in args.anomaly or []:
        try:
            well, month, mag = spec.split(":")
            idx = int(well.lstrip("Pp")) - 1
            anomalies.append(synthgen.Anomaly(idx, int(month), float(mag)))
        except ValueError:
            raise UsageError(f"bad --anomaly {spec!r}; expected PRODUCER:MONTH:TONNES, e.g. P003:49:30") from None
    cfg = synthgen.SynthConfig(
        n_producers=args.producers,
        n_injectors=args.injectors,
        months=args.months,
        extent=args.extent,
        beta_range=(args.beta_min, args.beta_max),
        target_noise=args.noise,
        anomalies=tuple(anomalies),
        seed=args.seed,
    )
    if args.noiseless:
        cfg = cfg.noiseless()
    synthgen.write_field(synthgen.generate_field(cfg), args.out)
    log.info("wrote synthetic field (seed %d) to %s", args.seed, args.out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    statics, dynamics, injections, geometry = load_dir(args.data)
    report = core_data.validate_dataset(statics, dynamics, injections, geometry)
    if not report.ok:
        raise DataError(f"dataset validation failed: {report}")
    statics = preprocess.clean_static(statics, args.fence, args.knn)
    dynamics = preprocess.clean_dynamic(dynamics, args.fence)
    table = spatial_fusion.injection_table(injections)
    injections = [
        core_data.InjectionRecord(w, m, v) for w in sorted(table) for m, v in sorted(table[w].items())
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    core_data.write_static_csv(out / "static.csv", statics)
    core_data.write_dynamic_csv(out / "dynamic.csv", dynamics)
    core_data.write_injection_csv(out / "injection.csv", injections)
    core_data.write_geometry_csv(out / "geometry.csv", geometry)

    raw = preprocess.build_samples(statics, dynamics, args.T)
    train, val, test = pipeline.split_wells(raw, args.test_fraction, args.seed, args.val_fraction)
    split = {w.id: "train" for w in train.ids()}
    split.update({w.id: "validation" for w in val.ids()})
    split.update({w.id: "test" for w in test.ids()})
    write_split(out / "split.csv", split)
    preprocess.write_scalers(out / "scaler.txt", preprocess.fit_sample_scalers(train))
    log.info("cleaned %d producers: %d train, %d validation, %d test", len(raw), len(train), len(val), len(test))
    return EXIT_OK


def cmd_fuse(args) -> int:
    d = Path(args.data)
    statics, dynamics, injections, geometry = load_dir(d)
    production: dict[WellId, tuple[list, list]] = {}
    for r in dynamics:
        ms, ys = production.setdefault(r.well, ([], []))
        ms.append(r.month)
        ys.append(r.monthly_oil_production)
    production = {w: (np.array(ms), np.array(ys, dtype=float)) for w, (ms, ys) in production.items()}
    table = spatial_fusion.injection_table(injections)
    selections = spatial_fusion.select_all(
        geometry, production, table, args.radius, args.r_min, args.theta_max, not args.exclusive_theta
    )
    write_selections(d / "selections.csv", selections)
    by_producer = {s.producer: s for s in selections}
    fused_rows = []
    for producer in sorted(production):
        months = production[producer][0]
        col = spatial_fusion.fused_column(by_producer[producer], table, months)
        fused_rows.extend((producer.id, int(m), float(v)) for m, v in zip(months, col))
    _write_csv(d / "fused_injection.csv", ("well_id", "month", INJECTION_FEATURE), fused_rows)

    # lag-correlation curves of every screened pair
    rows = []
    for producer in sorted(production):
        months, y = production[producer]
        for inj in spatial_fusion.candidate_injectors(geometry, producer, args.radius):
            r = spatial_fusion.xcorr_curve(y, spatial_fusion.injection_on(table, inj, months), args.theta_max)
            rows.extend((producer.id, inj.id, theta, float(v)) for theta, v in enumerate(r))
    _write_csv(d / "xcorr.csv", ("producer_id", "injector_id", "theta", "r"), rows)

    # refit scalers on the fused training wells so the injection column has one
    split = read_split(d / "split.csv")
    raw = preprocess.build_samples(statics, dynamics, args.T)
    fused = spatial_fusion.build_fused_samples(raw, selections, table)
    train = fused.subset(w for w in fused.ids() if split.get(w.id) == "train")
    preprocess.write_scalers(d / "scaler.txt", preprocess.fit_sample_scalers(train))
    n_fb = sum(s.is_fallback for s in selections)
    log.info("selected injectors for %d producers (%d fallback)", len(selections), n_fb)
    return EXIT_OK


def _train_config(args, **over) -> TrainConfig:
    kw = dict(
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
        c=args.channels,
        hs=args.hidden_static,
        hf=args.hidden_head,
        T=args.T if args.T is not None else 60,
        branches=args.branches,
        fusion=args.fusion,
        optimizer=args.optimizer,
    )
    kw.update(over)
    return TrainConfig(**kw)


def cmd_train(args) -> int:
    fuse = _fuse_flag(args, args.data)
    cfg = _train_config(args, fuse=fuse)
    prep = prepare(args.data, cfg.T, fuse)
    params, curve = pipeline.train_model(cfg, prep.part("train"), prep.part("validation"))
    pipeline.save_model(params, args.model)
    if args.curve:
        _write_csv(args.curve, ("epoch", "train_loss", "val_loss"), curve.rows())
    if args.svg:
        ep = np.arange(1, len(curve) + 1)
        write_line_chart(
            args.svg,
            {"train": (ep, curve.train_loss), "validation": (ep, curve.val_loss)},
            title="Learning curve",
            xlabel="epoch",
            ylabel="MSE (normalized)",
        )
    log.info("trained %d epochs, best validation loss %.6g at epoch %d", len(curve), min(curve.val_loss), curve.best_epoch + 1)
    return EXIT_OK


def cmd_predict(args) -> int:
    params = pipeline.load_model(args.model)
    prep = _prepare_for_model(args, params)
    rows = []
    series = {}
    for s in prep.part(args.split).samples:
        y_hat = pipeline.predict_well(params, s, prep.scalers)
        y = pipeline.true_target(s, prep.scalers)
        real = s.months > 0
        rows.extend((s.well.id, int(m), float(a), float(b)) for m, a, b in zip(s.months[real], y[real], y_hat[real]))
        if len(series) < 2:
            series[f"{s.well.id} actual"] = (s.months[real], y[real])
            series[f"{s.well.id} predicted"] = (s.months[real], y_hat[real])
    _write_csv(args.out, ("well_id", "month", "y_true", "y_pred"), rows)
    if args.svg:
        write_line_chart(args.svg, series, title="Monthly oil production", xlabel="month", ylabel="t")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params = pipeline.load_model(args.model)
    prep = _prepare_for_model(args, params)
    table = pipeline.evaluate_model(params, prep.part(args.split), prep.scalers)
    m = table.mean
    _write_csv(args.out, ("well_id", "r2", "mae", "rmse"), table.rows() + [("mean", m.r2, m.mae, m.rmse)])
    log.info("mean R2 %.4f, MAE %.4f, RMSE %.4f over %d wells", m.r2, m.mae, m.rmse, len(table.wells))
    return EXIT_OK


def cmd_warn(args) -> int:
    params = pipeline.load_model(args.model)
    prep = _prepare_for_model(args, params)
    pool = pipeline.residuals(params, prep.part("validation"), prep.scalers)
    events = []
    for s in prep.part(args.split).samples:
        real = s.months > 0
        y_hat = pipeline.predict_well(params, s, prep.scalers)[real]
        y = pipeline.true_target(s, prep.scalers)[real]
        events.extend(
            pipeline.early_warning(y_hat, y, pool, s.months[real], s.well, args.k_sigma, args.threshold)
        )
    episodes = pipeline.group_episodes(events)
    _write_csv(
        args.out,
        ("well_id", "onset_month", "residual", "threshold"),
        [(e.well.id, e.onset_month, e.residual, e.threshold) for e in episodes],
    )
    log.info("%d warning episodes", len(episodes))
    return EXIT_OK


def cmd_ste(args) -> int:
    d = Path(args.data)
    statics, dynamics, injections, _ = load_dir(d)
    params = ste.SteParams(args.m, args.lag, 1)
    by_well: dict[WellId, list] = {}
    for r in dynamics:
        by_well.setdefault(r.well, []).append(r)
    selections = {}
    if (d / "selections.csv").exists():
        selections = {s.producer: s for s in read_selections(d / "selections.csv")}
    table = spatial_fusion.injection_table(injections)
    rows = []
    wells = sorted(by_well) if not args.well else [w for w in sorted(by_well) if w.id in set(args.well)]
    if args.well and not wells:
        raise DataError(f"no producer among {', '.join(args.well)}")
    for well in wells:
        recs = sorted(by_well[well], key=lambda r: r.month)
        months = np.array([r.month for r in recs])
        y = np.array([r.monthly_oil_production for r in recs], dtype=float)
        sources = {n: np.array([getattr(r, n) for r in recs], dtype=float) for n in DYNAMIC_FEATURES}
        sources["aggregate_dynamic"] = ste.aggregate_driver(list(sources.values()))
        if well in selections:
            sources[INJECTION_FEATURE] = spatial_fusion.fused_column(selections[well], table, months)
        if args.source:
            unknown = sorted(set(args.source) - set(sources))
            if unknown:
                raise DataError(f"unknown STE source(s) {', '.join(unknown)}; choose from {', '.join(sources)}")
            sources = {n: sources[n] for n in args.source}
        for name, x in sources.items():
            for row in ste.ste_curve(x, y, params, range(1, args.delta_max + 1)):
                rows.append(
                    (well.id, name, row.delta, row.ste_xy, row.ste_yx, row.ste_xy - row.ste_yx, int(row.small_sample))
                )
    _write_csv(args.out, ("well_id", "source", "delta", "ste_xy", "ste_yx", "directivity", "small_sample"), rows)
    return EXIT_OK


def cmd_ablate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _train_config(args)
    experiments = ("models", "fusion", "length") if args.experiment == "all" else (args.experiment,)
    header = ("seed", "variant", "r2", "mae", "rmse")
    for exp in experiments:
        rows = []
        for seed in range(args.seed, args.seed + args.seeds):
            synth = synthgen.SynthConfig(
                n_producers=args.producers,
                n_injectors=args.injectors,
                extent=args.extent,
                beta_range=(args.beta_min, args.beta_max),
                seed=seed,
            )
            field_ = synthgen.generate_field(synth)
            run_cfg = dataclasses.replace(cfg, seed=seed)
            if exp == "models":
                rows += pipeline.compare_models(field_, run_cfg, seed)
            elif exp == "fusion":
                rows += pipeline.fusion_ablation(field_, run_cfg, seed)
            else:
                rows += pipeline.length_ablation(field_, run_cfg, seed)
            log.info("%s: seed %d done", exp, seed)
        name = {"models": "model_comparison.csv", "fusion": "fusion_ablation.csv", "length": "length_ablation.csv"}[exp]
        _write_csv(out / name, header, [dataclasses.astuple(r) for r in rows])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_train_flags(p, seed_default=0):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=700, help="maximum epochs (default 700)")
    g.add_argument("--lr", type=float, default=2e-3, help="learning rate (default 2e-3)")
    g.add_argument("--batch-size", type=int, default=16, help="mini-batch size, 0 for full batch (default 16)")
    g.add_argument("--patience", type=int, default=150, help="early-stop patience in epochs (default 150)")
    g.add_argument("--channels", type=int, default=16, help="encoder output channels c (default 16)")
    g.add_argument("--hidden-static", type=int, default=32, help="static MLP hidden units (default 32)")
    g.add_argument("--hidden-head", type=int, default=32, help="head hidden units (default 32)")
    g.add_argument("--branches", choices=("stack", "lstm", "mlp"), default="stack", help="encoder branches (default stack)")
    g.add_argument("--fusion", choices=("channel", "scalar"), default="channel", help="fusion kernel form (default channel)")
    g.add_argument("--optimizer", choices=("adam", "sgd"), default="adam", help="optimizer (default adam)")


def _add_field_flags(p):
    g = p.add_argument_group("synthetic field")
    g.add_argument("--producers", type=int, default=30, help="number of producers (default 30)")
    g.add_argument("--injectors", type=int, default=12, help="number of injectors (default 12)")
    g.add_argument("--extent", type=float, default=3000.0, help="field side length in m (default 3000)")
    d = synthgen.SynthConfig()
    g.add_argument("--beta-min", type=float, default=d.beta_range[0], help="lower relative injection response")
    g.add_argument("--beta-max", type=float, default=d.beta_range[1], help="upper relative injection response")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prodstack", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=CONFIG_HELP)
        p.add_argument("--config", help="key = value config file")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic waterflood field (four CSVs plus truth.csv)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--months", type=int, default=84, help="months of history (default 84)")
    p.add_argument("--noise", type=float, default=synthgen.SynthConfig.target_noise, help="production noise sd in t")
    p.add_argument("--noiseless", action="store_true", help="drop all noise and downtime")
    p.add_argument("--anomaly", action="append", help="step change PRODUCER:MONTH:TONNES (repeatable)")
    _add_field_flags(p)

    p = add("preprocess", cmd_preprocess, "clean raw CSVs, split wells and fit scalers on the training wells")
    p.add_argument("--data", required=True, help="directory with the raw CSVs")
    p.add_argument("--out", required=True, help="output directory for cleaned data")
    p.add_argument("--T", type=int, default=60, help="window length in months (default 60)")
    p.add_argument("--fence", type=float, default=1.5, help="IQR fence multiplier (default 1.5)")
    p.add_argument("--knn", type=int, default=5, help="neighbours for static imputation (default 5)")
    p.add_argument("--test-fraction", type=float, default=0.2, help="share of wells held out for test (default 0.2)")
    p.add_argument("--val-fraction", type=float, default=0.2, help="share of remaining wells for validation (default 0.2)")
    p.add_argument("--seed", type=int, default=0, help="split seed (default 0)")

    p = add("fuse", cmd_fuse, "select injectors by lagged correlation and refit scalers with the injection column")
    p.add_argument("--data", required=True, help="directory with cleaned data")
    p.add_argument("--T", type=int, default=60, help="window length in months (default 60)")
    p.add_argument("--radius", type=float, default=800.0, help="candidate injector radius in m (default 800)")
    p.add_argument("--r-min", type=float, default=0.3, help="minimum |r| to accept an injector (default 0.3)")
    p.add_argument("--theta-max", type=int, default=12, help="maximum lag in months (default 12)")
    p.add_argument("--exclusive-theta", action="store_true", help="require theta < theta-max instead of <=")

    p = add("train", cmd_train, "train the stacking network on the training wells")
    p.add_argument("--data", required=True, help="directory with cleaned (and fused) data")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--curve", help="learning-curve CSV (epoch, train_loss, val_loss)")
    p.add_argument("--svg", help="optional learning-curve SVG")
    p.add_argument("--T", type=int, default=None, help="window length in months (default 60)")
    p.add_argument("--no-fuse", action="store_true", help="ignore selections.csv and train without injection")
    p.add_argument("--seed", type=int, default=0, help="initialisation seed (default 0)")
    _add_train_flags(p)

    for name, func, text, out_help in (
        ("predict", cmd_predict, "predict production in tonnes", "predictions CSV (well_id, month, y_true, y_pred)"),
        ("evaluate", cmd_evaluate, "per-well R2, MAE and RMSE", "metrics CSV (well_id, r2, mae, rmse)"),
        ("warn", cmd_warn, "flag months whose residual exceeds the validation-derived threshold",
         "warnings CSV (well_id, onset_month, residual, threshold)"),
    ):
        p = add(name, func, text)
        p.add_argument("--data", required=True, help="directory with cleaned (and fused) data")
        p.add_argument("--model", required=True, help="model file written by 'train'")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--split", choices=("train", "validation", "test", "all"), default="test", help="wells to use (default test)")
        p.add_argument("--T", type=int, default=None, help="expected window length (default: the model's)")
        if name == "predict":
            p.add_argument("--svg", help="optional SVG of the first two wells")
        if name == "warn":
            p.add_argument("--k-sigma", type=float, default=3.0, help="threshold in validation residual sd (default 3)")
            p.add_argument("--threshold", type=float, default=None, help="absolute threshold in t (overrides --k-sigma)")

    p = add("ste", cmd_ste, "symbolic transfer entropy from each dynamic driver to production")
    p.add_argument("--data", required=True, help="directory with cleaned data")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--m", type=int, default=3, help="embedding dimension (default 3)")
    p.add_argument("--lag", type=int, default=1, help="embedding time delay (default 1)")
    p.add_argument("--delta-max", type=int, default=12, help="largest prediction horizon (default 12)")
    p.add_argument("--source", action="append",
                   help="driver column (repeatable): a dynamic feature, aggregate_dynamic or the fused injection; default all")
    p.add_argument("--well", action="append", help="producer id to analyse (repeatable; default all)")

    p = add("ablate", cmd_ablate, "run model-comparison, fusion and window-length experiments on synthetic fields")
    p.add_argument("--out", required=True, help="output directory for the comparison CSVs")
    p.add_argument("--experiment", choices=("models", "fusion", "length", "all"), default="all", help="which matrix (default all)")
    p.add_argument("--seeds", type=int, default=10, help="number of seeded fields (default 10)")
    p.add_argument("--seed", type=int, default=0, help="first field seed (default 0)")
    p.add_argument("--T", type=int, default=60, help="window length for models/fusion (default 60)")
    _add_field_flags(p)
    _add_train_flags(p)
    return parser


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _declared_keys(parser) -> set[str]:
    keys = set()
    for sp in _subparsers(parser).values():
        keys.update(a.dest for a in sp._actions if a.dest not in ("help", "config", "func"))
    return keys


def read_config(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(action, value: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        v = value.lower()
        if v not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise UsageError(f"config key {action.dest}: expected a boolean, got {value!r}")
        on = v in ("1", "true", "yes", "on")
        return on if isinstance(action, argparse._StoreTrueAction) else not on
    if isinstance(action, argparse._AppendAction):
        return [v.strip() for v in value.split(",") if v.strip()]
    try:
        result = action.type(value) if action.type else value
    except (TypeError, ValueError):
        raise UsageError(f"config key {action.dest}: invalid value {value!r}") from None
    if action.choices is not None and result not in action.choices:
        raise UsageError(f"config key {action.dest}: {value!r} not in {sorted(action.choices)}")
    return result


def _apply_config(parser, argv):
    """Parse twice: once to find the subcommand and --config, then with file defaults."""
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip() + "\nprodstack: error: a subcommand is required")
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    unknown = sorted(set(values) - _declared_keys(parser))
    if unknown:
        raise UsageError(f"{args.config}: unknown config key(s): {', '.join(unknown)}")
    sp = _subparsers(parser)[args.command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {k: _convert(actions[k], v) for k, v in values.items() if k in actions}
    for a in sp._actions:
        if a.dest in defaults:
            a.required = False
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_DATA_ERRORS = (
    DataError,
    PreprocessError,
    DimMismatch,
    VersionMismatch,
    CorruptFile,
    synthgen.InvalidConfig,
    pipeline.TooFewWells,
    pipeline.EmptyResidualPool,
    ste.TooShort,
    OSError,
    ValueError,
    KeyError,
)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, FloatingPointError) as exc:
        print(f"prodstack {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"prodstack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
