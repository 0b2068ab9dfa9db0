"""Command-line pipeline: synth, train, forecast, score, evaluate, ablate.

Every run is driven by a key=value config file plus ``--seed``/``--out``
overrides, and every artifact a run writes (config snapshot, checkpoint,
logs, reports) is reproducible byte-for-byte from the same config and
seed; wall-clock timings go to a separate sidecar.  Failures exit
nonzero with a single ``error:<category>: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import config as config_mod
from . import data as data_mod
from . import evaluation, kernels, scoring, synth, training
from .errors import ClinicastError, ConfigError, DataError
from .models import build_model, checkpoint_name, load_checkpoint, save_checkpoint


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def fresh_path(directory, stem, suffix):
    """Next unused name in a run directory (reports are append-only)."""
    path = os.path.join(directory, f"{stem}{suffix}")
    counter = 1
    while os.path.exists(path):
        path = os.path.join(directory, f"{stem}_{counter}{suffix}")
        counter += 1
    return path


def load_dataset(data_dir):
    """Series plus catalog from a data directory.

    Expects observations.csv and statics.csv; manifest.json (written by
    the generator) supplies variable order and role tags.  Without a
    manifest the catalog is inferred from the files, with no role tags.
    """
    obs_path = os.path.join(data_dir, "observations.csv")
    statics_path = os.path.join(data_dir, "statics.csv")
    if not os.path.exists(obs_path):
        raise DataError(f"no observations.csv under {data_dir}")
    series = data_mod.read_series(obs_path, statics_path if os.path.exists(statics_path) else None)
    manifest_path = os.path.join(data_dir, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        dynamic = [v["name"] for v in manifest["variables"]]
        roles = {v["name"]: tuple(v.get("roles", ())) for v in manifest["variables"] if v.get("roles")}
        catalog = data_mod.VariableCatalog(dynamic, manifest.get("statics", ()), roles)
    else:
        dynamic = sorted({o.f for s in series for o in s.observations})
        statics = sorted({name for s in series for name in s.statics})
        catalog = data_mod.VariableCatalog(dynamic, statics)
    return series, catalog


def split_and_standardize(series, catalog, cfg):
    """Patient-level split, stats on train only, standardize all splits."""
    train, dev, test = data_mod.split_patients(series, cfg.split_fractions, cfg.split_seed)
    stats = data_mod.StandardizationStats.fit(train, catalog)
    splits = tuple(
        [data_mod.standardize(s, stats) for s in part] for part in (train, dev, test)
    )
    return splits, stats


def windows_for(series_list, catalog):
    windows = []
    for series in series_list:
        windows.extend(data_mod.sliding_windows(series, catalog))
    return windows


# -- subcommands ----------------------------------------------------------


def cmd_synth(args):
    overrides = {}
    if args.patients is not None:
        overrides["n_patients"] = str(args.patients)
    if args.config:
        gen_cfg = config_mod.load_generator_config(args.config, overrides)
    else:
        gen_cfg = config_mod.generator_config_from_pairs(overrides)
    cohort = synth.generate_cohort(gen_cfg, args.seed)
    os.makedirs(args.out, exist_ok=True)
    data_mod.write_observations(os.path.join(args.out, "observations.csv"), cohort.series)
    data_mod.write_statics(os.path.join(args.out, "statics.csv"), cohort.series)
    manifest = cohort.manifest()
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_obs = sum(len(s.observations) for s in cohort.series)
    print(f"wrote {len(cohort.series)} patients, {n_obs} observations to {args.out}")
    return 0


def _resolve_experiment(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.data is not None:
        overrides["data"] = args.data
    cfg = config_mod.load_experiment_config(args.config, overrides)
    if not cfg.data:
        raise ConfigError("no data directory configured (key 'data' or --data)")
    return cfg


def cmd_train(args):
    cfg = _resolve_experiment(args)
    series, catalog = load_dataset(cfg.data)
    (train, dev, _test), stats = split_and_standardize(series, catalog, cfg)
    train_windows = windows_for(train, catalog)
    dev_windows = windows_for(dev, catalog)
    if not train_windows or not dev_windows:
        raise DataError(
            f"not enough 48 h spans (train={len(train_windows)}, dev={len(dev_windows)})"
        )
    run_dir = os.path.join(cfg.out, f"run_{checkpoint_name(cfg)[6:-4]}")
    os.makedirs(run_dir, exist_ok=True)
    ckpt_path = os.path.join(run_dir, checkpoint_name(cfg))
    if os.path.exists(ckpt_path) and not args.force:
        raise ConfigError(f"checkpoint {ckpt_path} exists; use --force to retrain")

    model = build_model(cfg, catalog)
    discarded = sum(data_mod.bin_to_grid(s, catalog).discarded for s in train)
    total_obs = sum(len(s.observations) for s in train)
    print(
        f"training {cfg.encoder}+{cfg.decoder} on {len(train_windows)} windows "
        f"({kernels.backend()} kernels); densification discards "
        f"{discarded}/{total_obs} training observations"
    )
    result = training.fit(
        model, train_windows, dev_windows, cfg, catalog,
        progress=lambda row: print(
            f"epoch {row['epoch']}: train {row['train_mse']:.5f} dev {row['dev_mse']:.5f}"
        ),
    )
    config_mod.write_kv_file(
        os.path.join(run_dir, "config_snapshot.cfg"), config_mod.snapshot_pairs(cfg)
    )
    write_csv(
        os.path.join(run_dir, "training_log.csv"),
        ["epoch", "train_mse", "dev_mse", "ratio", "lr"],
        [
            (r["epoch"], r["train_mse"], r["dev_mse"], r["ratio"], r["lr"])
            for r in result.history
        ],
    )
    write_csv(os.path.join(run_dir, "timing.csv"), ["epoch", "seconds"], result.timing)
    save_checkpoint(
        ckpt_path, model, catalog, stats,
        extra={
            "stop_reason": result.stop_reason,
            "best_epoch": result.best_epoch,
            "best_dev": result.best_dev,
            "epochs_run": result.epochs_run,
        },
    )
    with open(os.path.join(run_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "stop_reason": result.stop_reason,
                "best_epoch": result.best_epoch,
                "best_dev": result.best_dev,
                "epochs_run": result.epochs_run,
                "train_windows": len(train_windows),
                "dev_windows": len(dev_windows),
                "checkpoint": os.path.basename(ckpt_path),
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    print(
        f"stopped by {result.stop_reason} after {result.epochs_run} epochs; "
        f"best dev {result.best_dev!r} @ epoch {result.best_epoch}; saved {ckpt_path}"
    )
    return 0


def _checkpoint_split(args, wanted):
    model, catalog, stats, meta = load_checkpoint(args.checkpoint)
    cfg = config_mod.experiment_config_from_pairs(meta["config"])
    series, data_catalog = load_dataset(args.data)
    if data_catalog.dynamic != catalog.dynamic:
        raise DataError("data directory variables do not match the checkpoint catalog")
    train, dev, test = data_mod.split_patients(series, cfg.split_fractions, cfg.split_seed)
    chosen = {"train": train, "dev": dev, "test": test, "all": series}[wanted]
    standardized = [data_mod.standardize(s, stats) for s in chosen]
    return model, catalog, stats, cfg, standardized


def cmd_forecast(args):
    model, catalog, stats, _cfg, series = _checkpoint_split(args, args.split)
    windows = windows_for(series, catalog)
    if not windows:
        raise DataError("no 48 h windows in the requested split")
    preds = evaluation.forecast_windows(model, windows, catalog, args.batch_size)
    os.makedirs(args.out, exist_ok=True)
    path = fresh_path(args.out, "forecast", ".csv")
    rows = []
    for window, pred in zip(windows, preds):
        raw = data_mod.destandardize_grid(pred, stats, catalog)
        for hour in range(raw.shape[0]):
            for j, name in enumerate(catalog.dynamic):
                rows.append(
                    (window.patient_id, window.start, hour + 1, name, raw[hour, j])
                )
    write_csv(path, ["patient_id", "window_start", "hour", "variable", "value"], rows)
    print(f"wrote {len(rows)} forecast values for {len(windows)} windows to {path}")
    return 0


def cmd_score(args):
    series, catalog = load_dataset(args.data)
    records = []
    for s in series:
        if s.span < data_mod.OBS_HOURS:
            continue
        records.append(scoring.score_patient_record(s, catalog))
    if not records:
        raise DataError("no patient spans at least 24 h")
    os.makedirs(args.out, exist_ok=True)
    path = fresh_path(args.out, "scores", ".csv")
    header = list(records[0].keys())
    write_csv(path, header, [[r[k] for k in header] for r in records])
    print(f"scored {len(records)} patients to {path}")
    return 0


def cmd_evaluate(args):
    model, catalog, stats, _cfg, series = _checkpoint_split(args, args.split)
    windows = windows_for(series, catalog)
    if not windows:
        raise DataError("no 48 h windows in the requested split")
    report = evaluation.evaluate_model(model, windows, catalog, stats, args.batch_size)
    os.makedirs(args.out, exist_ok=True)
    path = fresh_path(args.out, "report", ".csv")
    write_csv(path, ["metric", "value", "ci_lo", "ci_hi"], report.rows())
    for name, value, lo, hi in report.rows():
        ci = f" [{lo}, {hi}]" if lo != "" else ""
        print(f"{name}: {value}{ci}")
    print(f"wrote {path}")
    return 0


def cmd_ablate(args):
    model, catalog, stats, _cfg, series = _checkpoint_split(args, args.split)
    windows = windows_for(series, catalog)
    if not windows:
        raise DataError("no 48 h windows in the requested split")
    result = evaluation.drug_ablation(
        model, windows, catalog, stats, args.drug, alpha=args.alpha,
        batch_size=args.batch_size,
    )
    os.makedirs(args.out, exist_ok=True)
    path = fresh_path(args.out, f"ablation_{args.drug}", ".csv")
    write_csv(
        path,
        ["variable", "mean_q1", "mean_q3", "mean_diff", "t_p", "u_p",
         "cohens_d", "significant_t", "significant_u", "significant"],
        [
            (r.variable, r.mean_q1, r.mean_q3, r.mean_diff, r.t_p, r.u_p,
             r.cohens_d, int(r.significant_t), int(r.significant_u), int(r.significant))
            for r in result.rows
        ],
    )
    hits = [r.variable for r in result.significant_rows()]
    print(
        f"{args.drug}: Q1={result.q1!r} Q3={result.q3!r}, "
        f"{len(hits)} significant after Bonferroni ({result.threshold!r}): {hits}"
    )
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clinicast",
        description="Forecast sparse clinical time series and score the forecasts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", help="generator key=value config file")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, help="override n_patients")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True, help="experiment key=value config file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--data", help="override data directory")
    p.add_argument("--force", action="store_true", help="allow checkpoint overwrite")
    p.set_defaults(func=cmd_train)

    for name, func, extra in (
        ("forecast", cmd_forecast, ()),
        ("evaluate", cmd_evaluate, ()),
        ("ablate", cmd_ablate, ("drug",)),
    ):
        p = sub.add_parser(name, help=f"{name} with a trained checkpoint")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--split", default="test", choices=["train", "dev", "test", "all"])
        p.add_argument("--batch-size", type=int, default=32)
        if "drug" in extra:
            p.add_argument("--drug", required=True)
            p.add_argument("--alpha", type=float, default=0.05)
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="apply the consensus definitions to gold data")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ClinicastError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
