"""Command-line front end.

Subcommands: synth, train, evaluate, crossval, survival, explain. Settings
come from an INI file (--config) merged over built-in desk-scale defaults;
unknown sections or keys are rejected by name. A single master seed (--seed or
[run] seed) feeds every random stream through fixed offsets: synth +0,
train/test split +1, weight init +2, batch shuffling +3, bootstrap +4,
cross-validation folds +5.

Exit codes: 0 success, 2 configuration or schema error, 3 training failure,
4 I/O or unreadable input file, 5 degenerate data (single class, no events,
zero variance, non-convergence).

Every command writes its outputs atomically (temp file + rename) into --out,
plus manifest.json describing the run and effective.cfg echoing the merged
configuration.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    AllGridDegenerateError,
    BadMagicError,
    CacXrayError,
    ConstantCovariateError,
    DegenerateDatasetError,
    DegenerateLabelsError,
    DivergedError,
    EmptyCohortError,
    EmptyDatasetError,
    InvalidConfigError,
    MalformedFileError,
    MissingRequiredTagError,
    NegativeScoreError,
    NoEventsError,
    NoPositivesError,
    OneClassOnlyError,
    ShapeMismatchError,
    TooFewSamplesError,
    TrainingFailedError,
    TruncatedFileError,
    UnsupportedPhotometricError,
    UnsupportedTransferSyntaxError,
)
from .explain import export_saliency, gradcam
from .labels import fit_label_transform, transform, transform_threshold
from .metrics import (
    ScoredSample,
    auc_confidence_interval,
    calibration_table,
    confusion_at_threshold,
    cross_validate,
    crossval_to_csv,
    crossval_to_json,
    diagnostic_metrics,
    pr_curve,
    rauc,
    roc_auc,
)
from .model import (
    DenseNetConfig,
    TrainConfig,
    init_model,
    load_weights,
    predict,
    save_weights,
    sidecar_from_json,
    sidecar_to_json,
    train,
    weights_to_bytes,
)
from .preprocess import (
    PreprocessConfig,
    compute_dataset_stats,
    preprocess_uncalibrated,
    standardize,
    stats_from_csv,
    stats_to_csv,
)
from .survival import (
    cohort_from_csv,
    cox_fit,
    cox_to_json,
    kaplan_meier,
    km_event_estimate,
    km_to_csv,
    log_rank,
)
from .synthgen import SynthConfig, generate_samples, generate_survival, read_dataset, write_dataset

_SEED_OFFSETS = {"synth": 0, "split": 1, "init": 2, "shuffle": 3, "bootstrap": 4, "folds": 5}

_DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "0"},
    "synth": {
        "n": "400",
        "image_dim": "96",
        "zero_fraction": "0.3",
        "cac_max": "2000",
        "blob_count_range": "1,3",
        "blob_radius_range": "2,5",
        "blob_peak": "400",
        "mass_scale": "4000",
        "baseline_hazard": "0.03",
        "hazard_ratio": "2.5",
        "max_followup_years": "5.0",
    },
    "preprocess": {"resize_dim": "78", "crop_dim": "64", "eq_levels": "256"},
    "model": {
        "input_dim": "64",
        "init_channels": "16",
        "growth_rate": "8",
        "block_layers": "2,2,2",
        "compression": "0.5",
        "head_hidden": "64",
        "use_batchnorm": "true",
    },
    "train": {
        "epochs": "30",
        "batch_size": "4",
        "learning_rate": "0.0003",
        "weight_decay": "0.0001",
        "freeze_policy": "none",
        "train_fraction": "0.8",
    },
    "evaluate": {
        "truth_threshold": "0",
        "rauc_grid": "0,100,400",
        "calibration_edges": "0,100,400",
        "bootstrap_resamples": "2000",
        "confidence_level": "0.95",
    },
    "crossval": {"folds": "5"},
    "survival": {"group": "ai_cac_category", "adjust": "esc_class", "horizon_years": "5.0"},
}


def _load_config(path: str | None) -> dict[str, dict[str, str]]:
    merged = {sect: dict(keys) for sect, keys in _DEFAULTS.items()}
    if path is None:
        return merged
    cp = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise InvalidConfigError(f"cannot parse config file: {exc}") from exc
    for sect in cp.sections():
        if sect not in merged:
            raise InvalidConfigError(f"unknown config section [{sect}]")
        for key, value in cp[sect].items():
            if key not in merged[sect]:
                raise InvalidConfigError(f"unknown key {key!r} in section [{sect}]")
            merged[sect][key] = value
    return merged


def _as_int(cfg, sect, key):
    try:
        return int(cfg[sect][key])
    except ValueError as exc:
        raise InvalidConfigError(f"[{sect}] {key} must be an integer, got {cfg[sect][key]!r}") from exc


def _as_float(cfg, sect, key):
    try:
        return float(cfg[sect][key])
    except ValueError as exc:
        raise InvalidConfigError(f"[{sect}] {key} must be a number, got {cfg[sect][key]!r}") from exc


def _as_bool(cfg, sect, key):
    v = cfg[sect][key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidConfigError(f"[{sect}] {key} must be a boolean, got {cfg[sect][key]!r}")


def _as_tuple(cfg, sect, key, conv):
    try:
        return tuple(conv(part.strip()) for part in cfg[sect][key].split(",") if part.strip())
    except ValueError as exc:
        raise InvalidConfigError(f"[{sect}] {key} must be a comma list, got {cfg[sect][key]!r}") from exc


def _seed(cfg, args, stream: str) -> int:
    base = args.seed if args.seed is not None else _as_int(cfg, "run", "seed")
    return base + _SEED_OFFSETS[stream]


def _synth_config(cfg, args) -> SynthConfig:
    counts = _as_tuple(cfg, "synth", "blob_count_range", int)
    radii = _as_tuple(cfg, "synth", "blob_radius_range", int)
    if len(counts) != 2 or len(radii) != 2:
        raise InvalidConfigError("blob count/radius ranges need exactly two values")
    return SynthConfig(
        n=_as_int(cfg, "synth", "n"),
        image_dim=_as_int(cfg, "synth", "image_dim"),
        zero_fraction=_as_float(cfg, "synth", "zero_fraction"),
        cac_max=_as_float(cfg, "synth", "cac_max"),
        blob_count_range=counts,
        blob_radius_range=radii,
        blob_peak=_as_float(cfg, "synth", "blob_peak"),
        mass_scale=_as_float(cfg, "synth", "mass_scale"),
        baseline_hazard=_as_float(cfg, "synth", "baseline_hazard"),
        hazard_ratio=_as_float(cfg, "synth", "hazard_ratio"),
        max_followup_years=_as_float(cfg, "synth", "max_followup_years"),
        seed=_seed(cfg, args, "synth"),
    )


def _preprocess_config(cfg) -> PreprocessConfig:
    return PreprocessConfig(
        resize_dim=_as_int(cfg, "preprocess", "resize_dim"),
        crop_dim=_as_int(cfg, "preprocess", "crop_dim"),
        eq_levels=_as_int(cfg, "preprocess", "eq_levels"),
    )


def _net_config(cfg) -> DenseNetConfig:
    return DenseNetConfig(
        input_dim=_as_int(cfg, "model", "input_dim"),
        init_channels=_as_int(cfg, "model", "init_channels"),
        growth_rate=_as_int(cfg, "model", "growth_rate"),
        block_layers=_as_tuple(cfg, "model", "block_layers", int),
        compression=_as_float(cfg, "model", "compression"),
        head_hidden=_as_int(cfg, "model", "head_hidden"),
        use_batchnorm=_as_bool(cfg, "model", "use_batchnorm"),
    )


def _train_config(cfg, args) -> TrainConfig:
    return TrainConfig(
        epochs=_as_int(cfg, "train", "epochs"),
        batch_size=_as_int(cfg, "train", "batch_size"),
        learning_rate=_as_float(cfg, "train", "learning_rate"),
        weight_decay=_as_float(cfg, "train", "weight_decay"),
        seed=_seed(cfg, args, "shuffle"),
        freeze_policy=cfg["train"]["freeze_policy"],
    )


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _echo_config(out: Path, cfg: dict) -> None:
    cp = configparser.ConfigParser()
    for sect, keys in cfg.items():
        cp[sect] = dict(keys)
    buf = []

    class _Sink:
        def write(self, s):
            buf.append(s)

    cp.write(_Sink())
    _atomic_write_text(out / "effective.cfg", "".join(buf))


def _write_manifest(out: Path, command: str, seed: int, inputs: dict, extras: dict | None = None) -> None:
    doc = {"command": command, "seed": seed, "inputs": inputs, "version": __version__}
    if extras:
        doc.update(extras)
    _atomic_write_text(out / "manifest.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _prepare_out(args, cfg) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(out, cfg)
    return out


def _load_preprocessed(data_dir, pp_cfg):
    ids, dicoms, records = read_dataset(data_dir)
    crops = [preprocess_uncalibrated(d, pp_cfg) for d in dicoms]
    cacs = []
    for r in records:
        if "cac" not in r.covariates:
            raise InvalidConfigError(f"cohort row {r.id} lacks a 'cac' column")
        cacs.append(float(r.covariates["cac"]))
    return ids, crops, np.asarray(cacs), records


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    synth_cfg = _synth_config(cfg, args)
    samples = generate_samples(synth_cfg)
    generate_survival(synth_cfg, samples)
    write_dataset(synth_cfg, samples, out)
    n_pos = sum(1 for s in samples if s.cac > 0)
    print(f"wrote {synth_cfg.n} samples ({n_pos} with cac > 0) to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    pp_cfg = _preprocess_config(cfg)
    net_cfg = _net_config(cfg)
    tc = _train_config(cfg, args)
    frac = _as_float(cfg, "train", "train_fraction")
    if not 0.0 < frac <= 1.0:
        raise InvalidConfigError(f"train_fraction must lie in (0, 1], got {frac}")

    ids, crops, cacs, _ = _load_preprocessed(args.data, pp_cfg)
    n = len(ids)
    split_seed = _seed(cfg, args, "split")
    perm = np.random.default_rng(split_seed).permutation(n)
    n_train = int(round(frac * n))
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    if n_train < 2:
        raise EmptyDatasetError("training split has fewer than two samples")

    stats = compute_dataset_stats([crops[i] for i in train_idx])
    lt = fit_label_transform(cacs[train_idx])
    xtr = [standardize(crops[i], stats) for i in train_idx]
    ytr = transform(cacs[train_idx], lt)
    params = init_model(net_cfg, _seed(cfg, args, "init"))
    fitted, history = train(list(zip(xtr, ytr)), tc, params)

    _atomic_write_bytes(out / "weights.cacw", weights_to_bytes(fitted))
    _atomic_write_text(out / "sidecar.json", sidecar_to_json(net_cfg, lt) + "\n")
    _atomic_write_text(out / "stats.csv", stats_to_csv(stats))
    _atomic_write_text(
        out / "history.csv",
        "epoch,train_mae\n" + "".join(f"{e + 1},{v!r}\n" for e, v in enumerate(history)),
    )
    _atomic_write_text(
        out / "split.json",
        json.dumps(
            {
                "split_seed": split_seed,
                "train_fraction": frac,
                "train_ids": [ids[i] for i in train_idx],
                "test_ids": [ids[i] for i in test_idx],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
    )
    _write_manifest(
        out,
        "train",
        args.seed if args.seed is not None else _as_int(cfg, "run", "seed"),
        {"data": str(args.data)},
        {"n": n, "n_train": int(n_train), "n_test": int(n - n_train), "final_train_mae": history[-1]},
    )
    print(f"trained {tc.epochs} epochs on {n_train} samples; final train MAE {history[-1]:.4f}")
    return 0


def _load_model_dir(model_dir):
    model_dir = Path(model_dir)
    net_cfg, lt = sidecar_from_json((model_dir / "sidecar.json").read_text())
    params = load_weights(model_dir / "weights.cacw", net_cfg)
    stats = stats_from_csv((model_dir / "stats.csv").read_text())
    return params, net_cfg, lt, stats


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    pp_cfg = _preprocess_config(cfg)
    params, _, lt, stats = _load_model_dir(args.model)
    ids, crops, cacs, _ = _load_preprocessed(args.data, pp_cfg)

    if args.split == "internal":
        split_path = Path(args.model) / "split.json"
        if not split_path.exists():
            raise InvalidConfigError("--split internal needs split.json in the model directory")
        keep = set(json.loads(split_path.read_text())["test_ids"])
        sel = [i for i, sid in enumerate(ids) if sid in keep]
        missing = keep - {ids[i] for i in sel}
        if missing:
            raise InvalidConfigError(f"test ids missing from the dataset: {sorted(missing)[:5]}")
    else:
        sel = list(range(len(ids)))
    if not sel:
        raise EmptyCohortError("evaluation set is empty")

    x = [standardize(crops[i], stats) for i in sel]
    scores = predict(params, x)
    samples = [
        ScoredSample(score=float(scores[j]), truth_cac=float(cacs[i]), id=ids[i])
        for j, i in enumerate(sel)
    ]
    truth_th = _as_float(cfg, "evaluate", "truth_threshold")
    threshold = transform_threshold(truth_th, lt)
    auc = roc_auc(samples, truth_th)
    ci_lo, ci_hi = auc_confidence_interval(
        samples,
        truth_th,
        level=_as_float(cfg, "evaluate", "confidence_level"),
        n_resamples=_as_int(cfg, "evaluate", "bootstrap_resamples"),
        seed=_seed(cfg, args, "bootstrap"),
    )
    counts = confusion_at_threshold(samples, threshold, truth_th)
    diag = diagnostic_metrics(counts)
    grid = _as_tuple(cfg, "evaluate", "rauc_grid", float)
    report = {
        "n": len(samples),
        "truth_threshold": truth_th,
        "decision_threshold_transformed": threshold.transformed,
        "auc": auc,
        "auc_ci_low": ci_lo,
        "auc_ci_high": ci_hi,
        "rauc": rauc(samples, grid),
        "confusion": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        **diag,
    }
    _atomic_write_text(out / "report.json", json.dumps(report, sort_keys=True, indent=2) + "\n")
    _atomic_write_text(
        out / "pr_curve.csv",
        "recall,precision\n" + "".join(f"{r!r},{p!r}\n" for r, p in pr_curve(samples, truth_th)),
    )
    edges = _as_tuple(cfg, "evaluate", "calibration_edges", float)
    cal_rows = calibration_table(samples, lt, edges)
    _atomic_write_text(
        out / "calibration.csv",
        "stratum,count,mean_true_cac,mean_predicted_cac\n"
        + "".join(
            f"\"{r.stratum}\",{r.count},{r.mean_true_cac!r},{r.mean_predicted_cac!r}\n" for r in cal_rows
        ),
    )
    _write_manifest(
        out,
        "evaluate",
        args.seed if args.seed is not None else _as_int(cfg, "run", "seed"),
        {"data": str(args.data), "model": str(args.model), "split": args.split},
        {"n": len(samples)},
    )
    print(f"AUC {auc:.4f} (95% CI {ci_lo:.4f}-{ci_hi:.4f}) on {len(samples)} samples")
    return 0


def cmd_crossval(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    pp_cfg = _preprocess_config(cfg)
    net_cfg = _net_config(cfg)
    tc = _train_config(cfg, args)
    _, crops, cacs, _ = _load_preprocessed(args.data, pp_cfg)
    k = args.folds if args.folds is not None else _as_int(cfg, "crossval", "folds")
    report = cross_validate(
        crops,
        cacs,
        net_cfg,
        tc,
        k=k,
        seed=_seed(cfg, args, "folds"),
        truth_threshold=_as_float(cfg, "evaluate", "truth_threshold"),
        rauc_grid=_as_tuple(cfg, "evaluate", "rauc_grid", float),
    )
    _atomic_write_text(out / "crossval.csv", crossval_to_csv(report))
    _atomic_write_text(out / "crossval.json", crossval_to_json(report) + "\n")
    _write_manifest(
        out,
        "crossval",
        args.seed if args.seed is not None else _as_int(cfg, "run", "seed"),
        {"data": str(args.data), "folds": k},
        {"mean": report.mean},
    )
    mean = report.mean
    print(
        f"{k}-fold mean: accuracy {mean['accuracy']:.3f}, "
        f"balanced {mean['balanced_accuracy']:.3f}, rauc {mean['rauc']:.3f}"
    )
    return 0


def cmd_survival(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    cohort_path = Path(args.cohort)
    if cohort_path.is_dir():
        cohort_path = cohort_path / "cohort.csv"
    records = cohort_from_csv(cohort_path.read_text())
    group_cov = cfg["survival"]["group"]
    adjust_cov = cfg["survival"]["adjust"]
    horizon = _as_float(cfg, "survival", "horizon_years")
    for r in records:
        if group_cov not in r.covariates:
            raise InvalidConfigError(f"subject {r.id} lacks covariate {group_cov!r}")
    zero = [r for r in records if r.covariates[group_cov] <= 0]
    positive = [r for r in records if r.covariates[group_cov] > 0]
    km_zero = kaplan_meier(zero)
    km_pos = kaplan_meier(positive)
    lr = log_rank(zero, positive)
    cox_uni = cox_fit(records, [group_cov])
    cox_bi = cox_fit(records, [group_cov, adjust_cov])
    _atomic_write_text(out / "km_group0.csv", km_to_csv(km_zero))
    _atomic_write_text(out / "km_group1.csv", km_to_csv(km_pos))
    _atomic_write_text(out / "cox_univariate.json", cox_to_json(cox_uni) + "\n")
    _atomic_write_text(out / "cox_bivariate.json", cox_to_json(cox_bi) + "\n")
    summary = {
        "group_covariate": group_cov,
        "adjust_covariate": adjust_cov,
        "n_group0": len(zero),
        "n_group1": len(positive),
        "horizon_years": horizon,
        "event_rate_group0": km_event_estimate(km_zero, horizon),
        "event_rate_group1": km_event_estimate(km_pos, horizon),
        "log_rank_chi2": lr.chi2,
        "log_rank_p": lr.p_value,
        "hazard_ratio": cox_uni.covariates[0].hazard_ratio,
        "hazard_ratio_ci": [cox_uni.covariates[0].ci_low, cox_uni.covariates[0].ci_high],
        "adjusted_hazard_ratio": cox_bi.covariates[0].hazard_ratio,
    }
    _atomic_write_text(out / "survival.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    _write_manifest(
        out,
        "survival",
        args.seed if args.seed is not None else _as_int(cfg, "run", "seed"),
        {"cohort": str(args.cohort)},
        {"n": len(records)},
    )
    print(
        f"log-rank chi2 {lr.chi2:.3f} (p {lr.p_value:.4g}); "
        f"HR {summary['hazard_ratio']:.3f}, adjusted {summary['adjusted_hazard_ratio']:.3f}"
    )
    return 0


def cmd_explain(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args, cfg)
    pp_cfg = _preprocess_config(cfg)
    params, _, _, stats = _load_model_dir(args.model)
    ids, crops, _, _ = _load_preprocessed(args.data, pp_cfg)
    if args.ids:
        wanted = [s.strip() for s in args.ids.split(",") if s.strip()]
        index = {sid: i for i, sid in enumerate(ids)}
        missing = [w for w in wanted if w not in index]
        if missing:
            raise InvalidConfigError(f"ids not in the dataset: {missing[:5]}")
        sel = [index[w] for w in wanted]
    else:
        sel = list(range(min(len(ids), args.limit)))
    written = []
    for i in sel:
        x = standardize(crops[i], stats)
        sal = gradcam(params, x)
        map_path, overlay_path = export_saliency(sal, x, out, ids[i])
        written.append(map_path.name)
        written.append(overlay_path.name)
    _write_manifest(
        out,
        "explain",
        args.seed if args.seed is not None else _as_int(cfg, "run", "seed"),
        {"data": str(args.data), "model": str(args.model)},
        {"files": written},
    )
    print(f"wrote {len(written)} saliency files for {len(sel)} images to {out}")
    return 0


# --- wiring --------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cacxray",
        description="Coronary calcium scoring from chest radiographs (synthetic-data workflow)",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI settings file merged over the defaults")
        p.add_argument("--seed", type=int, help="master seed overriding [run] seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic DICOM dataset with a cohort file")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the regressor on a dataset directory")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (images/ + cohort.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="diagnostic-accuracy report for a trained model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="directory produced by train")
    p.add_argument("--split", choices=("internal", "all"), default="internal")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="k-fold cross-validation with per-fold refitting")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("survival", help="Kaplan-Meier, log-rank and Cox analysis of a cohort")
    common(p)
    p.add_argument("--cohort", required=True, help="cohort.csv or a dataset directory")
    p.set_defaults(func=cmd_survival)

    p = sub.add_parser("explain", help="saliency maps for dataset images")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ids", help="comma-separated image ids (default: first --limit)")
    p.add_argument("--limit", type=int, default=8)
    p.set_defaults(func=cmd_explain)
    return parser


_CONFIG_ERRORS = (InvalidConfigError,)
_TRAINING_ERRORS = (TrainingFailedError, EmptyDatasetError)
_IO_ERRORS = (
    OSError,
    MalformedFileError,
    UnsupportedTransferSyntaxError,
    MissingRequiredTagError,
    UnsupportedPhotometricError,
    BadMagicError,
    TruncatedFileError,
    ShapeMismatchError,
)
_DATA_ERRORS = (
    DegenerateDatasetError,
    DegenerateLabelsError,
    NegativeScoreError,
    OneClassOnlyError,
    NoPositivesError,
    AllGridDegenerateError,
    TooFewSamplesError,
    EmptyCohortError,
    NoEventsError,
    ConstantCovariateError,
    DivergedError,
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _TRAINING_ERRORS as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except _IO_ERRORS as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return 5
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except CacXrayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
