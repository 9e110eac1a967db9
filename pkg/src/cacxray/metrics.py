"""Diagnostic accuracy metrics and k-fold cross-validation.

Scores live in transformed (network output) space, truth in raw calcium-score
space; ranking metrics only care that the score is monotone in the prediction.
AUC is the exact Mann-Whitney statistic with tie correction (ties count half).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    AllGridDegenerateError,
    NoPositivesError,
    OneClassOnlyError,
    TooFewSamplesError,
)
from .labels import (
    LabelTransform,
    TransformedThreshold,
    classify,
    fit_label_transform,
    inverse_transform,
    transform,
    transform_threshold,
)
from .model import init_model, predict, train
from .preprocess import compute_dataset_stats, standardize


@dataclass(frozen=True)
class ScoredSample:
    """One evaluated subject: model score, true calcium score, identifier."""

    score: float
    truth_cac: float
    id: str = ""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _scores_labels(samples, truth_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray([s.score for s in samples], dtype=np.float64)
    truth = np.asarray([s.truth_cac for s in samples], dtype=np.float64)
    return scores, truth > truth_threshold


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    n = x.size
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sx[1:] != sx[:-1]
    group = np.cumsum(boundary) - 1
    counts = np.bincount(group)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg = starts + (counts + 1) / 2.0  # mean of ranks start+1 .. start+count
    ranks = np.empty(n)
    ranks[order] = avg[group]
    return ranks


def _auc(scores: np.ndarray, labels: np.ndarray) -> float:
    npos = int(labels.sum())
    nneg = labels.size - npos
    if npos == 0 or nneg == 0:
        raise OneClassOnlyError(f"need both classes, got {npos} positives of {labels.size}")
    ranks = _average_ranks(scores)
    return float((ranks[labels].sum() - npos * (npos + 1) / 2.0) / (npos * nneg))


def roc_auc(samples, truth_threshold: float = 0.0) -> float:
    """Probability a positive outranks a negative, ties counting one half.
    Positives are samples with truth_cac strictly above truth_threshold."""
    scores, labels = _scores_labels(samples, truth_threshold)
    return _auc(scores, labels)


def auc_confidence_interval(
    samples,
    truth_threshold: float = 0.0,
    level: float = 0.95,
    n_resamples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Seeded percentile-bootstrap interval for roc_auc.

    Resamples subjects with replacement; draws that lose one truth class are
    rejected and redrawn.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    scores, labels = _scores_labels(samples, truth_threshold)
    _auc(scores, labels)  # validates both classes present
    rng = np.random.default_rng(seed)
    n = scores.size
    aucs = np.empty(n_resamples)
    got = 0
    rejected = 0
    while got < n_resamples:
        idx = rng.integers(0, n, n)
        lab = labels[idx]
        if lab.all() or not lab.any():
            rejected += 1
            if rejected > 1000 * max(n_resamples, 1):
                raise OneClassOnlyError("bootstrap resamples keep losing a class")
            continue
        aucs[got] = _auc(scores[idx], lab)
        got += 1
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(aucs, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def confusion_at_threshold(
    samples, threshold: TransformedThreshold, truth_threshold: float = 0.0
) -> ConfusionCounts:
    """Strict-> decision rule on scores, strict-> truth rule on calcium."""
    tp = fp = tn = fn = 0
    for s in samples:
        pred = classify(s.score, threshold)
        actual = s.truth_cac > truth_threshold
        if pred and actual:
            tp += 1
        elif pred:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def diagnostic_metrics(c: ConfusionCounts) -> dict[str, float | None]:
    """Sensitivity, specificity, PPV, NPV, accuracy, balanced accuracy.
    Ratios with a zero denominator come back as None."""

    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    sens = ratio(c.tp, c.tp + c.fn)
    spec = ratio(c.tn, c.tn + c.fp)
    return {
        "sensitivity": sens,
        "specificity": spec,
        "ppv": ratio(c.tp, c.tp + c.fp),
        "npv": ratio(c.tn, c.tn + c.fn),
        "accuracy": ratio(c.tp + c.tn, c.total),
        "balanced_accuracy": None if sens is None or spec is None else (sens + spec) / 2.0,
    }


def pr_curve(samples, truth_threshold: float = 0.0) -> list[tuple[float, float]]:
    """(recall, precision) points swept over the distinct scores descending,
    with an inclusive decision rule (predict positive when score >= cutoff)."""
    scores, labels = _scores_labels(samples, truth_threshold)
    p = int(labels.sum())
    if p == 0:
        raise NoPositivesError("precision-recall needs at least one positive")
    points = []
    for t in np.unique(scores)[::-1]:
        pred = scores >= t
        tp = int((pred & labels).sum())
        points.append((tp / p, tp / int(pred.sum())))
    return points


def rauc(samples, truth_grid=(0.0, 100.0, 400.0)) -> float:
    """Mean roc_auc over a grid of truth thresholds; grid points that leave a
    single truth class are skipped, and an all-degenerate grid is an error."""
    aucs = []
    for t in truth_grid:
        try:
            aucs.append(roc_auc(samples, t))
        except OneClassOnlyError:
            continue
    if not aucs:
        raise AllGridDegenerateError(f"no usable threshold in grid {tuple(truth_grid)}")
    return float(np.mean(aucs))


@dataclass(frozen=True)
class CalibrationRow:
    stratum: str
    count: int
    mean_true_cac: float
    mean_predicted_cac: float


def calibration_table(samples, lt: LabelTransform, edges=(0.0, 100.0, 400.0)) -> list[CalibrationRow]:
    """Mean predicted vs mean true calcium score per truth stratum.

    Strata are [e0, e1), [e1, e2), ..., [e_last, inf); empty strata are
    omitted, so counts sum to the number of samples.
    """
    e = [float(x) for x in edges]
    if sorted(e) != e or len(set(e)) != len(e):
        raise ValueError("edges must be strictly increasing")
    scores, _ = _scores_labels(samples, 0.0)
    truth = np.asarray([s.truth_cac for s in samples], dtype=np.float64)
    if np.any(truth < e[0]):
        raise ValueError(f"truth value below the first edge {e[0]}")
    pred_cac = np.asarray(inverse_transform(scores, lt))
    idx = np.clip(np.searchsorted(e, truth, side="right") - 1, 0, len(e) - 1)
    rows = []
    for b in range(len(e)):
        mask = idx == b
        if not mask.any():
            continue
        label = f"[{e[b]:g}, {e[b + 1]:g})" if b + 1 < len(e) else f"[{e[b]:g}, inf)"
        rows.append(
            CalibrationRow(
                stratum=label,
                count=int(mask.sum()),
                mean_true_cac=float(truth[mask].mean()),
                mean_predicted_cac=float(pred_cac[mask].mean()),
            )
        )
    return rows


# --- cross-validation ---------------------------------------------------------


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Shuffled near-equal partition: k disjoint index arrays covering
    range(n), sizes differing by at most one."""
    if k < 2:
        raise ValueError("need at least two folds")
    if n < k:
        raise TooFewSamplesError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(perm[start : start + size])
        start += size
    return folds


@dataclass(frozen=True)
class FoldReport:
    fold: int
    accuracy: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    rauc: float


@dataclass(frozen=True)
class CrossValReport:
    folds: tuple[FoldReport, ...]
    mean: dict[str, float]


_CSV_COLUMNS = ("fold", "accuracy", "balanced_accuracy", "sensitivity", "specificity", "rauc")


def crossval_to_csv(report: CrossValReport) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for fr in report.folds:
        lines.append(",".join([str(fr.fold)] + [repr(getattr(fr, c)) for c in _CSV_COLUMNS[1:]]))
    lines.append(",".join(["Mean"] + [repr(report.mean[c]) for c in _CSV_COLUMNS[1:]]))
    return "\n".join(lines) + "\n"


def crossval_to_json(report: CrossValReport) -> str:
    return json.dumps(
        {"folds": [asdict(fr) for fr in report.folds], "mean": report.mean},
        sort_keys=True,
        indent=2,
    )


def _default_train_fn(train_images, train_targets, net_cfg, train_cfg):
    params = init_model(net_cfg, train_cfg.seed)
    fitted, _ = train(list(zip(train_images, train_targets)), train_cfg, params)
    return lambda imgs: predict(fitted, imgs)


def cross_validate(
    images,
    cacs,
    net_cfg,
    train_cfg,
    k: int = 5,
    seed: int = 0,
    truth_threshold: float = 0.0,
    rauc_grid=(0.0, 100.0, 400.0),
    clip_max: float = 2000.0,
    epsilon: float = 1e-5,
    train_fn=None,
) -> CrossValReport:
    """k-fold cross-validation with per-fold refitting.

    ``images`` are pre-standardization crops; every fold recomputes pixel
    statistics and the label transform on its own training portion only, so
    nothing fitted ever sees a test subject. ``train_fn(images, targets,
    net_cfg, train_cfg) -> predictor`` defaults to training the network from a
    fresh seeded init.
    """
    cacs = np.asarray(cacs, dtype=np.float64)
    n = len(images)
    if n != cacs.size:
        raise ValueError("images and cacs disagree in length")
    if train_fn is None:
        train_fn = _default_train_fn
    folds = kfold_split(n, k, seed)
    reports = []
    for f, test_idx in enumerate(folds):
        train_idx = np.concatenate([folds[j] for j in range(k) if j != f])
        stats = compute_dataset_stats([images[i] for i in train_idx])
        lt = fit_label_transform(cacs[train_idx], clip_max=clip_max, epsilon=epsilon)
        xtr = [standardize(images[i], stats) for i in train_idx]
        ytr = transform(cacs[train_idx], lt)
        predictor = train_fn(xtr, ytr, net_cfg, train_cfg)
        xte = [standardize(images[i], stats) for i in test_idx]
        preds = np.asarray(predictor(xte), dtype=np.float64)
        th = transform_threshold(truth_threshold, lt)
        samples = [
            ScoredSample(score=float(preds[j]), truth_cac=float(cacs[i]), id=str(i))
            for j, i in enumerate(test_idx)
        ]
        counts = confusion_at_threshold(samples, th, truth_threshold)
        m = diagnostic_metrics(counts)
        if m["sensitivity"] is None or m["specificity"] is None:
            raise OneClassOnlyError(f"fold {f + 1} holds a single truth class")
        reports.append(
            FoldReport(
                fold=f + 1,
                accuracy=m["accuracy"],
                balanced_accuracy=m["balanced_accuracy"],
                sensitivity=m["sensitivity"],
                specificity=m["specificity"],
                rauc=rauc(samples, rauc_grid),
            )
        )
    mean = {
        c: float(np.mean([getattr(fr, c) for fr in reports])) for c in _CSV_COLUMNS[1:]
    }
    return CrossValReport(folds=tuple(reports), mean=mean)
