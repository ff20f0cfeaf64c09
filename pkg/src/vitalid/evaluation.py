"""Stratified cross-validation and the identification metric suite:
accuracy, confusion matrix, per-class F1, one-vs-rest ROC curves with
per-class and macro-averaged AUC."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierSpec, LabeledDataset, train
from .classifiers.base import _spec_to_dict
from .errors import InputError, TrainingError


@dataclass
class FoldAssignment:
    fold_of: np.ndarray  # int64[N]
    k: int
    seed: int


@dataclass
class EvalReport:
    class_set: list
    confusion: np.ndarray  # int64[Ncls][Ncls], rows = true
    accuracy: float
    f1: np.ndarray  # float64[Ncls]
    macro_f1: float
    auc: np.ndarray  # float64[Ncls]; NaN when undefined
    macro_auc: float
    roc_points: list  # per class: (fpr array, tpr array); None when undefined
    macro_roc: tuple  # (fpr array, tpr array)
    folds: FoldAssignment
    spec: ClassifierSpec
    f1_degenerate: tuple[int, ...] = ()
    auc_excluded: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "class_set": [str(c) for c in self.class_set],
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "f1": self.f1.tolist(),
            "macro_f1": self.macro_f1,
            "auc": [a if np.isfinite(a) else None for a in self.auc.tolist()],
            "macro_auc": self.macro_auc,
            "folds": {
                "k": self.folds.k,
                "seed": self.folds.seed,
                "fold_of": self.folds.fold_of.tolist(),
            },
            "spec": _spec_to_dict(self.spec),
            "f1_degenerate": list(self.f1_degenerate),
            "auc_excluded": list(self.auc_excluded),
            "extra": self.extra,
        }


def stratified_folds(y, k: int, seed: int) -> FoldAssignment:
    """Per class: seeded shuffle, then round-robin deal into k folds."""
    y = np.asarray(y)
    if k < 2:
        raise InputError("need at least 2 folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    fold_of = np.full(y.shape[0], -1, dtype=np.int64)
    for cls in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise InputError(
                "class %r has %d members, fewer than k = %d" % (cls, idx.size, k)
            )
        perm = rng.permutation(idx.size)
        fold_of[idx[perm]] = np.arange(idx.size) % k
    return FoldAssignment(fold_of=fold_of, k=k, seed=seed)


def confusion_and_f1(true_idx, pred_idx, n_classes: int):
    """Confusion (rows = true), per-class F1 with the zero convention,
    macro F1, and the indices where the convention fired."""
    true_idx = np.asarray(true_idx, dtype=np.int64)
    pred_idx = np.asarray(pred_idx, dtype=np.int64)
    if true_idx.shape != pred_idx.shape:
        raise InputError("true/predicted lengths differ")
    if true_idx.min(initial=0) < 0 or pred_idx.min(initial=0) < 0:
        raise InputError("negative class index")
    if max(true_idx.max(initial=0), pred_idx.max(initial=0)) >= n_classes:
        raise InputError("class index out of range")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true_idx, pred_idx), 1)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    degenerate = []
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        denom = support[c] + predicted[c]
        if denom == 0.0:
            degenerate.append(c)  # never true, never predicted
            continue
        f1[c] = 2.0 * tp[c] / denom
    return confusion, f1, float(f1.mean()), tuple(degenerate)


def _roc_curve(scores: np.ndarray, positive: np.ndarray):
    """Threshold sweep with ties grouped; returns (fpr, tpr) step points."""
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_pos = positive[order].astype(np.float64)
    sorted_scores = scores[order]
    tp_cum = np.cumsum(sorted_pos)
    fp_cum = np.cumsum(1.0 - sorted_pos)
    # Keep only the last index of each tied score group.
    last = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    keep = np.concatenate([last, [scores.size - 1]])
    tpr = np.concatenate([[0.0], tp_cum[keep] / n_pos])
    fpr = np.concatenate([[0.0], fp_cum[keep] / n_neg])
    return fpr, tpr


def roc_auc_ovr(scores: np.ndarray, true_idx: np.ndarray, n_classes: int):
    """One-vs-rest ROC per class plus macro average.

    Returns (roc_points, auc, macro_auc, macro_roc, excluded) where
    excluded lists classes absent from the truth (AUC undefined).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise InputError("scores contain non-finite values")
    true_idx = np.asarray(true_idx, dtype=np.int64)
    roc_points = []
    auc = np.full(n_classes, np.nan)
    excluded = []
    for c in range(n_classes):
        curve = _roc_curve(scores[:, c], true_idx == c)
        if curve is None:
            roc_points.append(None)
            excluded.append(c)
            continue
        fpr, tpr = curve
        roc_points.append((fpr, tpr))
        auc[c] = float(np.trapezoid(tpr, fpr))
    valid = [c for c in range(n_classes) if c not in excluded]
    if not valid:
        raise InputError("no class present in the truth labels")
    macro_auc = float(np.mean([auc[c] for c in valid]))
    grid = np.unique(np.concatenate([roc_points[c][0] for c in valid]))
    mean_tpr = np.zeros_like(grid)
    for c in valid:
        fpr, tpr = roc_points[c]
        mean_tpr += np.interp(grid, fpr, tpr)
    mean_tpr /= len(valid)
    return roc_points, auc, macro_auc, (grid, mean_tpr), tuple(excluded)


def cross_validate(
    x,
    y,
    spec: ClassifierSpec,
    k: int,
    seed: int,
    meta=None,
    class_set=None,
) -> EvalReport:
    """Stratified k-fold CV with per-fold normalization; predictions are
    pooled over all folds into a single report."""
    data = LabeledDataset(x=x, y=y, meta=meta, class_set=class_set)
    folds = stratified_folds(data.y, k, seed)
    n_classes = len(data.class_set)
    y_idx = data.class_indices()
    pred_idx = np.full(data.n, -1, dtype=np.int64)
    scores = np.zeros((data.n, n_classes))
    lookup = {c: i for i, c in enumerate(data.class_set)}
    for fold in range(k):
        test_mask = folds.fold_of == fold
        sub = LabeledDataset(
            x=data.x[~test_mask],
            y=data.y[~test_mask],
            class_set=list(data.class_set),
        )
        try:
            model = train(sub, spec, seed=np.random.SeedSequence([seed, fold]))
        except TrainingError as err:
            raise TrainingError("fold %d: %s" % (fold, err)) from err
        labels, fold_scores = model.predict(data.x[test_mask])
        pred_idx[test_mask] = [lookup[v] for v in labels.tolist()]
        scores[test_mask] = fold_scores
    confusion, f1, macro_f1, f1_degenerate = confusion_and_f1(y_idx, pred_idx, n_classes)
    roc_points, auc, macro_auc, macro_roc, excluded = roc_auc_ovr(
        scores, y_idx, n_classes
    )
    accuracy = float(np.trace(confusion)) / data.n
    return EvalReport(
        class_set=list(data.class_set),
        confusion=confusion,
        accuracy=accuracy,
        f1=f1,
        macro_f1=macro_f1,
        auc=auc,
        macro_auc=macro_auc,
        roc_points=roc_points,
        macro_roc=macro_roc,
        folds=folds,
        spec=spec,
        f1_degenerate=f1_degenerate,
        auc_excluded=excluded,
    )


def session_split_eval(x, y, meta, spec: ClassifierSpec, session_id: str, seed: int = 0):
    """Single split: hold out one recording session, train on the rest.

    Described by the study as an alternative protocol; not used by the
    acceptance suite.
    """
    if meta is None:
        raise InputError("session split needs segment metadata")
    sessions = np.array([m.session_id for m in meta])
    test_mask = sessions == session_id
    if not test_mask.any():
        raise InputError("no segments in session %r" % session_id)
    if test_mask.all():
        raise InputError("holdout session covers the whole dataset")
    data = LabeledDataset(x=x, y=y, meta=meta)
    sub = LabeledDataset(
        x=data.x[~test_mask], y=data.y[~test_mask], class_set=list(data.class_set)
    )
    model = train(sub, spec, seed=np.random.SeedSequence([seed, 0]))
    labels, scores = model.predict(data.x[test_mask])
    accuracy = float(np.mean(labels == data.y[test_mask]))
    return accuracy, labels, scores


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def write_report_files(
    report: EvalReport, out_dir: str, method_id: str, header_lines=()
) -> dict:
    """Emit JSON report, confusion CSV, and ROC CSV named by method ID."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report_%s.json" % method_id),
        "confusion": os.path.join(out_dir, "confusion_%s.csv" % method_id),
        "roc": os.path.join(out_dir, "roc_%s.csv" % method_id),
    }
    doc = report.to_json_dict()
    doc["method_id"] = method_id
    doc["header"] = list(header_lines)
    with open(paths["report"], "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    with open(paths["confusion"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for line in header_lines:
            fh.write("# %s\n" % line)
        writer.writerow(["true\\pred"] + [str(c) for c in report.class_set])
        for c, row in zip(report.class_set, report.confusion):
            writer.writerow([str(c)] + [int(v) for v in row])
    with open(paths["roc"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for line in header_lines:
            fh.write("# %s\n" % line)
        writer.writerow(["class", "fpr", "tpr"])
        for c, points in zip(report.class_set, report.roc_points):
            if points is None:
                continue
            for fpr, tpr in zip(*points):
                writer.writerow([str(c), repr(float(fpr)), repr(float(tpr))])
        for fpr, tpr in zip(*report.macro_roc):
            writer.writerow(["macro", repr(float(fpr)), repr(float(tpr))])
    return paths
