"""Stratified folds, confusion/F1, one-vs-rest ROC, and report files."""

import csv
import json
import os

import numpy as np
import pytest

from vitalid.classifiers import ClassifierSpec
from vitalid.classifiers import mlp as mlp_mod
from vitalid.errors import InputError, TrainingError
from vitalid.evaluation import (
    confusion_and_f1,
    cross_validate,
    roc_auc_ovr,
    session_split_eval,
    stratified_folds,
    write_report_files,
)
from vitalid.io import SegmentMeta


def blob_xy(centers, n_per, sigma, seed):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for i, c in enumerate(centers):
        xs.append(rng.normal(0.0, sigma, size=(n_per, len(c))) + np.asarray(c))
        ys.extend(["s%d" % i] * n_per)
    return np.vstack(xs), np.array(ys)


# ---------------------------------------------------------------------------
# stratified folds
# ---------------------------------------------------------------------------


def test_folds_exact_balance_when_divisible():
    y = np.repeat(["a", "b", "c"], 10)
    folds = stratified_folds(y, 5, seed=0)
    assert folds.fold_of.min() >= 0
    for cls in "abc":
        counts = np.bincount(folds.fold_of[y == cls], minlength=5)
        assert np.array_equal(counts, [2, 2, 2, 2, 2])


def test_folds_near_balance_when_uneven():
    y = np.repeat(["a", "b"], 7)
    folds = stratified_folds(y, 3, seed=1)
    for cls in "ab":
        counts = np.bincount(folds.fold_of[y == cls], minlength=3)
        assert counts.sum() == 7
        assert counts.max() - counts.min() <= 1


def test_folds_deterministic_per_seed():
    y = np.repeat(["a", "b", "c"], 10)
    assert np.array_equal(stratified_folds(y, 5, 3).fold_of,
                          stratified_folds(y, 5, 3).fold_of)
    assert not np.array_equal(stratified_folds(y, 5, 3).fold_of,
                              stratified_folds(y, 5, 4).fold_of)


def test_folds_validation():
    y = np.repeat(["a", "b"], 10)
    with pytest.raises(InputError, match="2 folds"):
        stratified_folds(y, 1, seed=0)
    with pytest.raises(InputError, match="'b' has 3"):
        stratified_folds(np.array(["a"] * 10 + ["b"] * 3), 4, seed=0)


# ---------------------------------------------------------------------------
# confusion and F1
# ---------------------------------------------------------------------------


def test_confusion_and_f1_hand_case():
    confusion, f1, macro, degenerate = confusion_and_f1(
        [0, 0, 1, 1, 2, 2], [0, 0, 1, 0, 2, 2], 3)
    assert np.array_equal(confusion, [[2, 0, 0], [1, 1, 0], [0, 0, 2]])
    assert f1.tolist() == [0.8, 2 / 3, 1.0]
    assert macro == (0.8 + 2 / 3 + 1.0) / 3
    assert degenerate == ()


def test_f1_zero_convention():
    # A class absent from both truth and predictions scores 0 and is
    # flagged; a class merely never correct scores 0 without the flag.
    _, f1, macro, degenerate = confusion_and_f1([0, 0, 1], [0, 0, 1], 3)
    assert f1.tolist() == [1.0, 1.0, 0.0]
    assert macro == 2 / 3
    assert degenerate == (2,)
    _, f1, _, degenerate = confusion_and_f1([0, 0, 1], [0, 2, 1], 3)
    assert f1[2] == 0.0
    assert degenerate == ()


def test_confusion_validation():
    with pytest.raises(InputError, match="lengths differ"):
        confusion_and_f1([0, 1], [0], 2)
    with pytest.raises(InputError, match="negative"):
        confusion_and_f1([0, -1], [0, 0], 2)
    with pytest.raises(InputError, match="out of range"):
        confusion_and_f1([0, 1], [0, 2], 2)


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------


def test_auc_perfect_separation():
    scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
    _, auc, macro, _, excluded = roc_auc_ovr(scores, [0, 0, 1, 1], 2)
    assert auc.tolist() == [1.0, 1.0]
    assert macro == 1.0 and excluded == ()


def test_auc_constant_scores_give_half():
    scores = np.full((8, 2), 0.5)
    _, auc, macro, _, _ = roc_auc_ovr(scores, [0] * 4 + [1] * 4, 2)
    assert auc.tolist() == [0.5, 0.5] and macro == 0.5


def test_auc_tied_scores_match_pairwise_count():
    # One positive and one negative share score 0.5; grouping the tie
    # reproduces the rank-sum value (1 + 1 + 0.5 + 1) / 4 = 0.875.
    scores = np.array([[0.9, 0.1], [0.5, 0.5], [0.5, 0.5], [0.1, 0.9]])
    _, auc, macro, _, _ = roc_auc_ovr(scores, [0, 0, 1, 1], 2)
    assert auc.tolist() == [0.875, 0.875] and macro == 0.875


def test_auc_invariant_under_monotone_transform():
    rng = np.random.default_rng(2)
    scores = rng.normal(size=(40, 3))
    true_idx = rng.integers(0, 3, size=40)
    _, auc1, _, _, _ = roc_auc_ovr(scores, true_idx, 3)
    _, auc2, _, _, _ = roc_auc_ovr(np.exp(scores), true_idx, 3)
    assert np.array_equal(auc1, auc2)


def test_auc_excludes_absent_class():
    scores = np.array([[0.9, 0.1, 0.0], [0.8, 0.1, 0.1],
                       [0.1, 0.8, 0.1], [0.2, 0.7, 0.1]])
    roc_points, auc, macro, _, excluded = roc_auc_ovr(scores, [0, 0, 1, 1], 3)
    assert excluded == (2,)
    assert roc_points[2] is None and np.isnan(auc[2])
    assert macro == (auc[0] + auc[1]) / 2


def test_auc_requires_some_truth():
    with pytest.raises(InputError, match="no class present"):
        roc_auc_ovr(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    with pytest.raises(InputError, match="non-finite"):
        roc_auc_ovr(np.array([[np.nan, 0.0]]), [0], 2)


def test_macro_roc_consistency():
    rng = np.random.default_rng(5)
    scores = rng.normal(size=(60, 3)) + np.eye(3)[rng.integers(0, 3, 60)]
    true_idx = np.argmax(scores + rng.normal(scale=0.5, size=scores.shape), 1)
    # reshuffle truth so all classes appear
    true_idx[:3] = [0, 1, 2]
    _, auc, macro_auc, (grid, mean_tpr), _ = roc_auc_ovr(scores, true_idx, 3)
    assert grid[0] == 0.0 and grid[-1] == 1.0
    # At fpr = 0 the interpolant sits atop any vertical jump, so the
    # value is tpr(0+), not necessarily 0.
    assert 0.0 <= mean_tpr[0] <= 1.0 and mean_tpr[-1] == 1.0
    assert np.all(np.diff(grid) > 0)
    assert np.all(np.diff(mean_tpr) >= 0)
    # Interpolation lands on top of each vertical jump, so the plotted
    # macro curve can only overestimate the averaged per-class area.
    assert np.trapezoid(mean_tpr, grid) >= macro_auc - 1e-12


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


def test_cross_validate_separable_blobs():
    x, y = blob_xy([(0, 0), (4, 0), (0, 4)], 30, 0.3, 3)
    report = cross_validate(x, y, ClassifierSpec(kind="knn", knn_k=9),
                            k=5, seed=0)
    assert report.accuracy == 1.0
    assert np.array_equal(np.diag(report.confusion), [30, 30, 30])
    assert report.macro_f1 == 1.0
    assert report.macro_auc == 1.0
    assert report.class_set == ["s0", "s1", "s2"]
    for cls in ("s0", "s1", "s2"):
        counts = np.bincount(report.folds.fold_of[y == cls], minlength=5)
        assert np.array_equal(counts, [6, 6, 6, 6, 6])


def test_cross_validate_is_deterministic():
    x, y = blob_xy([(0, 0), (2, 0)], 15, 0.6, 7)
    spec = ClassifierSpec(kind="mlp", mlp_sizes=(8,))
    r1 = cross_validate(x, y, spec, k=3, seed=5)
    r2 = cross_validate(x, y, spec, k=3, seed=5)
    assert r1.accuracy == r2.accuracy
    assert np.array_equal(r1.confusion, r2.confusion)
    assert np.array_equal(r1.auc, r2.auc)


def test_cross_validate_phantom_class_flagged():
    x, y = blob_xy([(0, 0), (4, 0)], 12, 0.3, 1)
    report = cross_validate(x, y, ClassifierSpec(kind="knn", knn_k=3),
                            k=3, seed=0, class_set=["s0", "s1", "zz"])
    assert report.class_set == ["s0", "s1", "zz"]
    assert 2 in report.f1_degenerate
    assert report.auc_excluded == (2,)
    assert np.isnan(report.auc[2])


def test_cross_validate_wraps_training_failure(monkeypatch):
    monkeypatch.setattr(mlp_mod, "LEARNING_RATE", 1e12)
    x, y = blob_xy([(0, 0), (4, 0)], 10, 0.3, 2)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingError, match="fold 0:"):
            cross_validate(x, y, ClassifierSpec(kind="mlp", mlp_sizes=(8,)),
                           k=2, seed=0)


# ---------------------------------------------------------------------------
# session holdout
# ---------------------------------------------------------------------------


def _meta(session_ids):
    return [SegmentMeta(subject_id="s", session_id=s, day_index=0,
                        segment_index=i, duration=30.0)
            for i, s in enumerate(session_ids)]


def test_session_split_holds_out_one_session():
    x, y = blob_xy([(0, 0), (4, 0)], 12, 0.3, 4)
    sessions = (["d0"] * 6 + ["d1"] * 6) * 2
    acc, labels, scores = session_split_eval(
        x, y, _meta(sessions), ClassifierSpec(kind="knn", knn_k=3), "d1")
    assert acc == 1.0
    assert labels.shape == (12,) and scores.shape == (12, 2)


def test_session_split_validation():
    x, y = blob_xy([(0, 0), (4, 0)], 3, 0.3, 4)
    spec = ClassifierSpec(kind="knn", knn_k=1)
    with pytest.raises(InputError, match="metadata"):
        session_split_eval(x, y, None, spec, "d0")
    with pytest.raises(InputError, match="no segments"):
        session_split_eval(x, y, _meta(["d0"] * 6), spec, "d9")
    with pytest.raises(InputError, match="whole dataset"):
        session_split_eval(x, y, _meta(["d0"] * 6), spec, "d0")


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def test_write_report_files(tmp_path):
    x, y = blob_xy([(0, 0), (4, 0), (0, 4)], 12, 0.3, 3)
    report = cross_validate(x, y, ClassifierSpec(kind="knn", knn_k=3),
                            k=3, seed=0)
    paths = write_report_files(report, str(tmp_path), "B2",
                               header_lines=["run 1", "seed 0"])
    assert os.path.basename(paths["report"]) == "report_B2.json"
    with open(paths["report"]) as fh:
        doc = json.load(fh)
    assert doc["method_id"] == "B2"
    assert doc["accuracy"] == report.accuracy
    assert doc["confusion"] == report.confusion.tolist()
    assert doc["folds"]["fold_of"] == report.folds.fold_of.tolist()
    assert doc["header"] == ["run 1", "seed 0"]

    with open(paths["confusion"]) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "# run 1" and lines[1] == "# seed 0"
    rows = list(csv.reader(lines[2:]))
    assert rows[0] == ["true\\pred", "s0", "s1", "s2"]
    parsed = np.array([[int(v) for v in r[1:]] for r in rows[1:]])
    assert np.array_equal(parsed, report.confusion)

    with open(paths["roc"]) as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    assert rows[0] == ["class", "fpr", "tpr"]
    macro_rows = [r for r in rows[1:] if r[0] == "macro"]
    assert len(macro_rows) == report.macro_roc[0].size
    # repr round trip: parsed floats match the in-memory curve exactly
    assert [float(r[1]) for r in macro_rows] == report.macro_roc[0].tolist()
    assert [float(r[2]) for r in macro_rows] == report.macro_roc[1].tolist()
    s0_rows = [r for r in rows[1:] if r[0] == "s0"]
    assert [float(r[1]) for r in s0_rows] == report.roc_points[0][0].tolist()
