"""Hyperparameter grid search on training data only.

Cells are scored by mean stratified-CV accuracy; ties go to the simpler
model (linear before gaussian kernel, smaller C/gamma, fewer neighbors,
fewer hidden units)."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from .base import ClassifierSpec, LabeledDataset

KNN_K_GRID = (1, 2, 3, 5, 9, 14, 28, 50, 100, 200, 300)
KNN_DISTANCES = ("euclidean", "cityblock", "cosine")
SVM_C_GRID = (0.1, 1.0, 10.0, 100.0)
SVM_GAMMA_GRID = (0.01, 0.1, None, 1.0, 10.0)  # None = 1/D
MLP_SIZE_GRID = ((32,), (64,), (32, 16))
MLP_ACTIVATIONS = ("relu", "sigmoid")


def default_grid(kind: str) -> list[ClassifierSpec]:
    if kind == "svm":
        cells = [ClassifierSpec(kind="svm", svm_kernel="linear", svm_c=c) for c in SVM_C_GRID]
        cells += [
            ClassifierSpec(kind="svm", svm_kernel="gaussian", svm_c=c, svm_gamma=g)
            for c in SVM_C_GRID
            for g in SVM_GAMMA_GRID
        ]
        return cells
    if kind == "knn":
        return [
            ClassifierSpec(kind="knn", knn_k=k, knn_distance=d)
            for d in KNN_DISTANCES
            for k in KNN_K_GRID
        ]
    if kind == "mlp":
        return [
            ClassifierSpec(kind="mlp", mlp_sizes=s, mlp_activation=a)
            for s in MLP_SIZE_GRID
            for a in MLP_ACTIVATIONS
        ]
    raise InputError("unknown classifier kind %r" % kind)


def _complexity(spec: ClassifierSpec, dim: int):
    if spec.kind == "svm":
        gamma = spec.svm_gamma if spec.svm_gamma is not None else 1.0 / dim
        return (0 if spec.svm_kernel == "linear" else 1, spec.svm_c, gamma)
    if spec.kind == "knn":
        return (spec.knn_k, KNN_DISTANCES.index(spec.knn_distance))
    return (
        sum(spec.mlp_sizes),
        len(spec.mlp_sizes),
        MLP_ACTIVATIONS.index(spec.mlp_activation),
    )


def grid_search(
    data: LabeledDataset,
    kind: str,
    grid: list[ClassifierSpec] | None = None,
    cv_folds: int = 3,
    seed: int = 0,
):
    """Returns (best spec, table).  The table lists per-cell fold accuracies;
    cells unusable at this data size (e.g. k > train fold) get NaNs."""
    from ..evaluation import stratified_folds
    from . import train

    if grid is None:
        grid = default_grid(kind)
    if not grid:
        raise InputError("empty grid")
    for spec in grid:
        if spec.kind != kind:
            raise InputError("grid cell kind %r does not match %r" % (spec.kind, kind))
    folds = stratified_folds(data.y, cv_folds, seed)
    table = []
    for cell_idx, spec in enumerate(grid):
        accs = []
        usable = True
        for fold in range(cv_folds):
            train_mask = folds.fold_of != fold
            sub = LabeledDataset(
                x=data.x[train_mask],
                y=data.y[train_mask],
                class_set=list(data.class_set),
            )
            try:
                model = train(
                    sub, spec, seed=np.random.SeedSequence([seed, cell_idx, fold])
                )
            except InputError:
                usable = False
                break
            labels, _ = model.predict(data.x[~train_mask])
            accs.append(float(np.mean(labels == data.y[~train_mask])))
        table.append(
            {
                "spec": spec,
                "fold_acc": accs if usable else [float("nan")] * cv_folds,
                "mean_acc": float(np.mean(accs)) if usable else float("nan"),
            }
        )
    scored = [row for row in table if np.isfinite(row["mean_acc"])]
    if not scored:
        raise InputError("no grid cell usable at this data size")
    best_acc = max(row["mean_acc"] for row in scored)
    candidates = [row["spec"] for row in scored if row["mean_acc"] == best_acc]
    best = min(candidates, key=lambda s: _complexity(s, data.dim))
    return best, table
