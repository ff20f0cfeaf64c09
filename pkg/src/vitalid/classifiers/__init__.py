"""From-scratch classifiers: soft-margin SVM (SMO), k-NN, and MLP,
with one-vs-rest multi-class handling, z-score normalization, grid search,
and JSON model serialization."""

from .base import (
    LabeledDataset,
    Normalizer,
    ClassifierSpec,
    TrainedModel,
    fit_normalizer,
    apply_normalizer,
    predict,
    save_model,
    load_model,
    method_spec,
    METHOD_IDS,
)
from .svm import train_svm
from .knn import train_knn
from .mlp import train_mlp, mlp_loss_and_grads, init_mlp, softmax
from .grid import grid_search, default_grid

__all__ = [
    "LabeledDataset",
    "Normalizer",
    "ClassifierSpec",
    "TrainedModel",
    "fit_normalizer",
    "apply_normalizer",
    "predict",
    "save_model",
    "load_model",
    "method_spec",
    "METHOD_IDS",
    "train_svm",
    "train_knn",
    "train_mlp",
    "mlp_loss_and_grads",
    "init_mlp",
    "softmax",
    "grid_search",
    "default_grid",
    "train",
]


def train(data, spec, seed=0):
    """Dispatch to the trainer matching spec.kind."""
    if spec.kind == "svm":
        return train_svm(data, spec)
    if spec.kind == "knn":
        return train_knn(data, spec)
    if spec.kind == "mlp":
        return train_mlp(data, spec, seed=seed)
    raise ValueError("unknown classifier kind %r" % spec.kind)
