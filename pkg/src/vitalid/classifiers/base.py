"""Shared classifier plumbing: datasets, normalization, specs, prediction,
and model serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import InputError

MODEL_FORMAT = "vitalid-model/1"

# Method grid of the identification study: feature kind x classifier kind.
METHOD_IDS = {
    "A1": ("resp", "svm"),
    "A2": ("resp", "knn"),
    "A3": ("resp", "mlp"),
    "B1": ("hb", "svm"),
    "B2": ("hb", "knn"),
    "B3": ("hb", "mlp"),
    "C1": ("prop", "svm"),
    "C2": ("prop", "knn"),
    "C3": ("prop", "mlp"),
}


@dataclass
class LabeledDataset:
    """Feature matrix with labels.  The pipeline produces D in {24, 48, 72}
    (respiratory, heartbeat, combined); the classifiers accept any D."""

    x: np.ndarray  # float64[N][D]
    y: np.ndarray  # label[N]
    meta: list | None = None
    class_set: list = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise InputError("x must be (N, D) with one label per row")
        if not np.all(np.isfinite(self.x)):
            raise InputError("features contain non-finite values")
        if self.class_set is None:
            self.class_set = sorted(set(self.y.tolist()))
        missing = set(self.y.tolist()) - set(self.class_set)
        if missing:
            raise InputError("labels %s missing from class_set" % sorted(missing))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def class_indices(self) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.class_set)}
        return np.array([lookup[v] for v in self.y.tolist()], dtype=np.int64)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray  # degenerate columns get std 1 (flagged)
    degenerate: tuple[int, ...] = ()


def fit_normalizer(x_train: np.ndarray) -> Normalizer:
    """Per-column z-score statistics from training rows only."""
    x = np.asarray(x_train, dtype=np.float64)
    if x.shape[0] < 2:
        raise InputError("normalizer needs at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    degenerate = tuple(int(i) for i in np.flatnonzero(std == 0.0))
    std = np.where(std == 0.0, 1.0, std)
    return Normalizer(mean=mean, std=std, degenerate=degenerate)


def apply_normalizer(norm: Normalizer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - norm.mean) / norm.std


@dataclass(frozen=True)
class ClassifierSpec:
    """Classifier choice plus hyperparameters; inactive kinds' fields are
    ignored.  Defaults follow the grid-search optima of the study."""

    kind: str  # svm | knn | mlp
    svm_kernel: str = "gaussian"  # linear | gaussian
    svm_c: float = 10.0
    svm_gamma: float | None = None  # None resolves to 1/D at train time
    knn_k: int = 9
    knn_distance: str = "euclidean"  # euclidean | cityblock | cosine
    mlp_sizes: tuple[int, ...] = (39, 19)
    mlp_activation: str = "relu"  # relu | sigmoid

    def __post_init__(self):
        if self.kind not in ("svm", "knn", "mlp"):
            raise InputError("unknown classifier kind %r" % self.kind)
        if self.kind == "svm":
            if self.svm_kernel not in ("linear", "gaussian"):
                raise InputError("kernel must be linear or gaussian")
            if self.svm_c <= 0:
                raise InputError("C must be positive")
        if self.kind == "knn":
            if not (1 <= self.knn_k <= 300):
                raise InputError("k must lie in [1, 300]")
            if self.knn_distance not in ("euclidean", "cityblock", "cosine"):
                raise InputError("unknown distance %r" % self.knn_distance)
        if self.kind == "mlp":
            sizes = tuple(self.mlp_sizes)
            object.__setattr__(self, "mlp_sizes", sizes)
            if not (1 <= len(sizes) <= 3):
                raise InputError("MLP supports 1 to 3 hidden layers")
            if any(not (1 <= s <= 300) for s in sizes):
                raise InputError("hidden sizes must lie in [1, 300]")
            if self.mlp_activation not in ("relu", "sigmoid"):
                raise InputError("activation must be relu or sigmoid")


# Grid-search optima per method (feature x classifier) from the study.
_METHOD_SPECS = {
    "A1": ClassifierSpec(kind="svm", svm_kernel="gaussian"),
    "B1": ClassifierSpec(kind="svm", svm_kernel="gaussian"),
    "C1": ClassifierSpec(kind="svm", svm_kernel="gaussian"),
    "A2": ClassifierSpec(kind="knn", knn_k=9, knn_distance="cityblock"),
    "B2": ClassifierSpec(kind="knn", knn_k=28, knn_distance="cosine"),
    "C2": ClassifierSpec(kind="knn", knn_k=28, knn_distance="cosine"),
    "A3": ClassifierSpec(kind="mlp", mlp_sizes=(39, 19)),
    "B3": ClassifierSpec(kind="mlp", mlp_sizes=(47, 49)),
    "C3": ClassifierSpec(kind="mlp", mlp_sizes=(15, 15)),
}


def method_spec(method_id: str) -> tuple[str, ClassifierSpec]:
    """(feature kind, classifier spec) for a method ID A1..C3."""
    if method_id not in METHOD_IDS:
        raise InputError("unknown method %r (expected A1..C3)" % method_id)
    feature, _ = METHOD_IDS[method_id]
    return feature, _METHOD_SPECS[method_id]


@dataclass
class TrainedModel:
    kind: str
    classes: list
    normalizer: Normalizer
    spec: ClassifierSpec
    inner: object  # kind-specific parameters

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        xn = apply_normalizer(self.normalizer, x)
        return self.inner.scores(xn)

    def predict(self, x: np.ndarray):
        return predict(self, x)


def predict(model: TrainedModel, x: np.ndarray):
    """(labels, scores) for a batch of feature rows."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    expected = model.normalizer.mean.size
    if x.shape[1] != expected:
        raise InputError(
            "feature dimension %d does not match model dimension %d"
            % (x.shape[1], expected)
        )
    xn = apply_normalizer(model.normalizer, x)
    if hasattr(model.inner, "scores_and_pick"):
        idx, scores = model.inner.scores_and_pick(xn)
    else:
        scores = model.inner.scores(xn)
        idx = np.argmax(scores, axis=1)
    labels = np.array([model.classes[i] for i in idx])
    return labels, scores


# ---------------------------------------------------------------------------
# Serialization: versioned JSON; floats survive bit-exactly via repr round
# trip (Python emits shortest-exact decimal representations).
# ---------------------------------------------------------------------------


def _spec_to_dict(spec: ClassifierSpec) -> dict:
    d = asdict(spec)
    d["mlp_sizes"] = list(spec.mlp_sizes)
    return d


def _spec_from_dict(d: dict) -> ClassifierSpec:
    d = dict(d)
    d["mlp_sizes"] = tuple(d.get("mlp_sizes", ()) or (39, 19))
    return ClassifierSpec(**d)


def save_model(model: TrainedModel, path: str) -> None:
    from .svm import SvmModel
    from .knn import KnnModel
    from .mlp import MlpModel

    if isinstance(model.inner, SvmModel):
        params = model.inner.to_dict()
    elif isinstance(model.inner, KnnModel):
        params = model.inner.to_dict()
    elif isinstance(model.inner, MlpModel):
        params = model.inner.to_dict()
    else:
        raise InputError("cannot serialize inner model %r" % type(model.inner))
    doc = {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "classes": list(model.classes),
        "normalizer": {
            "mean": model.normalizer.mean.tolist(),
            "std": model.normalizer.std.tolist(),
            "degenerate": list(model.normalizer.degenerate),
        },
        "spec": _spec_to_dict(model.spec),
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> TrainedModel:
    from .svm import SvmModel
    from .knn import KnnModel
    from .mlp import MlpModel

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise InputError("unsupported model format %r" % doc.get("format"))
    norm = Normalizer(
        mean=np.asarray(doc["normalizer"]["mean"], dtype=np.float64),
        std=np.asarray(doc["normalizer"]["std"], dtype=np.float64),
        degenerate=tuple(doc["normalizer"]["degenerate"]),
    )
    kind = doc["kind"]
    if kind == "svm":
        inner = SvmModel.from_dict(doc["params"])
    elif kind == "knn":
        inner = KnnModel.from_dict(doc["params"])
    elif kind == "mlp":
        inner = MlpModel.from_dict(doc["params"])
    else:
        raise InputError("unknown model kind %r" % kind)
    return TrainedModel(
        kind=kind,
        classes=doc["classes"],
        normalizer=norm,
        spec=_spec_from_dict(doc["spec"]),
        inner=inner,
    )
