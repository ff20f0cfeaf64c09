"""k-nearest-neighbor classifier over the normalized training set.

Scores are vote fractions.  Label ties are broken by the smallest summed
distance of the tied class's voting neighbors, then by class order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .base import (
    ClassifierSpec,
    LabeledDataset,
    TrainedModel,
    apply_normalizer,
    fit_normalizer,
)

_CHUNK_ELEMENTS = 2_000_000  # cap on broadcast temporaries


def _distances(test: np.ndarray, train: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        sq = (
            np.sum(test * test, axis=1)[:, None]
            + np.sum(train * train, axis=1)[None, :]
            - 2.0 * (test @ train.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)
    if metric == "cityblock":
        out = np.empty((test.shape[0], train.shape[0]))
        step = max(1, _CHUNK_ELEMENTS // (train.shape[0] * train.shape[1]))
        for lo in range(0, test.shape[0], step):
            hi = lo + step
            out[lo:hi] = np.abs(test[lo:hi, None, :] - train[None, :, :]).sum(axis=2)
        return out
    if metric == "cosine":
        tn = np.linalg.norm(test, axis=1)
        rn = np.linalg.norm(train, axis=1)
        tn = np.where(tn == 0.0, 1e-300, tn)
        rn = np.where(rn == 0.0, 1e-300, rn)
        sim = (test @ train.T) / tn[:, None] / rn[None, :]
        return 1.0 - sim
    raise InputError("unknown distance %r" % metric)


@dataclass
class KnnModel:
    train_x: np.ndarray  # normalized
    train_y: np.ndarray  # class indices
    n_classes: int
    k: int
    distance: str

    def _votes(self, xn: np.ndarray):
        dist = _distances(xn, self.train_x, self.distance)
        # Stable sort: equal distances resolve by training index, so
        # results do not depend on any partial-sort implementation.
        order = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        rows = np.arange(xn.shape[0])[:, None]
        near_y = self.train_y[order]
        near_d = dist[rows, order]
        votes = np.zeros((xn.shape[0], self.n_classes))
        sums = np.zeros((xn.shape[0], self.n_classes))
        for c in range(self.n_classes):
            mask = near_y == c
            votes[:, c] = mask.sum(axis=1)
            sums[:, c] = np.where(mask, near_d, 0.0).sum(axis=1)
        return votes, sums

    def scores(self, xn: np.ndarray) -> np.ndarray:
        votes, _ = self._votes(xn)
        return votes / self.k

    def scores_and_pick(self, xn: np.ndarray):
        votes, sums = self._votes(xn)
        best = votes.max(axis=1, keepdims=True)
        tied = votes == best
        # Among vote-tied classes prefer the smallest cumulative distance;
        # argmax resolves any remaining tie by class order.
        keyed = np.where(tied, -sums, -np.inf)
        return np.argmax(keyed, axis=1), votes / self.k

    def to_dict(self) -> dict:
        return {
            "train_x": self.train_x.tolist(),
            "train_y": self.train_y.tolist(),
            "n_classes": self.n_classes,
            "k": self.k,
            "distance": self.distance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        return cls(
            train_x=np.asarray(d["train_x"], dtype=np.float64),
            train_y=np.asarray(d["train_y"], dtype=np.int64),
            n_classes=int(d["n_classes"]),
            k=int(d["k"]),
            distance=d["distance"],
        )


def train_knn(data: LabeledDataset, spec: ClassifierSpec) -> TrainedModel:
    if spec.knn_k > data.n:
        raise InputError("k = %d exceeds training size %d" % (spec.knn_k, data.n))
    norm = fit_normalizer(data.x)
    inner = KnnModel(
        train_x=apply_normalizer(norm, data.x),
        train_y=data.class_indices(),
        n_classes=len(data.class_set),
        k=spec.knn_k,
        distance=spec.knn_distance,
    )
    return TrainedModel(
        kind="knn",
        classes=list(data.class_set),
        normalizer=norm,
        spec=spec,
        inner=inner,
    )
