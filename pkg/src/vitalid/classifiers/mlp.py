"""Multilayer perceptron with softmax output and cross-entropy loss.

Plain mini-batch gradient descent with a fixed, documented schedule:
batch 32, learning rate 1e-3 halved every 100 epochs, at most 400 epochs,
early stop after 50 epochs without training-loss improvement (the weights
of the best epoch are kept).  All randomness comes from a seeded PCG64
generator, so training is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, TrainingError
from .base import (
    ClassifierSpec,
    LabeledDataset,
    TrainedModel,
    apply_normalizer,
    fit_normalizer,
)

BATCH_SIZE = 32
LEARNING_RATE = 1e-3
LR_DECAY = 0.5
LR_DECAY_EVERY = 100  # epochs
MAX_EPOCHS = 400
PATIENCE = 50  # epochs without improvement
DIVERGENCE_LOSS = 1e6


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise InputError("unknown activation %r" % activation)


def _activate_grad(a: np.ndarray, activation: str) -> np.ndarray:
    # Expressed via the activation output a.
    if activation == "relu":
        return (a > 0.0).astype(np.float64)
    return a * (1.0 - a)


def init_mlp(dims: list[int], activation: str, seed) -> tuple[list, list]:
    """He (relu) or Xavier (sigmoid) initialized weights; zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt((2.0 if activation == "relu" else 1.0) / fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, x, activation):
    acts = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        acts.append(_activate(acts[-1] @ w + b, activation))
    logits = acts[-1] @ weights[-1] + biases[-1]
    return acts, logits


def mlp_loss_and_grads(weights, biases, x, y_idx, activation):
    """Mean cross-entropy over the batch and its analytic gradients."""
    n = x.shape[0]
    acts, logits = _forward(weights, biases, x, activation)
    probs = softmax(logits)
    eps = np.finfo(np.float64).tiny
    loss = -float(np.mean(np.log(probs[np.arange(n), y_idx] + eps)))
    delta = probs.copy()
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * _activate_grad(
                acts[layer], activation
            )
    return loss, grad_w, grad_b


@dataclass
class MlpModel:
    weights: list
    biases: list
    activation: str

    def scores(self, xn: np.ndarray) -> np.ndarray:
        _, logits = _forward(self.weights, self.biases, xn, self.activation)
        return softmax(logits)

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(
            weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
            activation=d["activation"],
        )


def train_mlp(data: LabeledDataset, spec: ClassifierSpec, seed=0) -> TrainedModel:
    classes = list(data.class_set)
    if len(classes) < 2:
        raise InputError("MLP needs at least 2 classes")
    norm = fit_normalizer(data.x)
    xn = apply_normalizer(norm, data.x)
    y_idx = data.class_indices()
    dims = [data.dim, *spec.mlp_sizes, len(classes)]
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = init_mlp(dims, spec.mlp_activation, rng.integers(2**63))
    best_loss = np.inf
    best = None
    stale = 0
    for epoch in range(MAX_EPOCHS):
        lr = LEARNING_RATE * LR_DECAY ** (epoch // LR_DECAY_EVERY)
        order = rng.permutation(data.n)
        for lo in range(0, data.n, BATCH_SIZE):
            sel = order[lo : lo + BATCH_SIZE]
            _, gw, gb = mlp_loss_and_grads(
                weights, biases, xn[sel], y_idx[sel], spec.mlp_activation
            )
            for layer in range(len(weights)):
                weights[layer] -= lr * gw[layer]
                biases[layer] -= lr * gb[layer]
        loss, _, _ = mlp_loss_and_grads(weights, biases, xn, y_idx, spec.mlp_activation)
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            raise TrainingError("MLP diverged at epoch %d (loss %.3g)" % (epoch, loss))
        if loss < best_loss - 1e-12:
            best_loss = loss
            best = ([w.copy() for w in weights], [b.copy() for b in biases])
            stale = 0
        else:
            stale += 1
            if stale >= PATIENCE:
                break
    weights, biases = best if best is not None else (weights, biases)
    inner = MlpModel(weights=weights, biases=biases, activation=spec.mlp_activation)
    return TrainedModel(
        kind="mlp", classes=classes, normalizer=norm, spec=spec, inner=inner
    )
