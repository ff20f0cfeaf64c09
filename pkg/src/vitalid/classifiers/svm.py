"""Soft-margin SVM trained by sequential minimal optimization.

One binary subproblem per class (one-vs-rest) sharing a single precomputed
kernel matrix.  With exactly two classes a single binary problem is solved
and the two class scores are exact negatives of each other.

Each SMO iteration updates the most-violating feasible pair, picking the
partner index by the largest second-order objective gain.  The stopping
rule is the violation gap itself, so the returned multipliers satisfy the
KKT conditions within tolerance by construction.  Selection is pure argmax
over numpy arrays (ties resolve to the lowest index), so training is
bit-reproducible.
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

KKT_TOL = 1e-3
MIN_STEPS = 20_000  # iteration cap is max(MIN_STEPS, 100 n)
_ALPHA_EPS = 1e-10  # support-vector cutoff


def _kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return a @ b.T
    if kernel == "gaussian":
        sq = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise InputError("unknown kernel %r" % kernel)


def _smo_binary(
    kmat: np.ndarray, y: np.ndarray, c: float, tol: float = KKT_TOL,
    max_steps: int | None = None,
):
    """Solve one binary soft-margin dual.  Returns (alpha, bias, steps).

    Maintains f_i = sum_j alpha_j y_j K_ij; feasibility splits indices into
    an "up" set (alpha_i y_i may increase) and a "low" set (may decrease),
    and the dual is optimal once max_up (y - f) <= min_low (y - f) + tol.
    The bias is the midpoint of that final interval, which bounds every
    per-point KKT residual by half the closing gap.
    """
    n = y.size
    alpha = np.zeros(n)
    f = np.zeros(n)
    diag = np.diag(kmat).copy()
    pos = y > 0
    idx = np.arange(n)
    if max_steps is None:
        max_steps = max(MIN_STEPS, 100 * n)
    # Paired clipping can leave a multiplier an ulp short of its bound;
    # membership must treat such points as bound, or they get reselected
    # forever with no headroom.
    bnd = 1e-9 * c
    steps = 0
    while True:
        opt = y - f
        up = (pos & (alpha < c - bnd)) | (~pos & (alpha > bnd))
        low = (~pos & (alpha < c - bnd)) | (pos & (alpha > bnd))
        m_up = np.max(opt[up], initial=-np.inf)
        m_low = np.min(opt[low], initial=np.inf)
        if m_up - m_low <= tol:
            break
        if steps >= max_steps:
            raise TrainingError(
                "SMO did not converge in %d steps (gap %.3g)"
                % (steps, m_up - m_low)
            )
        i = int(idx[up][np.argmax(opt[up])])
        js = idx[low & (opt < m_up)]
        gap = m_up - opt[js]
        curv = np.maximum(diag[i] + diag[js] - 2.0 * kmat[i, js], 1e-12)
        j = int(js[np.argmax(gap * gap / curv)])
        y1, y2 = y[i], y[j]
        a1o, a2o = alpha[i], alpha[j]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1o + a2o - c), min(c, a1o + a2o)
        else:
            lo, hi = max(0.0, a2o - a1o), min(c, c + a2o - a1o)
        e1me2 = opt[j] - opt[i]  # (f_i - y_i) - (f_j - y_j)
        eta = diag[i] + diag[j] - 2.0 * kmat[i, j]
        if eta > 1e-15:
            a2 = min(max(a2o + y2 * e1me2 / eta, lo), hi)
        else:
            # Flat pair objective: step lands on the improving box end.
            a2 = hi if y2 * e1me2 > 0 else lo
        if abs(a2 - a2o) <= 1e-14 * c:
            raise TrainingError(
                "SMO stalled at violation gap %.3g after %d steps"
                % (m_up - m_low, steps)
            )
        a1 = a1o + s * (a2o - a2)
        if a1 < 0.0:
            a2 += s * a1
            a1 = 0.0
        elif a1 > c:
            a2 += s * (a1 - c)
            a1 = c
        f += (y1 * (a1 - a1o)) * kmat[i] + (y2 * (a2 - a2o)) * kmat[j]
        alpha[i] = a1
        alpha[j] = a2
        steps += 1
    # Exact decision values for the bias (incremental f accumulates rounding).
    f = kmat @ (alpha * y)
    opt = y - f
    up = (pos & (alpha < c - bnd)) | (~pos & (alpha > bnd))
    low = (~pos & (alpha < c - bnd)) | (pos & (alpha > bnd))
    if up.any() and low.any():
        bias = 0.5 * (np.max(opt[up]) + np.min(opt[low]))
    elif up.any():
        bias = float(np.max(opt[up]))
    else:
        bias = float(np.min(opt[low]))
    return alpha, bias, steps


@dataclass
class SvmBinary:
    coef: np.ndarray  # alpha_i * y_i over support vectors
    support: np.ndarray  # normalized support vector rows
    bias: float
    kkt_residual: float
    steps: int


@dataclass
class SvmModel:
    binaries: list  # one per class; a single entry when two_class
    kernel: str
    gamma: float
    c: float
    two_class: bool

    def scores(self, xn: np.ndarray) -> np.ndarray:
        cols = []
        for binary in self.binaries:
            ktest = _kernel_matrix(xn, binary.support, self.kernel, self.gamma)
            cols.append(ktest @ binary.coef + binary.bias)
        if self.two_class:
            margin = cols[0]
            return np.stack([margin, -margin], axis=1)
        return np.stack(cols, axis=1)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "gamma": self.gamma,
            "c": self.c,
            "two_class": self.two_class,
            "binaries": [
                {
                    "coef": b.coef.tolist(),
                    "support": b.support.tolist(),
                    "bias": b.bias,
                    "kkt_residual": b.kkt_residual,
                    "steps": b.steps,
                }
                for b in self.binaries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        binaries = [
            SvmBinary(
                coef=np.asarray(b["coef"], dtype=np.float64),
                support=np.asarray(b["support"], dtype=np.float64),
                bias=float(b["bias"]),
                kkt_residual=float(b["kkt_residual"]),
                steps=int(b["steps"]),
            )
            for b in d["binaries"]
        ]
        return cls(
            binaries=binaries,
            kernel=d["kernel"],
            gamma=float(d["gamma"]),
            c=float(d["c"]),
            two_class=bool(d["two_class"]),
        )


def _kkt_residual(kmat, y, alpha, bias, c):
    u = kmat @ (alpha * y) + bias
    r = y * u - 1.0
    at_zero = alpha <= _ALPHA_EPS
    at_c = alpha >= c - _ALPHA_EPS
    interior = ~(at_zero | at_c)
    v = np.zeros_like(r)
    v[at_zero] = np.maximum(0.0, -r[at_zero])
    v[at_c] = np.maximum(0.0, r[at_c])
    v[interior] = np.abs(r[interior])
    return float(v.max(initial=0.0))


def train_svm(data: LabeledDataset, spec: ClassifierSpec) -> TrainedModel:
    """One-vs-rest SVM per the given spec (kernel, C, gamma)."""
    classes = list(data.class_set)
    if len(classes) < 2:
        raise InputError("SVM needs at least 2 classes")
    norm = fit_normalizer(data.x)
    xn = apply_normalizer(norm, data.x)
    gamma = spec.svm_gamma if spec.svm_gamma is not None else 1.0 / data.dim
    kmat = _kernel_matrix(xn, xn, spec.svm_kernel, gamma)
    y_idx = data.class_indices()
    two_class = len(classes) == 2
    targets = [0] if two_class else range(len(classes))
    binaries = []
    for target in targets:
        y_signed = np.where(y_idx == target, 1.0, -1.0)
        alpha, bias, steps = _smo_binary(kmat, y_signed, spec.svm_c)
        residual = _kkt_residual(kmat, y_signed, alpha, bias, spec.svm_c)
        sv = alpha > _ALPHA_EPS
        binaries.append(
            SvmBinary(
                coef=(alpha * y_signed)[sv],
                support=xn[sv],
                bias=float(bias),
                kkt_residual=residual,
                steps=steps,
            )
        )
    inner = SvmModel(
        binaries=binaries,
        kernel=spec.svm_kernel,
        gamma=float(gamma),
        c=float(spec.svm_c),
        two_class=two_class,
    )
    return TrainedModel(
        kind="svm", classes=classes, normalizer=norm, spec=spec, inner=inner
    )
