"""Linear soft-margin SVM trained by dual coordinate descent.

The binary solver is a sequential-minimal-optimisation loop over pairs of
dual variables (a pair is the smallest block that respects the equality
constraint introduced by an unregularised bias).  Pairs are chosen with
second-order working-set selection, so the visiting order is fixed by the
data and the result is deterministic.  Multiclass problems use
one-vs-rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateTrainingError, DimensionError, InputError

TAU = 1e-12


@numba.njit(cache=True)
def _objective_gap(x, y, alpha, w, b, c):
    n = x.shape[0]
    hinge = 0.0
    asum = 0.0
    for i in range(n):
        m = y[i] * (np.dot(w, x[i]) + b)
        if m < 1.0:
            hinge += 1.0 - m
        asum += alpha[i]
    ww = np.dot(w, w)
    primal = 0.5 * ww + c * hinge
    dual = asum - 0.5 * ww
    return primal, primal - dual


@numba.njit(cache=True)
def _smo(x, y, c, tol, max_epochs):
    n, p = x.shape
    alpha = np.zeros(n)
    w = np.zeros(p)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    kdiag = np.empty(n)
    for i in range(n):
        kdiag[i] = np.dot(x[i], x[i])
    b = 0.0
    epochs = 0
    it = 0
    while True:
        # maximal violating pair bounds
        gmax = -np.inf
        gmin = np.inf
        i_sel = -1
        for t in range(n):
            v = -y[t] * grad[t]
            up = (y[t] > 0 and alpha[t] < c) or (y[t] < 0 and alpha[t] > 0)
            low = (y[t] < 0 and alpha[t] < c) or (y[t] > 0 and alpha[t] > 0)
            if up and v > gmax:
                gmax = v
                i_sel = t
            if low and v < gmin:
                gmin = v
        # bias from free vectors, falling back to the KKT midpoint
        nfree = 0
        sfree = 0.0
        for t in range(n):
            if 0.0 < alpha[t] < c:
                nfree += 1
                sfree += -y[t] * grad[t]
        b = sfree / nfree if nfree > 0 else 0.5 * (gmax + gmin)
        if gmax - gmin <= 1e-12 or i_sel < 0:
            break
        if it % n == 0:
            primal, gap = _objective_gap(x, y, alpha, w, b, c)
            if gap <= tol * max(1.0, abs(primal)):
                break
            if epochs >= max_epochs:
                break
            epochs += 1
        it += 1
        # second-order choice of the partner
        i = i_sel
        xi = x[i]
        j = -1
        best = np.inf
        for t in range(n):
            low = (y[t] < 0 and alpha[t] < c) or (y[t] > 0 and alpha[t] > 0)
            if not low:
                continue
            bdiff = gmax + y[t] * grad[t]
            if bdiff > 0:
                a = kdiag[i] + kdiag[t] - 2.0 * np.dot(xi, x[t])
                if a <= 0:
                    a = TAU
                score = -(bdiff * bdiff) / a
                if score < best:
                    best = score
                    j = t
        if j < 0:
            break
        xj = x[j]
        quad = kdiag[i] + kdiag[j] - 2.0 * np.dot(xi, xj)
        if quad <= 0:
            quad = TAU
        old_i = alpha[i]
        old_j = alpha[j]
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            else:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = total - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > c:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = total - c
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = (alpha[i] - old_i) * y[i]
        dj = (alpha[j] - old_j) * y[j]
        for k in range(p):
            w[k] += di * xi[k] + dj * xj[k]
        for t in range(n):
            grad[t] = y[t] * np.dot(w, x[t]) - 1.0
    return w, b, alpha, epochs


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray  # (1, p) for binary problems, (K, p) otherwise
    bias: np.ndarray
    c: float
    classes: tuple

    def __post_init__(self):
        if not self.c > 0:
            raise InputError("c must be positive")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _binary(x, y, c, tol, max_epochs):
    w, b, _, _ = _smo(x, y, float(c), float(tol), int(max_epochs))
    return w, b


def svm_train(features, labels, c: float = 1.0, tol: float = 1e-6,
              max_epochs: int = 10000) -> SvmModel:
    x = np.ascontiguousarray(features, dtype=float)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise DimensionError("features must be N x p with one label per row")
    if x.shape[0] < 2:
        raise InputError("need at least two samples")
    if not c > 0:
        raise InputError("c must be positive")
    classes = tuple(np.unique(labels).tolist())
    if len(classes) < 2:
        raise DegenerateTrainingError(f"single class {classes!r} in training labels")
    if len(classes) == 2:
        y = np.where(labels == classes[1], 1.0, -1.0)
        w, b = _binary(x, y, c, tol, max_epochs)
        weights, bias = w[None, :], np.array([b])
    else:
        rows = [_binary(x, np.where(labels == k, 1.0, -1.0), c, tol, max_epochs) for k in classes]
        weights = np.array([r[0] for r in rows])
        bias = np.array([r[1] for r in rows])
    return SvmModel(weights=weights, bias=bias, c=float(c), classes=classes)


def svm_predict(m: SvmModel, features):
    """Return ``(labels, margins)``; margins are raw decision values."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != m.n_features:
        raise DimensionError(f"expected N x {m.n_features} features, got {x.shape}")
    scores = x @ m.weights.T + m.bias
    cls = np.asarray(m.classes, dtype=object)
    if len(m.classes) == 2:
        margins = scores[:, 0]
        idx = (margins > 0).astype(int)  # exact ties go to classes[0]
    else:
        margins = scores
        idx = np.argmax(scores, axis=1)
    labels = cls[idx]
    try:
        labels = labels.astype(np.asarray(m.classes).dtype)
    except (TypeError, ValueError):
        pass
    return labels, margins
