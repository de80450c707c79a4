"""RBF-kernel SVM, score fusion and repeated stratified cross-validation.

Sign convention: a positive decision score means ``classes_[1]``. With the
labels ``"female"``/``"male"`` (sorted) that makes male positive, and a
fused score of exactly 0 resolves to ``classes_[0]`` (female).
"""

from __future__ import annotations

import csv
import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import LayoutMismatch, LengthMismatch, SingleClass, TooFewSamples

_TAU = 1e-12


def rbf_kernel(a, b, gamma) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def smo(K, y, C=1.0, tol=1e-3, max_iter=1_000_000):
    """Solve the C-SVM dual by sequential pairwise optimisation.

    Working pairs use maximal-violating-pair selection with second-order
    gain for the second index. Returns ``(alpha, rho, n_iter)`` where the
    decision function is ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    y = np.asarray(y, np.float64)
    Q = K * np.outer(y, y)
    qd = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        yg = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        gmax = yg[i]
        if gmax - yg[low].min() < tol:
            break
        b = gmax - yg
        cand = low & (b > 0)
        a = qd[i] + qd - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, _TAU)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))
        it += 1

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(qd[i] + qd[j] + 2 * Q[i, j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(qd[i] + qd[j] - 2 * Q[i, j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Q[i] * (ni - ai) + Q[j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj

    yg = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_ub = alpha >= C
        ub_set = (at_ub & (y < 0)) | (~at_ub & (y > 0))
        lb_set = (at_ub & (y > 0)) | (~at_ub & (y < 0))
        ub = yg[ub_set].min() if ub_set.any() else np.inf
        lb = yg[lb_set].max() if lb_set.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub + lb) else float(ub if np.isfinite(ub) else lb)
    return alpha, rho, it


class RBFSVC(ClassifierMixin, BaseEstimator):
    """Binary C-SVM with an RBF kernel, trained by SMO.

    Parameters
    ----------
    C : float
        Box constraint.
    gamma : float or "auto"
        Kernel width; ``"auto"`` means ``1 / n_features``.
    tol : float
        KKT violation tolerance.
    max_iter : int
        Cap on pair updates.

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
    support_ : ndarray
        Indices of the support vectors in the training set.
    support_vectors_ : ndarray
    dual_coef_ : ndarray
        ``alpha_i * y_i`` for each support vector.
    intercept_ : float
    n_iter_ : int
    """

    def __init__(self, C=1.0, gamma="auto", tol=1e-3, max_iter=1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise SingleClass(f"need exactly two classes, got {len(self.classes_)}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        self.n_features_in_ = X.shape[1]
        self.gamma_ = 1.0 / X.shape[1] if self.gamma == "auto" else float(self.gamma)
        ys = np.where(y == self.classes_[1], 1.0, -1.0)
        K = rbf_kernel(X, X, self.gamma_)
        alpha, rho, self.n_iter_ = smo(K, ys, self.C, self.tol, self.max_iter)
        self.support_ = np.flatnonzero(alpha > 0)
        self.support_vectors_ = X[self.support_]
        self.dual_coef_ = (alpha * ys)[self.support_]
        self.intercept_ = -rho
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise LayoutMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if len(self.support_) == 0:
            return np.full(len(X), self.intercept_)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


# ---------------------------------------------------------------------------
# fusion

def check_weights(weights, n_cues=None) -> np.ndarray:
    w = np.asarray(weights, np.float64).ravel()
    if n_cues is not None and len(w) != n_cues:
        raise LengthMismatch(f"{len(w)} weights for {n_cues} cues")
    if (w < 0).any() or not np.isclose(w.sum(), 1.0):
        raise ValueError("fusion weights must be non-negative and sum to 1")
    return w


def fuse(scores, weights):
    """``sum_i w_i tanh(s_i)``; returns ``(positive, fused)`` with ties negative.

    ``scores`` may be ``(n_cues,)`` or ``(n_samples, n_cues)``.
    """
    s = np.asarray(scores, np.float64)
    w = check_weights(weights)
    if s.shape[-1] != len(w):
        raise LengthMismatch(f"{s.shape[-1]} scores for {len(w)} weights")
    fused = np.tanh(s) @ w
    return fused > 0, fused


# ---------------------------------------------------------------------------
# cross-validation

def _stats(values) -> dict:
    v = np.asarray(values, float)
    return {"mean": float(v.mean()), "std": float(v.std())}


def cross_validate(cues: dict, y, weights=None, repetitions=5, folds=5, seed=0, C=1.0,
                   gamma="auto") -> dict:
    """Repeated stratified k-fold accuracy of each cue and of their fusion.

    ``cues`` maps a name to either an ``(n, d)`` feature matrix (an SVM is
    trained per fold) or an ``(n,)`` vector of external scores (used as is,
    positive meaning the larger label).
    """
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) != 2:
        raise SingleClass("need exactly two classes")
    names = list(cues)
    if not names:
        raise ValueError("no cues given")
    weights = check_weights(np.full(len(names), 1 / len(names)) if weights is None else weights,
                            len(names))
    arrays = {k: np.asarray(v, np.float64) for k, v in cues.items()}
    for k, a in arrays.items():
        if len(a) != len(y):
            raise LengthMismatch(f"cue {k!r} has {len(a)} rows for {len(y)} labels")
    counts = np.array([(y == c).sum() for c in classes])
    if counts.min() < folds:
        raise TooFewSamples(f"smallest class has {counts.min()} samples, need {folds}")
    pos = y == classes[1]

    acc = {k: [] for k in names + ["fused"]}
    for rep in range(repetitions):
        skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed + rep)
        for train, test in skf.split(np.zeros(len(y)), y):
            scores = np.empty((len(test), len(names)))
            for c, k in enumerate(names):
                a = arrays[k]
                if a.ndim == 1:
                    scores[:, c] = a[test]
                else:
                    clf = RBFSVC(C=C, gamma=gamma).fit(a[train], y[train])
                    scores[:, c] = clf.decision_function(a[test])
                acc[k].append(float(((scores[:, c] > 0) == pos[test]).mean()))
            fused_pos, _ = fuse(scores, weights)
            acc["fused"].append(float((fused_pos == pos[test]).mean()))
    return {"cues": names, "weights": weights.tolist(), "repetitions": repetitions,
            "folds": folds, "seed": seed, "runs": repetitions * folds,
            "accuracy": {k: _stats(v) for k, v in acc.items()}}


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True) + "\n"


def _rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if len(row) >= 2]


def read_labels(path) -> dict[str, str]:
    """CSV rows of ``sample_id,label``; a first row of ``id,label`` is skipped."""
    rows = _rows(path)
    if rows and rows[0][1].strip().lower() == "label":
        rows = rows[1:]
    return {r[0]: r[1].strip() for r in rows}


def read_scores(path) -> dict[str, float]:
    """External cue scores: CSV rows of ``sample_id,score`` (a header row is skipped)."""
    out = {}
    for row in _rows(path):
        try:
            out[row[0]] = float(row[1])
        except ValueError:
            continue
    return out
