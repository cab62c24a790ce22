"""Kernel SVM trained by sequential minimal optimization, one-vs-one multiclass.

The binary solver works on the dual

    min_a  1/2 a^T Q a - sum(a)   s.t.  0 <= a_i <= C,  y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j)

picking the maximal-violating pair with second-order working-set selection
(Fan, Chen & Lin 2005) and stopping once the violation m(a) - M(a) drops
below ``tol``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

TAU = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message} ({diagnostics})")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Kernel:
    """``rbf`` with bandwidth ``gamma`` or ``poly`` computing (x.x' + 1)^degree."""

    name: str
    degree: int | None = None
    gamma: float | None = None

    @classmethod
    def from_setting(cls, setting, X=None) -> "Kernel":
        """Grid value ``"rbf"`` or an integer polynomial degree."""
        if isinstance(setting, str) and setting.lower() == "rbf":
            return cls("rbf", gamma=scale_gamma(X) if X is not None else 1.0)
        return cls("poly", degree=int(setting))

    def __call__(self, A, B) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if self.name == "rbf":
            sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        if self.name == "poly":
            return (A @ B.T + 1.0) ** self.degree
        raise ValueError(f"unknown kernel {self.name!r}")

    def describe(self) -> str:
        return f"rbf(gamma={self.gamma:.6g})" if self.name == "rbf" else f"poly({self.degree})"


def scale_gamma(X) -> float:
    """1 / (n_features * Var(X)); falls back to 1 for constant data."""
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    n_iter: int
    violation: float


def dual_objective(alpha, K, y) -> float:
    """Dual value sum(a) - 1/2 a^T Q a (to be maximized)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _violation(alpha, G, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    minus_yg = -y * G
    m = minus_yg[up].max() if up.any() else -np.inf
    M = minus_yg[low].min() if low.any() else np.inf
    return m, M, up, low, minus_yg


def smo(K, y, C: float, tol: float = 1e-3, max_iter: int | None = None) -> SmoResult:
    """Solve the binary dual for labels ``y`` in {-1, +1}."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if max_iter is None:
        max_iter = max(100_000, 200 * n)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    it = 0
    while True:
        m, M, up, low, minus_yg = _violation(alpha, G, y, C)
        if m - M < tol:
            break
        if it >= max_iter:
            raise ConvergenceError("SMO did not converge", {
                "iterations": it, "violation": float(m - M), "tol": tol, "C": C, "n": n})
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        # Second-order choice of j among violating members of I_low.
        cand = low & (minus_yg < m)
        b = m - minus_yg[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])

        Ki, Kj = K[i], K[j]
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] - 2.0 * Ki[j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Ki[j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        d_i, d_j = alpha[i] - old_i, alpha[j] - old_j
        G += y * (Ki * (y[i] * d_i) + Kj * (y[j] * d_j))
        it += 1

    return SmoResult(alpha, _rho(alpha, G, y, C), it, float(m - M))


def _rho(alpha, G, y, C) -> float:
    yg = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    # No free vectors: rho is only bracketed, take the midpoint.
    ub = yg[up].min() if up.any() else np.inf
    lb = yg[low].max() if low.any() else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return float((ub + lb) / 2.0)


def kkt_violation(alpha, K, y, C) -> float:
    """Maximal KKT violation m(a) - M(a) of a dual point (<= 0 means optimal)."""
    G = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    m, M, *_ = _violation(np.asarray(alpha, float), G, np.asarray(y, float), C)
    return float(m - M)


@dataclass
class BinarySvm:
    positive: int
    negative: int
    support: np.ndarray          # indices into the training set
    support_vectors: np.ndarray
    dual_coef: np.ndarray        # alpha_i * y_i
    bias: float                  # -rho
    n_iter: int = 0
    violation: float = 0.0

    def decision(self, K_sv_x: np.ndarray) -> np.ndarray:
        return self.dual_coef @ K_sv_x + self.bias


@dataclass
class SvmModel:
    C: float
    kernel: Kernel
    n_features: int
    classes: tuple[int, ...]
    machines: list[BinarySvm] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def decision_function(self, X) -> np.ndarray:
        """Pairwise decision values, one column per class pair."""
        X = self._check(X)
        out = np.empty((X.shape[0], len(self.machines)))
        for c, mach in enumerate(self.machines):
            out[:, c] = mach.decision(self.kernel(mach.support_vectors, X))
        return out

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        if len(self.classes) == 1:
            return np.full(X.shape[0], self.classes[0], dtype=np.int64)
        votes = np.zeros((X.shape[0], 3), dtype=np.int64)
        dec = self.decision_function(X)
        rows = np.arange(X.shape[0])
        for c, mach in enumerate(self.machines):
            winner = np.where(dec[:, c] > 0, mach.positive, mach.negative)
            np.add.at(votes, (rows, winner), 1)
        # argmax returns the first maximum, i.e. ties go to the lowest class code.
        return np.argmax(votes, axis=1)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X


def train_svm(X, y, C: float = 1.0, kernel="rbf", tol: float = 1e-3,
              max_iter: int | None = None) -> SvmModel:
    """One-vs-one SMO training. ``kernel`` is ``"rbf"``, a degree, or a :class:`Kernel`."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("X and y must be non-empty with matching rows")
    kern = kernel if isinstance(kernel, Kernel) else Kernel.from_setting(kernel, X)
    classes = tuple(int(c) for c in np.unique(y))
    model = SvmModel(C, kern, X.shape[1], classes,
                     meta={"kernel": kern.describe(), "tol": tol, "multiclass": "ovo"})
    if len(classes) == 1:
        return model
    for pos, neg in combinations(classes, 2):
        idx = np.flatnonzero((y == pos) | (y == neg))
        yy = np.where(y[idx] == pos, 1.0, -1.0)
        K = kern(X[idx], X[idx])
        res = smo(K, yy, C, tol=tol, max_iter=max_iter)
        sv = np.flatnonzero(res.alpha > 0)
        model.machines.append(BinarySvm(
            pos, neg, idx[sv], X[idx[sv]], res.alpha[sv] * yy[sv], -res.rho,
            res.n_iter, res.violation))
    return model
