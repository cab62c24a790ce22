"""Identity-leakage probes and 2-D projections of learned representations."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp
from sklearn.model_selection import StratifiedKFold

from .rng import child_seed, substream

PROBE_L2 = 1e-4
PROBE_GTOL = 1e-6
TSNE_MAX_POINTS = 5000
ENTROPY_TOL = 1e-5

REPRESENTATIONS = ("raw", "mlp", "nimlp")


@dataclass
class ProbeResult:
    name: str
    accuracy: float
    confusion: np.ndarray
    n_users: int
    folds: int
    converged: bool = True

    @property
    def chance(self) -> float:
        return 1.0 / self.n_users


def _probe_loss(w, X, Y, l2):
    d, k = X.shape[1], Y.shape[1]
    W = w[:d * k].reshape(d, k)
    b = w[d * k:]
    logits = X @ W + b
    lse = logsumexp(logits, axis=1, keepdims=True)
    n = X.shape[0]
    loss = -(Y * (logits - lse)).sum() / n + 0.5 * l2 * (W * W).sum()
    P = np.exp(logits - lse)
    D = (P - Y) / n
    grad = np.concatenate([(X.T @ D + l2 * W).ravel(), D.sum(axis=0)])
    return loss, grad


def fit_multinomial_logreg(X, y, n_classes: int, l2: float = PROBE_L2,
                           gtol: float = PROBE_GTOL, max_iter: int = 5000):
    """Full-batch quasi-Newton fit; returns (W, b, converged)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.eye(n_classes)[y]
    w0 = np.zeros(X.shape[1] * n_classes + n_classes)
    res = minimize(_probe_loss, w0, args=(X, Y, l2), jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "maxiter": max_iter, "maxcor": 20})
    d = X.shape[1]
    W = res.x[:d * n_classes].reshape(d, n_classes)
    b = res.x[d * n_classes:]
    grad_norm = np.abs(res.jac).max() if res.jac is not None else np.inf
    return W, b, bool(grad_norm < gtol or res.success)


def train_identity_probe(reps, ids, folds: int = 5, seed: int = 0, name: str = "",
                         l2: float = PROBE_L2) -> ProbeResult:
    """Stratified k-fold accuracy of a linear multinomial identity classifier.

    Features are standardized with training-fold statistics. When some user
    has fewer than ``folds`` samples the fold count shrinks to match.
    """
    reps = np.asarray(reps, dtype=np.float64)
    users, codes = np.unique(np.asarray(ids), return_inverse=True)
    n_users = len(users)
    if n_users < 2:
        raise ValueError("identity probe needs at least two users")
    if reps.shape[0] < n_users:
        raise ValueError(f"identity probe needs N >= U ({reps.shape[0]} < {n_users})")
    k = min(folds, int(np.bincount(codes).min()))
    if k < 2:
        raise ValueError("every user needs at least two samples for cross-validation")
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=child_seed(seed, "probe"))
    confusion = np.zeros((n_users, n_users), dtype=np.int64)
    converged = True
    for tr, te in splitter.split(reps, codes):
        mu = reps[tr].mean(axis=0)
        sd = reps[tr].std(axis=0)
        sd[sd == 0] = 1.0
        W, b, ok = fit_multinomial_logreg((reps[tr] - mu) / sd, codes[tr], n_users, l2)
        converged &= ok
        pred = np.argmax(((reps[te] - mu) / sd) @ W + b, axis=1)
        np.add.at(confusion, (codes[te], pred), 1)
    if not converged:
        warnings.warn(f"identity probe {name!r}: optimizer stopped before gradient tolerance")
    acc = float(np.trace(confusion) / confusion.sum())
    return ProbeResult(name, acc, confusion, n_users, k, converged)


@dataclass
class Projection2D:
    coords: np.ndarray
    method: str
    perplexity: float | None
    seed: int
    kl: float | None = None
    entropy_error: float | None = None


def _cond_probs(D: np.ndarray, perplexity: float, tol: float = ENTROPY_TOL, max_tries: int = 200):
    """Row-conditional affinities with per-row precision found by bisection."""
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    worst = 0.0
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_tries):
            w = np.exp(-beta * d)
            sw = w.sum()
            H = np.log(sw) + beta * (d * w).sum() / sw
            diff = H - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        worst = max(worst, abs(diff))
        P[i, np.arange(n) != i] = w / sw
    return P, worst


def _tsne(X, perplexity, seed, n_iter=1000, lr=200.0, exaggeration=12.0, exag_iters=250):
    n = X.shape[0]
    sq = (X * X).sum(1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    Pc, worst = _cond_probs(D, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    rng = substream(seed, "probe", 2)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(n_iter):
        exag = exaggeration if it < exag_iters else 1.0
        momentum = 0.5 if it < exag_iters else 0.8
        sy = (Y * Y).sum(1)
        num = 1.0 / (1.0 + sy[:, None] + sy[None, :] - 2.0 * Y @ Y.T)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (np.diag(W.sum(1)) - W) @ Y
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - lr * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    kl = float((P * np.log(P / Q)).sum())
    return Y, kl, worst


def project_2d(reps, method: str = "tsne", perplexity: float = 30.0, seed: int = 0) -> Projection2D:
    X = np.asarray(reps, dtype=np.float64)
    n = X.shape[0]
    if method == "pca":
        Xc = X - X.mean(axis=0)
        U, S, _ = np.linalg.svd(Xc, full_matrices=False)
        coords = np.zeros((n, 2))
        r = min(2, len(S))
        coords[:, :r] = U[:, :r] * S[:r]
        return Projection2D(coords, "pca", None, seed)
    if method != "tsne":
        raise ValueError(f"unknown projection method {method!r}")
    if n > TSNE_MAX_POINTS:
        raise ValueError(f"exact t-SNE is limited to {TSNE_MAX_POINTS} points; use method='pca'")
    if not perplexity < n / 3.0:
        raise ValueError(f"perplexity {perplexity} must be below N/3 = {n / 3:.2f}")
    if np.ptp(X, axis=0).max(initial=0.0) == 0.0:
        raise ValueError("all points are identical; t-SNE affinities are degenerate")
    Y, kl, worst = _tsne(X, perplexity, seed)
    if not np.all(np.isfinite(Y)) or not np.isfinite(kl):
        raise FloatingPointError("t-SNE produced non-finite output")
    return Projection2D(Y, "tsne", perplexity, seed, kl, worst)


@dataclass
class AuditInput:
    """Audit material for one modality: raw features plus the two trained models."""

    X: np.ndarray
    ids: np.ndarray
    base: object
    nimlp: object | None = None


@dataclass
class AuditTable:
    results: dict = field(default_factory=dict)   # (representation, modality) -> ProbeResult
    projections: dict = field(default_factory=dict)  # (representation, modality) -> Projection2D
    ids: dict = field(default_factory=dict)          # modality -> ids of projected rows

    def accuracy(self, representation: str, modality: str) -> float:
        return self.results[(representation, modality)].accuracy

    def rows(self):
        for (rep, mod), res in self.results.items():
            yield rep, mod, res.accuracy

    def to_text(self) -> str:
        mods = sorted({m for _, m in self.results}, key=_modality_order)
        lines = ["representation," + ",".join(mods)]
        for rep in REPRESENTATIONS:
            cells = [f"{100 * self.results[(rep, m)].accuracy:.2f}" if (rep, m) in self.results
                     else "-" for m in mods]
            lines.append(rep + "," + ",".join(cells))
        return "\n".join(lines)


def _modality_order(m: str) -> int:
    return {"both": 0, "text": 1, "apps": 2}.get(m, 3)


def representations(entry: AuditInput, seed: int) -> dict[str, np.ndarray]:
    reps = {"raw": np.asarray(entry.X, dtype=np.float64), "mlp": entry.base.features(entry.X)}
    if entry.nimlp is not None:
        reps["nimlp"] = entry.nimlp.head_inputs(entry.X, entry.ids, seed)
    return reps


def audit_suite(entries: Mapping[str, AuditInput], folds: int = 5, seed: int = 0,
                project: str | None = None, perplexity: float = 30.0) -> AuditTable:
    """Probe raw / MLP / NI-MLP representations for each modality.

    With ``project`` set to ``"tsne"`` or ``"pca"``, the MLP and NI-MLP
    representations are also projected to 2-D.
    """
    table = AuditTable()
    for modality, entry in entries.items():
        ids = np.asarray(entry.ids)
        if len(np.unique(ids)) < 2:
            raise ValueError("privacy audit requires at least two users")
        for rep, Z in representations(entry, seed).items():
            table.results[(rep, modality)] = train_identity_probe(
                Z, ids, folds, seed, name=f"{rep}/{modality}")
            if project and rep != "raw":
                table.projections[(rep, modality)] = project_2d(Z, project, perplexity, seed)
        table.ids[modality] = ids
    return table


def export_audit(path: str | Path, table: AuditTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["representation", "modality", "probe_acc"])
        for rep, mod, acc in table.rows():
            w.writerow([rep, mod, f"{acc:.6f}"])


def export_projection(path: str | Path, proj: Projection2D, user_ids: Sequence) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "user_id"])
        for (x, y), u in zip(proj.coords, user_ids):
            w.writerow([f"{x:.6f}", f"{y:.6f}", u])
