"""Noisy-identity MLP: identity selection, noisy head retraining, and sigma sweeps.

Selection phase: with the feature extractor frozen, fit a linear identity
encoder ``theta_id`` (one row per user) by minimizing

    sum_i || z_feat_i - theta_id[u(i)] ||^2 + lam * ||theta_id||_1

so that nonzero entries of ``z_id = theta_id[u]`` flag identity-dependent
dimensions of ``z_feat``.

Additive phase: train only the classification head on
``z_feat + eps * z_id`` with ``eps ~ N(0, sigma^2)`` redrawn elementwise for
every sample of every minibatch. Inference uses ``eps = 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation.metrics import macro_f1
from .models import serialize
from .models.mlp import MlpHyper, MlpModel, SoftmaxHead, train_head
from .privacy_audit import train_identity_probe
from .rng import substream


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_cd(A: np.ndarray, Z: np.ndarray, lam: float, tol: float = 1e-12,
             max_sweeps: int = 1000) -> np.ndarray:
    """Coordinate descent for ``||Z - A theta||_F^2 + lam ||theta||_1``.

    ``A`` is N x p, ``Z`` is N x d; rows of theta are updated one design
    column at a time, all outputs at once (the penalty is elementwise).
    """
    A = np.asarray(A, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    p = A.shape[1]
    theta = np.zeros((p, Z.shape[1]))
    col_sq = (A * A).sum(axis=0)
    R = Z.copy()
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = theta[j].copy()
            rho = A[:, j] @ R + col_sq[j] * old
            theta[j] = soft_threshold(rho, lam / 2.0) / col_sq[j]
            delta = theta[j] - old
            if np.any(delta):
                R -= np.outer(A[:, j], delta)
                biggest = max(biggest, float(np.abs(delta).max()))
        if biggest <= tol:
            break
    return theta


@dataclass
class IdentityEncoder:
    theta: np.ndarray      # U x dim(z_feat)
    lam: float
    counts: np.ndarray     # training samples per user

    @property
    def sparsity(self) -> float:
        return float((self.theta == 0).mean())

    def encode(self, ids) -> np.ndarray:
        return self.theta[np.asarray(ids, dtype=np.int64)]


def fit_identity_encoder(z_feats, ids, lam: float, n_users: int | None = None) -> IdentityEncoder:
    """Selection phase on frozen features; ``ids`` are roster indices."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    Z = np.asarray(z_feats, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    n_users = int(ids.max()) + 1 if n_users is None else n_users
    A = np.zeros((len(ids), n_users))
    A[np.arange(len(ids)), ids] = 1.0
    theta = lasso_cd(A, Z, lam)
    return IdentityEncoder(theta, float(lam), np.bincount(ids, minlength=n_users))


@dataclass
class NoisyHead:
    head: SoftmaxHead
    sigma: float
    seed: int

    @property
    def W(self):
        return self.head.W

    @property
    def b(self):
        return self.head.b


def train_noisy_head(base: MlpModel, encoder: IdentityEncoder, X, ids, y, sigma: float,
                     seed: int, z_feats=None) -> NoisyHead:
    """Additive phase: only the head is trained; ``base`` and ``encoder`` are read-only."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    Z = base.features(X) if z_feats is None else np.asarray(z_feats, dtype=np.float64)
    Zid = encoder.encode(ids)
    noise = substream(seed, "noise")

    def perturb(idx):
        return noise.normal(0.0, sigma, size=(len(idx), Zid.shape[1])) * Zid[idx]

    hy = base.hyper
    head = train_head(Z, y, seed, lr=hy.lr, batch_size=hy.batch_size, epochs=hy.epochs,
                      perturb=perturb)
    return NoisyHead(head, float(sigma), seed)


def retrain_head(base: MlpModel, X, y, seed: int, z_feats=None) -> SoftmaxHead:
    """Plain head retrain on frozen features, the sigma = 0 reference."""
    Z = base.features(X) if z_feats is None else z_feats
    hy = base.hyper
    return train_head(Z, y, seed, lr=hy.lr, batch_size=hy.batch_size, epochs=hy.epochs)


@dataclass
class NiMlpModel:
    base: MlpModel
    encoder: IdentityEncoder
    head: NoisyHead
    meta: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return self.head.head.predict(self.base.features(X))

    def head_inputs(self, X, ids, seed: int) -> np.ndarray:
        """One noisy draw of the head's training-time input, for auditing."""
        Z = self.base.features(X)
        Zid = self.encoder.encode(ids)
        eps = substream(seed, "probe", 1).normal(0.0, self.head.sigma, size=Z.shape)
        return Z + eps * Zid


def nimlp_predict(base: MlpModel, encoder: IdentityEncoder, head: NoisyHead, x) -> np.ndarray:
    return NiMlpModel(base, encoder, head).predict(x)


def compute_tradeoff_ratio(s_mlp: float, s_ni: float, t_mlp: float, t_ni: float) -> float:
    """Privacy gained per unit of performance lost.

    Returns ``inf`` when privacy improves at no performance cost (dominant
    point), ``-inf`` when privacy worsens without a performance cost, and 0
    when privacy is unchanged.
    """
    gain = s_mlp - s_ni
    loss = t_mlp - t_ni
    if gain == 0:
        return 0.0
    if loss <= 0:
        return math.inf if gain > 0 else -math.inf
    return gain / loss


@dataclass
class TradeoffPoint:
    sigma: float
    lam: float
    t: float     # mood macro-F1
    s: float     # identity-probe accuracy
    ratio: float

    @property
    def dominant(self) -> bool:
        return self.ratio == math.inf


def selection_key(p: TradeoffPoint):
    """Dominant points first, then larger R, then lower probe accuracy."""
    return (0 if p.dominant else 1, -p.ratio if not p.dominant else 0.0, p.s)


def pareto_front(points: Sequence[TradeoffPoint]) -> list[TradeoffPoint]:
    """Points not beaten on both mood F1 (higher) and probe accuracy (lower)."""
    front = []
    for p in points:
        beaten = any(q.t >= p.t and q.s <= p.s and (q.t > p.t or q.s < p.s) for q in points)
        if not beaten:
            front.append(p)
    return sorted(front, key=lambda p: (p.s, -p.t))


@dataclass
class SweepResult:
    points: list[TradeoffPoint]
    selected: TradeoffPoint
    pareto: list[TradeoffPoint]
    base_t: float
    base_s: float
    model: NiMlpModel | None = None
    extra: dict = field(default_factory=dict)


def sigma_sweep(base: MlpModel, X_train, ids_train, y_train, X_val, ids_val, y_val,
                lambdas: Sequence[float], sigmas: Sequence[float], seed: int = 0,
                probe_folds: int = 5, n_users: int | None = None) -> SweepResult:
    """Train encoder + noisy head for every (lambda, sigma) and pick the best R.

    ``t`` is validation macro-F1 and ``s`` the identity-probe accuracy on one
    noisy draw of the validation head inputs.
    """
    ids_train = np.asarray(ids_train, dtype=np.int64)
    ids_val = np.asarray(ids_val, dtype=np.int64)
    n_users = n_users or int(max(ids_train.max(), ids_val.max())) + 1
    Z_tr = base.features(X_train)
    Z_val = base.features(X_val)
    base_t = macro_f1(base.predict(X_val), y_val)
    base_s = train_identity_probe(Z_val, ids_val, probe_folds, seed, "mlp").accuracy

    points, models = [], []
    for lam in lambdas:
        enc = fit_identity_encoder(Z_tr, ids_train, lam, n_users)
        for sigma in sigmas:
            head = train_noisy_head(base, enc, X_train, ids_train, y_train, sigma, seed, Z_tr)
            model = NiMlpModel(base, enc, head)
            t = macro_f1(head.head.predict(Z_val), y_val)
            reps = model.head_inputs(X_val, ids_val, seed)
            s = train_identity_probe(reps, ids_val, probe_folds, seed, f"nimlp/{lam}/{sigma}").accuracy
            points.append(TradeoffPoint(float(sigma), float(lam), t, s,
                                        compute_tradeoff_ratio(base_s, s, base_t, t)))
            models.append(model)
    best = min(range(len(points)), key=lambda i: selection_key(points[i]))
    return SweepResult(points, points[best], pareto_front(points), base_t, base_s, models[best])


def export_sweep(path: str | Path, result: SweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", "lambda", "mood_f1", "probe_acc", "ratio", "dominant"])
        for p in result.points:
            w.writerow([f"{p.sigma:g}", f"{p.lam:g}", f"{p.t:.6f}", f"{p.s:.6f}",
                        f"{p.ratio:.6f}" if math.isfinite(p.ratio) else str(p.ratio),
                        int(p.dominant)])


def save_nimlp(path: str | Path, model: NiMlpModel, meta: dict | None = None) -> None:
    _, base_hyper, base_arrays, base_meta = serialize.pack_model(model.base)
    arrays = {f"base/{k}": v for k, v in base_arrays.items()}
    arrays["encoder/theta"] = model.encoder.theta
    arrays["encoder/counts"] = model.encoder.counts
    arrays["head/W"] = model.head.W
    arrays["head/b"] = model.head.b
    hyper = {"base": base_hyper, "lambda": model.encoder.lam, "sigma": model.head.sigma}
    info = {"base": base_meta, "head_seed": model.head.seed, **(meta or {})}
    serialize.save(path, "nimlp", hyper, arrays, info)


def load_nimlp(path: str | Path) -> NiMlpModel:
    kind, hyper, arrays, meta = serialize.load(path)
    if kind != "nimlp":
        raise serialize.FormatError(f"expected an nimlp container, got {kind!r}")
    base_meta = dict(meta["base"])
    seed = base_meta.pop("seed")
    base = MlpModel({k[5:]: v for k, v in arrays.items() if k.startswith("base/")},
                    MlpHyper(**hyper["base"]), seed, base_meta)
    enc = IdentityEncoder(arrays["encoder/theta"], hyper["lambda"], arrays["encoder/counts"])
    head = NoisyHead(SoftmaxHead(arrays["head/W"], arrays["head/b"], meta["head_seed"]),
                     hyper["sigma"], meta["head_seed"])
    return NiMlpModel(base, enc, head)
