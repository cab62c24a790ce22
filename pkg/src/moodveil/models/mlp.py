"""Two-hidden-layer perceptron trained with softmax cross-entropy and Adam.

Layers are ``input -> h1 -> h2 -> 3`` with ReLU on both hidden layers and
inverted dropout after each of them. The second hidden activation is the
representation handed to the identity-disentanglement stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..rng import substream

N_CLASSES = 3
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingError(FloatingPointError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class MlpHyper:
    h1: int = 128
    h2: int = 64
    dropout: float = 0.0
    lr: float = 1e-3
    batch_size: int = 100
    epochs: int = 200

    def as_dict(self) -> dict:
        return {"h1": self.h1, "h2": self.h2, "dropout": self.dropout, "lr": self.lr,
                "batch_size": self.batch_size, "epochs": self.epochs}


@dataclass
class MlpModel:
    params: dict
    hyper: MlpHyper
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    def forward(self, X, mode: str = "infer", rng: np.random.Generator | None = None):
        """Return (class probabilities, second hidden activation)."""
        X = _check_input(X, self.input_dim)
        masks = None
        if mode == "train" and self.hyper.dropout > 0:
            if rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            masks = dropout_masks(rng, X.shape[0], self.hyper, self.hyper.dropout)
        elif mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        cache = _forward(self.params, X, masks)
        return cache["probs"], cache["z2"]

    def predict_proba(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def features(self, X) -> np.ndarray:
        """Penultimate (second hidden layer) activations, no dropout."""
        return self.forward(X)[1]


def _check_input(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != dim:
        raise ValueError(f"expected {dim} input features, got {X.shape[1]}")
    return X


def init_params(input_dim: int, hyper: MlpHyper, rng: np.random.Generator) -> dict:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    dims = (input_dim, hyper.h1, hyper.h2, N_CLASSES)
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), 1):
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{k}"] = rng.uniform(-bound, bound, size=fan_out)
    return params


def dropout_masks(rng, n: int, hyper: MlpHyper, rate: float):
    keep = 1.0 - rate
    return tuple((rng.random((n, h)) < keep) / keep for h in (hyper.h1, hyper.h2))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def _forward(params, X, masks=None) -> dict:
    a1 = X @ params["W1"] + params["b1"]
    r1 = np.maximum(a1, 0.0)
    z1 = r1 * masks[0] if masks is not None else r1
    a2 = z1 @ params["W2"] + params["b2"]
    r2 = np.maximum(a2, 0.0)
    z2 = r2 * masks[1] if masks is not None else r2
    logits = z2 @ params["W3"] + params["b3"]
    return {"X": X, "a1": a1, "z1": z1, "a2": a2, "z2": z2,
            "logits": logits, "probs": softmax(logits), "masks": masks}


def loss_and_grads(params: dict, X: np.ndarray, y: np.ndarray, masks=None):
    """Mean cross-entropy over the batch and its gradient for every tensor."""
    c = _forward(params, X, masks)
    n = X.shape[0]
    loss = cross_entropy(c["logits"], y)
    d_logits = c["probs"].copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    g = {"W3": c["z2"].T @ d_logits, "b3": d_logits.sum(axis=0)}
    d_z2 = d_logits @ params["W3"].T
    if masks is not None:
        d_z2 = d_z2 * masks[1]
    d_a2 = d_z2 * (c["a2"] > 0)
    g["W2"] = c["z1"].T @ d_a2
    g["b2"] = d_a2.sum(axis=0)
    d_z1 = d_a2 @ params["W2"].T
    if masks is not None:
        d_z1 = d_z1 * masks[0]
    d_a1 = d_z1 * (c["a1"] > 0)
    g["W1"] = X.T @ d_a1
    g["b1"] = d_a1.sum(axis=0)
    return loss, g


class Adam:
    """Adam with bias correction folded into the step size and epsilon.

    lr * (m/c1) / (sqrt(v/c2) + eps) == (lr*sqrt(c2)/c1) * m / (sqrt(v) + eps*sqrt(c2)),
    which lets the update run in preallocated buffers.
    """

    def __init__(self, params: dict, lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._buf = {k: np.empty_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        b1, b2 = ADAM_BETAS
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        root_c2 = np.sqrt(1.0 - b2 ** self.t)
        step = self.lr * root_c2 / c1
        eps = ADAM_EPS * root_c2
        for k, g in grads.items():
            m, v, buf = self.m[k], self.v[k], self._buf[k]
            m *= b1
            np.multiply(g, 1.0 - b1, out=buf)
            m += buf
            v *= b2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - b2
            v += buf
            np.sqrt(v, out=buf)
            buf += eps
            np.divide(m, buf, out=buf)
            buf *= step
            params[k] -= buf


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise ValueError("labels must lie in {0, 1, 2}")
    return y


def _minibatches(rng, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_mlp(X, y, hyper: MlpHyper = MlpHyper(), seed: int = 0) -> MlpModel:
    """Fit with a fixed number of epochs; deterministic given ``seed``."""
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("X and y must be non-empty with matching rows")
    params = init_params(X.shape[1], hyper, substream(seed, "init"))
    shuffle = substream(seed, "shuffle")
    drop = substream(seed, "dropout")
    opt = Adam(params, hyper.lr)
    loss = float("nan")
    for epoch in range(hyper.epochs):
        total = 0.0
        for idx in _minibatches(shuffle, X.shape[0], hyper.batch_size):
            masks = dropout_masks(drop, len(idx), hyper, hyper.dropout) if hyper.dropout > 0 else None
            batch_loss, grads = loss_and_grads(params, X[idx], y[idx], masks)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (hyper={hyper.as_dict()}, seed={seed})")
            opt.step(params, grads)
            total += batch_loss * len(idx)
        loss = total / X.shape[0]
    meta = {"activation": "relu", "optimizer": "adam", "adam_betas": list(ADAM_BETAS),
            "adam_eps": ADAM_EPS, "init": "uniform_fan_in", "final_train_loss": loss}
    return MlpModel(params, hyper, seed, meta)


@dataclass
class SoftmaxHead:
    """Single linear layer ``z -> 3`` classification head."""

    W: np.ndarray
    b: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def logits(self, Z) -> np.ndarray:
        Z = _check_input(Z, self.W.shape[0])
        return Z @ self.W + self.b

    def predict(self, Z) -> np.ndarray:
        return np.argmax(self.logits(Z), axis=1)


def train_head(Z, y, seed: int, lr: float = 1e-3, batch_size: int = 100, epochs: int = 200,
               perturb: Callable[[np.ndarray], np.ndarray] | None = None) -> SoftmaxHead:
    """Train a fresh linear softmax head on fixed inputs ``Z``.

    ``perturb(idx)`` may return an additive offset for the batch rows ``idx``;
    it is called once per minibatch so noise is redrawn every batch/epoch.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = _check_labels(y)
    rng = substream(seed, "init")
    bound = 1.0 / np.sqrt(max(Z.shape[1], 1))
    params = {"W": rng.uniform(-bound, bound, size=(Z.shape[1], N_CLASSES)),
              "b": rng.uniform(-bound, bound, size=N_CLASSES)}
    shuffle = substream(seed, "shuffle")
    opt = Adam(params, lr)
    loss = float("nan")
    for epoch in range(epochs):
        total = 0.0
        for idx in _minibatches(shuffle, Z.shape[0], batch_size):
            inp = Z[idx] if perturb is None else Z[idx] + perturb(idx)
            logits = inp @ params["W"] + params["b"]
            batch_loss = cross_entropy(logits, y[idx])
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite head loss at epoch {epoch} (seed={seed})")
            d = softmax(logits)
            d[np.arange(len(idx)), y[idx]] -= 1.0
            d /= len(idx)
            opt.step(params, {"W": inp.T @ d, "b": d.sum(axis=0)})
            total += batch_loss * len(idx)
        loss = total / Z.shape[0]
    return SoftmaxHead(params["W"], params["b"], seed, {"final_train_loss": loss})


def with_head(model: MlpModel, head: SoftmaxHead) -> MlpModel:
    """Copy of ``model`` whose output layer is replaced by ``head``."""
    params = dict(model.params, W3=head.W.copy(), b3=head.b.copy())
    return replace(model, params=params)
