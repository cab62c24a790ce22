"""Hyperparameter grids searched by nested cross-validation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

MODEL_KINDS = ("majority", "svm", "mlp", "nimlp")


@dataclass(frozen=True)
class HyperGrid:
    svm_C: tuple = (0.1, 0.5, 1, 2, 3, 5, 10)
    svm_kernel: tuple = ("rbf", 2, 3, 5, 10)
    mlp_h1: tuple = (1024, 512, 128)
    mlp_h2: tuple = (128, 64)
    mlp_dropout: tuple = (0.0, 0.2, 0.5)
    mlp_lr: float = 1e-3
    mlp_batch_size: int = 100
    mlp_epochs: int = 200
    nimlp_lambda: tuple = (0.1, 1, 2, 3, 5, 10)
    nimlp_sigma: tuple = (1, 5, 10, 25, 50, 100)

    def __post_init__(self):
        for name in ("svm_C", "svm_kernel", "mlp_h1", "mlp_h2", "mlp_dropout",
                     "nimlp_lambda", "nimlp_sigma"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid entry {name} must be non-empty")


def grid_candidates(grid: HyperGrid, kind: str) -> list[dict]:
    """Cartesian product of the grid rows that apply to ``kind``."""
    if kind == "majority":
        return [{}]
    if kind == "svm":
        return [{"C": float(c), "kernel": k}
                for c, k in itertools.product(grid.svm_C, grid.svm_kernel)]
    if kind == "mlp":
        return [{"h1": int(h1), "h2": int(h2), "dropout": float(p), "lr": grid.mlp_lr,
                 "batch_size": grid.mlp_batch_size, "epochs": grid.mlp_epochs}
                for h1, h2, p in itertools.product(grid.mlp_h1, grid.mlp_h2, grid.mlp_dropout)]
    if kind == "nimlp":
        return [{"lambda": float(lam), "sigma": float(s)}
                for lam, s in itertools.product(grid.nimlp_lambda, grid.nimlp_sigma)]
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
