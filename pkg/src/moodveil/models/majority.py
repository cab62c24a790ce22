from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MajorityModel:
    label: int
    meta: dict = field(default_factory=dict, compare=False)

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), self.label, dtype=np.int64)


def train_majority(y) -> MajorityModel:
    """Most frequent training label; ties go to the lowest class code."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cannot fit a majority classifier on an empty training set")
    return MajorityModel(int(np.argmax(np.bincount(y, minlength=3))))
