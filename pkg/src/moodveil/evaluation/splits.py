"""Chronological per-user folds and user-disjoint splits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data_model import DailySample


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every sample to one of ``k`` chronological folds."""

    fold_of: np.ndarray
    k: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def inner_splits(self, outer: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """(train, validation) pairs over the k-1 folds left after removing ``outer``."""
        pairs = []
        for v in range(self.k):
            if v == outer:
                continue
            keep = (self.fold_of != outer) & (self.fold_of != v)
            pairs.append((np.flatnonzero(keep), np.flatnonzero(self.fold_of == v)))
        return pairs


def chrono_partition(samples: Sequence[DailySample], k: int = 10) -> FoldPlan:
    """Split each user's dated samples into k contiguous blocks; fold i = block i of all users.

    Users whose sample count is not divisible by k give the extra samples to
    their earliest blocks.
    """
    by_user: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        by_user.setdefault(s.user_id, []).append(i)
    fold_of = np.full(len(samples), -1, dtype=np.int64)
    for user, idx in sorted(by_user.items()):
        if len(idx) < k:
            raise ValueError(f"user {user} has {len(idx)} samples, fewer than k={k}")
        idx = sorted(idx, key=lambda i: samples[i].date)
        for fold, block in enumerate(np.array_split(np.asarray(idx), k)):
            fold_of[block] = fold
    return FoldPlan(fold_of, k)


@dataclass(frozen=True)
class UserSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def user_split(samples: Sequence[DailySample], train_users, val_users, test_users) -> UserSplit:
    groups = [set(train_users), set(val_users), set(test_users)]
    for name, g in zip(("train", "validation", "test"), groups):
        if not g:
            raise ValueError(f"{name} user list is empty")
    if any(groups[i] & groups[j] for i in range(3) for j in range(i + 1, 3)):
        raise ValueError("a user appears in more than one split")
    roster = {s.user_id for s in samples}
    listed = set().union(*groups)
    if roster - listed:
        raise ValueError(f"users missing from the split: {sorted(roster - listed)}")
    if listed - roster:
        raise ValueError(f"unknown users in the split: {sorted(listed - roster)}")
    users = np.array([s.user_id for s in samples], dtype=object)
    return UserSplit(*(np.flatnonzero(np.isin(users, list(g))) for g in groups))


def default_user_groups(users: Sequence[str], sizes=(10, 3, 4)):
    """First/next/last blocks of the sorted roster, rescaled to its size."""
    users = sorted(users)
    n = len(users)
    if n < 3:
        raise ValueError("user split needs at least three users")
    total = sum(sizes)
    n_train = max(1, round(n * sizes[0] / total))
    n_val = max(1, round(n * sizes[1] / total))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    return users[:n_train], users[n_train:n_train + n_val], users[n_train + n_val:]
