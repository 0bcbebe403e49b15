"""Rare-class filtering, stratified holdout split, and stratified k-fold."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


class SplitError(ValueError):
    """Labels cannot be split as requested."""


class EmptyDatasetError(SplitError):
    pass


def filter_rare_classes(
    items: Iterable[T], min_count: int = 2, key: Callable[[T], Hashable] = lambda x: x
) -> tuple[list[T], dict]:
    """Drop items whose class has fewer than ``min_count`` members.

    Returns the kept items (input order) and ``{class: removed_count}``.
    """
    items = list(items)
    counts = Counter(key(it) for it in items)
    rare = {c: n for c, n in counts.items() if n < min_count}
    kept = [it for it in items if key(it) not in rare]
    if not kept:
        raise EmptyDatasetError(f"no class has at least {min_count} samples")
    return kept, dict(sorted(rare.items(), key=lambda kv: str(kv[0])))


def _class_groups(labels: Sequence, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index arrays, one per class, classes in sorted order."""
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size == 0:
        raise SplitError("labels must be a non-empty 1-D sequence")
    return [rng.permutation(np.flatnonzero(arr == c)) for c in np.unique(arr)]


def stratified_split(labels: Sequence, holdout_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class holdout of ``round(n_c * fraction)`` samples (at most ``n_c - 1``).

    Returns sorted ``(train_idx, test_idx)``.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise SplitError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx in _class_groups(labels, rng):
        n = len(idx)
        if n < 2:
            raise SplitError(f"class of size 1 (index {idx[0]}); filter rare classes first")
        n_test = min(max(int(np.floor(n * holdout_fraction + 0.5)), 0), n - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray  # fold index per sample
    k: int

    def validation_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds != fold)


def stratified_kfold(labels: Sequence, k: int, seed: int) -> FoldAssignment:
    """Deal each shuffled class round-robin over the folds.

    The dealing position carries over between classes, which keeps the
    total fold sizes balanced as well as the per-class counts.
    """
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    groups = _class_groups(labels, rng)
    folds = np.full(len(labels), -1, dtype=np.int64)
    offset = 0
    for idx in groups:
        if len(idx) < 2:
            raise SplitError(f"class of size 1 (index {idx[0]}); filter rare classes first")
        folds[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return FoldAssignment(folds, k)
