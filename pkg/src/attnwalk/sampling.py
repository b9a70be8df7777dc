"""Dataset subsampling and stratified k-fold splitting.

Pure functions of (input, seed): identical calls give identical results.
"""

from __future__ import annotations

import numpy as np

from attnwalk.graphs import Dataset, DatasetError
from attnwalk.rng import stream


def _ids_by_class(dataset: Dataset) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for i, g in enumerate(dataset.graphs):
        by_class.setdefault(g.label, []).append(i)
    return by_class


def balanced_subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Sample exactly n/L graphs per class without replacement."""
    classes = dataset.num_classes
    if n % classes != 0:
        raise DatasetError(f"subsample size {n} is not divisible by {classes} classes")
    per_class = n // classes
    by_class = _ids_by_class(dataset)
    rng = stream(seed, "subsample")
    chosen: list[int] = []
    for c in range(classes):
        ids = by_class.get(c, [])
        if len(ids) < per_class:
            raise DatasetError(
                f"class {c} has {len(ids)} graphs, need {per_class} for a balanced subsample"
            )
        chosen.extend(rng.choice(ids, size=per_class, replace=False).tolist())
    order = rng.permutation(len(chosen))
    return dataset.subset([chosen[i] for i in order])


def kfold_split(dataset: Dataset, k: int, seed: int) -> list[tuple[list[int], list[int]]]:
    """Stratified k-fold split; returns (train_ids, test_ids) per fold."""
    if k < 2:
        raise ValueError("k must be at least 2")
    by_class = _ids_by_class(dataset)
    for c, ids in by_class.items():
        if len(ids) < k:
            raise DatasetError(f"class {c} has {len(ids)} graphs, fewer than k={k}")
    rng = stream(seed, "kfold")
    buckets: list[list[int]] = [[] for _ in range(k)]
    for c in sorted(by_class):
        ids = np.array(by_class[c])
        order = rng.permutation(len(ids))
        for j, idx in enumerate(ids[order]):
            buckets[j % k].append(int(idx))
    folds = []
    for f in range(k):
        test = sorted(buckets[f])
        test_set = set(test)
        train = [i for i in range(len(dataset)) if i not in test_set]
        folds.append((train, test))
    return folds
