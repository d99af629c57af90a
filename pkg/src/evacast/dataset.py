"""Split, balance and repeat management for the experimental protocol."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvacastError, ValidationError


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValidationError("split ratios must sum to 1")
        if min(self.train, self.val, self.test) <= 0:
            raise ValidationError("all split ratios must be positive")


@dataclass(frozen=True)
class ExperimentPlan:
    n_repeats: int = 5
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if len(self.seeds) != self.n_repeats:
            raise ValidationError("plan needs exactly one seed per repeat")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("plan seeds must be distinct")


class RepeatError(EvacastError):
    """Wraps a failure inside one repeat with its index attached."""

    def __init__(self, repeat_index: int, cause: BaseException):
        super().__init__(f"repeat {repeat_index} failed: {cause}")
        self.repeat_index = repeat_index


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder allocation keeping each count within 1 of exact."""
    exact = [n * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    remainders = sorted(range(len(ratios)), key=lambda i: exact[i] - counts[i],
                        reverse=True)
    for i in range(n - sum(counts)):
        counts[remainders[i]] += 1
    return counts


def split_indices(n: int, spec: SplitSpec,
                  labels: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, exhaustive 6:2:2-style index split; per-class when stratified."""
    rng = np.random.default_rng(spec.seed)
    ratios = (spec.train, spec.val, spec.test)
    if not spec.stratified or labels is None:
        perm = rng.permutation(n)
        n_tr, n_va, _ = _allocate(n, ratios)
        return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise ValidationError("labels length must match sample count")
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size == 0:
            raise ValidationError(f"class {cls} has no samples")
        idx = rng.permutation(idx)
        n_tr, n_va, _ = _allocate(idx.size, ratios)
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr:n_tr + n_va])
        parts[2].append(idx[n_tr + n_va:])
    return tuple(np.concatenate(p) for p in parts)


def stratified_split(samples: list, spec: SplitSpec,
                     labels: np.ndarray | None = None) -> tuple[list, list, list]:
    """Split a sample list; labels default to each sample's `.label` attribute."""
    if labels is None and spec.stratified:
        labels = np.array([int(s.label) for s in samples])
    tr, va, te = split_indices(len(samples), spec, labels)
    pick = lambda idx: [samples[i] for i in idx]
    return pick(tr), pick(va), pick(te)


def oversample_indices(labels: np.ndarray, seed: int) -> np.ndarray:
    """Indices after duplicating every minority class up to the majority count.

    Original order is preserved; duplicates are appended.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("cannot oversample an empty training set")
    classes, counts = np.unique(labels, return_counts=True)
    target = counts.max()
    rng = np.random.default_rng(seed)
    out = [np.arange(labels.size)]
    for cls, count in zip(classes, counts):
        if count < target:
            pool = np.flatnonzero(labels == cls)
            out.append(rng.choice(pool, size=target - count, replace=True))
    return np.concatenate(out)


def oversample_minority(train: list, seed: int,
                        labels: np.ndarray | None = None) -> list:
    """Random duplication with replacement until all class counts are equal."""
    if labels is None:
        labels = np.array([int(s.label) for s in train])
    idx = oversample_indices(labels, seed)
    return [train[i] for i in idx]


@dataclass
class RepeatRun:
    """Inputs handed to an experiment function for one repeat."""

    index: int
    seed: int
    train: list
    val: list
    test: list


def run_repeats(samples: list, plan: ExperimentPlan,
                experiment_fn: Callable[[RepeatRun], object],
                stratified: bool = True, balance: bool = True) -> list:
    """Re-split, balance the training split and run the experiment per seed.

    Reports come back in seed order; a failure is re-raised as RepeatError
    carrying the repeat index.
    """
    reports = []
    for i, seed in enumerate(plan.seeds):
        spec = SplitSpec(stratified=stratified, seed=seed)
        train, val, test = stratified_split(samples, spec)
        if balance:
            train = oversample_minority(train, seed)
        try:
            reports.append(experiment_fn(RepeatRun(i, seed, train, val, test)))
        except EvacastError as exc:
            raise RepeatError(i, exc) from exc
    return reports
