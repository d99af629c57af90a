"""Reference predictors: KNN classifier and persistence forecaster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .features import CongestionLabel, ShortTermSequence


@dataclass(frozen=True)
class KnnIndex:
    """Normalized feature vectors with labels, queried by Euclidean distance."""

    x: np.ndarray
    labels: np.ndarray
    k: int = 5

    def __post_init__(self):
        if self.x.ndim != 2 or len(self.x) == 0:
            raise ValidationError("KNN index needs a non-empty 2-D matrix")
        if len(self.labels) != len(self.x):
            raise ValidationError("labels length must match stored vectors")
        if not 1 <= self.k <= len(self.x):
            raise ValidationError(f"k={self.k} exceeds stored sample count")


def build_knn_index(x: np.ndarray, labels: np.ndarray, k: int = 5) -> KnnIndex:
    return KnnIndex(x=np.asarray(x, dtype=np.float64),
                    labels=np.asarray(labels, dtype=np.int64), k=k)


def _vote(dists: np.ndarray, labels: np.ndarray, k: int) -> int:
    # Rank by (count desc, mean distance asc, label code asc).
    order = np.argsort(dists, kind="stable")[:k]
    near_labels = labels[order]
    near_dists = dists[order]
    candidates = []
    for label in np.unique(near_labels):
        members = near_labels == label
        candidates.append((-int(members.sum()),
                           float(near_dists[members].mean()), int(label)))
    return min(candidates)[2]


def knn_classify(index: KnnIndex, query: np.ndarray) -> CongestionLabel:
    """Majority vote of the k nearest; ties fall to the closer, then lower, class."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.x.shape[1],):
        raise ValidationError("query width does not match the index")
    dists = np.sqrt(((index.x - query) ** 2).sum(axis=1))
    return CongestionLabel(_vote(dists, index.labels, index.k))


def knn_classify_batch(index: KnnIndex, queries: np.ndarray,
                       chunk: int = 512) -> np.ndarray:
    """Vectorized distance computation, chunked to bound memory."""
    queries = np.asarray(queries, dtype=np.float64)
    out = np.empty(len(queries), dtype=np.int64)
    sq_stored = (index.x ** 2).sum(axis=1)
    for start in range(0, len(queries), chunk):
        block = queries[start:start + chunk]
        d2 = sq_stored + (block ** 2).sum(axis=1)[:, None] - 2.0 * block @ index.x.T
        np.maximum(d2, 0.0, out=d2)
        dists = np.sqrt(d2)
        for i in range(len(block)):
            out[start + i] = _vote(dists[i], index.labels, index.k)
    return out


def persistence_forecast(seq: ShortTermSequence) -> float:
    """The last observed speed, whatever the horizon."""
    if seq.steps.shape[0] == 0:
        raise ValidationError("empty sequence")
    return float(seq.steps[-1, 0])


def persistence_forecast_batch(x: np.ndarray) -> np.ndarray:
    """Last-observed-speed forecasts for a (batch, time, features) array."""
    return np.asarray(x, dtype=np.float64)[:, -1, 0]
