"""Server-side aggregation rules and downlink stream planning.

Three rules form a degeneration chain: streaming with one stream per user
equals per-user mixing, and per-user mixing with FedAvg rows equals plain
FedAvg. Stream planning clusters the mixing rows with Lloyd's algorithm
(k-means++ seeding, best of several restarts) and scores candidate stream
counts with the silhouette of the resulting partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .models import ParameterVector
from .seeds import rng_from
from .similarity import ROW_SUM_TOL, MixingMatrix

KMEANS_RESTARTS = 10
KMEANS_MAX_ITERS = 100


class AggregationKind(str, Enum):
    FEDAVG = "fedavg"
    USER_CENTRIC = "user_centric"
    STREAMED = "streamed"


@dataclass(frozen=True)
class StreamPlan:
    """Assignment of m users to num_streams downlink models, with one
    row-stochastic centroid weight vector per stream."""

    num_streams: int
    assignment: np.ndarray
    centroids: np.ndarray

    def __post_init__(self) -> None:
        assignment = np.array(self.assignment, dtype=np.int64)
        centroids = np.array(self.centroids, dtype=np.float64)
        k = self.num_streams
        if k < 1:
            raise ValueError("num_streams must be >= 1")
        if centroids.ndim != 2 or centroids.shape[0] != k:
            raise ValueError(f"centroids must have shape ({k}, m)")
        if assignment.ndim != 1 or len(assignment) < k:
            raise ValueError("assignment must list one stream id per user")
        if assignment.min() < 0 or assignment.max() >= k:
            raise ValueError("stream ids must lie in [0, num_streams)")
        if len(np.unique(assignment)) != k:
            raise ValueError("every stream must serve at least one user")
        if np.any(centroids < 0) or np.any(
            np.abs(centroids.sum(axis=1) - 1.0) > ROW_SUM_TOL
        ):
            raise ValueError("centroid rows must be non-negative and sum to 1")
        assignment.setflags(write=False)
        centroids.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "centroids", centroids)

    def to_json_dict(self) -> dict:
        return {
            "m_t": self.num_streams,
            "assignment": [int(a) for a in self.assignment],
            "centroids": [[float(v) for v in row] for row in self.centroids],
        }


@dataclass(frozen=True)
class AggregationRule:
    kind: AggregationKind
    w: MixingMatrix | None = None
    plan: StreamPlan | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AggregationKind(self.kind))
        if self.kind is AggregationKind.FEDAVG and (self.w or self.plan):
            raise ValueError("fedavg takes no mixing matrix or plan")
        if self.kind is AggregationKind.USER_CENTRIC and self.w is None:
            raise ValueError("user_centric requires a mixing matrix")
        if self.kind is AggregationKind.STREAMED and self.plan is None:
            raise ValueError("streamed requires a stream plan")


def _weighted_sum(models: Sequence[ParameterVector], weights: np.ndarray) -> ParameterVector:
    # fixed left-to-right accumulation for bit-reproducibility
    acc = weights[0] * models[0].values
    for j in range(1, len(models)):
        acc += weights[j] * models[j].values
    return models[0].replace(acc)


def _check_models(models: Sequence[ParameterVector]) -> None:
    if not models:
        raise ValueError("no models to aggregate")
    d = models[0].dim
    if any(m.dim != d for m in models):
        raise ValueError("models must share one parameter dimension")


def fedavg_aggregate(
    models: Sequence[ParameterVector], ns: Sequence[int]
) -> ParameterVector:
    """Dataset-size-weighted average of the client models."""
    _check_models(models)
    n = np.array(ns, dtype=np.float64)
    if len(n) != len(models) or np.any(n <= 0):
        raise ValueError("need one positive sample count per model")
    return _weighted_sum(models, n / n.sum())


def user_centric_aggregate(
    models: Sequence[ParameterVector], w: MixingMatrix
) -> list[ParameterVector]:
    """One personalized model per user: row i of W mixes the client models."""
    _check_models(models)
    if w.num_clients != len(models):
        raise ValueError("mixing matrix size must match the number of models")
    return [_weighted_sum(models, w.w[i]) for i in range(len(models))]


def streamed_aggregate(
    models: Sequence[ParameterVector], plan: StreamPlan
) -> list[ParameterVector]:
    """One model per stream, mixed by the plan's centroid weight vectors."""
    _check_models(models)
    if plan.centroids.shape[1] != len(models):
        raise ValueError("plan centroids must have one weight per model")
    return [_weighted_sum(models, plan.centroids[c]) for c in range(plan.num_streams)]


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(points)
    chosen = [int(rng.integers(m))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(m, p=d2 / total))
        else:
            # all remaining mass on already-chosen duplicates: pick any unchosen point
            remaining = np.setdiff1d(np.arange(m), np.array(chosen))
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, d2


def _repair_empty(
    points: np.ndarray, centroids: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Give every empty cluster the point currently farthest from its centroid.

    The moved point becomes its new cluster's centroid, so the k-means
    objective never increases.
    """
    k = len(centroids)
    for c in range(k):
        if np.any(labels == c):
            continue
        dist_own = ((points - centroids[labels]) ** 2).sum(axis=1)
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] > 1
        dist_own[~movable] = -np.inf
        pick = int(np.argmax(dist_own))
        labels = labels.copy()
        labels[pick] = c
        centroids = centroids.copy()
        centroids[c] = points[pick]
    return centroids, labels


def _lloyd(
    points: np.ndarray, centroids: np.ndarray, max_iters: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations; returns (labels, centroids, objective history).

    The history records the objective after each assignment and each update
    phase, so monotonicity is directly assertable.
    """
    history: list[float] = []
    labels = None
    for _ in range(max_iters):
        new_labels, d2 = _assign(points, centroids)
        centroids, new_labels = _repair_empty(points, centroids, new_labels)
        history.append(float(((points - centroids[new_labels]) ** 2).sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(len(centroids)):
            centroids[c] = points[labels == c].mean(axis=0)
        history.append(float(((points - centroids[labels]) ** 2).sum()))
    return labels, centroids, history


def kmeans_streams(
    w: MixingMatrix,
    num_streams: int,
    seed: int,
    max_iters: int = KMEANS_MAX_ITERS,
    restarts: int = KMEANS_RESTARTS,
) -> StreamPlan:
    """Cluster the mixing rows into num_streams groups.

    k-means++ seeding, `restarts` independent restarts keeping the best
    objective (ties broken by restart index), centroids renormalized onto
    the simplex at the end. num_streams == m short-circuits to the identity
    plan: every user is its own stream and the centroids are the rows of W.
    """
    m = w.num_clients
    if not 1 <= num_streams <= m:
        raise ValueError(f"num_streams must be in [1, {m}], got {num_streams}")
    points = w.w
    if num_streams == m:
        return StreamPlan(m, np.arange(m), points.copy())

    best: tuple[float, int] | None = None
    best_result = None
    for r in range(restarts):
        rng = rng_from(seed, r)
        init = _kmeanspp_init(points, num_streams, rng)
        labels, centroids, _ = _lloyd(points, init, max_iters)
        objective = float(((points - centroids[labels]) ** 2).sum())
        key = (objective, r)
        if best is None or key < best:
            best = key
            best_result = (labels, centroids)
    labels, centroids = best_result
    centroids = centroids / centroids.sum(axis=1, keepdims=True)
    return StreamPlan(num_streams, labels, centroids)


def silhouette_score(w: MixingMatrix, plan: StreamPlan) -> float:
    """Mean silhouette of the plan's partition, Euclidean on the rows of W.

    Singleton clusters and all-zero distances contribute 0.
    """
    if plan.num_streams < 2:
        raise ValueError("silhouette needs at least 2 streams")
    points = w.w
    labels = plan.assignment
    m = len(points)
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(m)
    for i in range(m):
        same = (labels == labels[i]) & (np.arange(m) != i)
        if not np.any(same):
            continue
        a = dist[i, same].mean()
        b = min(
            dist[i, labels == c].mean()
            for c in range(plan.num_streams)
            if c != labels[i]
        )
        denom = max(a, b)
        if denom > 0:
            scores[i] = (b - a) / denom
    return float(scores.mean())


def select_num_streams(w: MixingMatrix, candidates: Sequence[int], seed: int) -> int:
    """Candidate stream count with the highest silhouette; ties pick the smallest."""
    if len(candidates) == 0:
        raise ValueError("no stream-count candidates")
    m = w.num_clients
    for k in candidates:
        if not 2 <= k <= m:
            raise ValueError(f"candidate {k} outside [2, {m}]")
    best_k, best_score = None, -np.inf
    for k in sorted(set(int(k) for k in candidates)):
        score = silhouette_score(w, kmeans_streams(w, k, seed))
        if score > best_score:
            best_k, best_score = k, score
    return best_k
