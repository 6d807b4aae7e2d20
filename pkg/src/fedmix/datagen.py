"""Synthetic federated datasets with controlled heterogeneity.

A Gaussian class-conditional pool (class means on a sphere, identity
covariance) is partitioned across clients under one of three regimes:
Dirichlet label skew, label skew plus per-group feature rotations, or
per-group label permutations. Every client carries its ground-truth group
id so cluster-recovery and oracle baselines can be scored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .seeds import rng_from

CLASS_MEAN_RADIUS = 3.0

# rng stream tags so the pool and each partitioner draw independently
_POOL, _LABELS, _IID, _SPLIT = 0, 1, 2, 3


class Scenario(str, Enum):
    LABEL_SHIFT = "label_shift"
    LABEL_AND_COVARIATE_SHIFT = "label_and_covariate_shift"
    CONCEPT_SHIFT = "concept_shift"


class PoolExhaustedError(RuntimeError):
    """Raised when a partition asks for more samples of a class than the pool holds."""

    def __init__(self, label: int, requested: int, available: int):
        super().__init__(
            f"pool exhausted for class {label}: requested {requested}, "
            f"available {available}"
        )
        self.label = label


@dataclass(frozen=True)
class ClientDataset:
    """One client's labeled samples; true_cluster is the generator's group id."""

    client_id: int
    X: np.ndarray
    y: np.ndarray
    true_cluster: int | None = 0

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y) or len(y) < 1:
            raise ValueError(f"bad dataset shapes: X {X.shape}, y {y.shape}")
        if y.min() < 0:
            raise ValueError("labels must be non-negative")
        if self.true_cluster is not None and self.true_cluster < 0:
            raise ValueError("true_cluster must be >= 0 when present")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class FederationSpec:
    num_clients: int
    scenario: Scenario
    input_dim: int
    num_classes: int
    samples_per_client: int | tuple[int, ...] = 100
    dirichlet_alpha: float = 0.4
    num_clusters: int = 1
    seed: int = 0
    pool_oversample: float = 3.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if isinstance(self.samples_per_client, (list, np.ndarray)):
            object.__setattr__(
                self, "samples_per_client", tuple(int(v) for v in self.samples_per_client)
            )
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.num_clusters < 1 or self.num_clusters > self.num_clients:
            raise ValueError("num_clusters must be in [1, num_clients]")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be > 0")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("input_dim must be >= 1 and num_classes >= 2")
        if self.scenario is Scenario.LABEL_AND_COVARIATE_SHIFT and self.input_dim < 2:
            raise ValueError("covariate shift rotations need input_dim >= 2")
        if self.pool_oversample < 1.0:
            raise ValueError("pool_oversample must be >= 1")
        if isinstance(self.samples_per_client, tuple) and len(
            self.samples_per_client
        ) != self.num_clients:
            raise ValueError("per-client size list must have num_clients entries")
        if any(s < 1 for s in self.client_sizes()):
            raise ValueError("samples_per_client entries must be >= 1")

    def client_sizes(self) -> np.ndarray:
        if isinstance(self.samples_per_client, tuple):
            return np.array(self.samples_per_client, dtype=np.int64)
        return np.full(self.num_clients, int(self.samples_per_client), dtype=np.int64)


@dataclass(frozen=True)
class SamplePool:
    """Labeled pool drawn from the Gaussian class-conditional base task."""

    X: np.ndarray
    y: np.ndarray
    class_means: np.ndarray

    @property
    def size(self) -> int:
        return len(self.y)


MEAN_DRAW_CANDIDATES = 50


def _draw_class_means(rng: np.random.Generator, C: int, dim: int) -> np.ndarray:
    """Means on the radius-3 sphere, best of several draws by min pairwise
    distance so no two classes land on top of each other."""
    best, best_sep = None, -1.0
    for _ in range(MEAN_DRAW_CANDIDATES):
        raw = rng.standard_normal((C, dim))
        means = raw * (CLASS_MEAN_RADIUS / np.linalg.norm(raw, axis=1, keepdims=True))
        d = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        sep = d[~np.eye(C, dtype=bool)].min()
        if sep > best_sep:
            best, best_sep = means, sep
    return best


def generate_base_task(spec: FederationSpec) -> SamplePool:
    """Balanced pool: for each class, mean on the radius-3 sphere, unit covariance.

    Pool size is pool_oversample times the total client demand (never below
    it), with per-class counts differing by at most one.
    """
    rng = rng_from(spec.seed, _POOL)
    dim, C = spec.input_dim, spec.num_classes
    means = _draw_class_means(rng, C, dim)

    needed = int(spec.client_sizes().sum())
    total = max(int(np.ceil(spec.pool_oversample * needed)), needed)
    base, extra = divmod(total, C)
    counts = np.full(C, base, dtype=np.int64)
    counts[:extra] += 1
    y = np.repeat(np.arange(C), counts)
    X = means[y] + rng.standard_normal((total, dim))
    return SamplePool(X=X, y=y, class_means=means)


def _dirichlet_rows(rng: np.random.Generator, m: int, alpha: float, C: int) -> np.ndarray:
    """Simplex rows via normalized Gamma draws; resamples the measure-zero all-zero case."""
    rows = np.empty((m, C))
    for i in range(m):
        g = rng.gamma(alpha, 1.0, size=C)
        while g.sum() == 0.0:
            g = rng.gamma(alpha, 1.0, size=C)
        rows[i] = g / g.sum()
    return rows


def _partition_by_label_skew(pool: SamplePool, spec: FederationSpec) -> list[ClientDataset]:
    rng = rng_from(spec.seed, _LABELS)
    C = spec.num_classes
    sizes = spec.client_sizes()
    priors = _dirichlet_rows(rng, spec.num_clients, spec.dirichlet_alpha, C)

    by_class = [rng.permutation(np.flatnonzero(pool.y == c)) for c in range(C)]
    cursor = [0] * C
    clients = []
    for i in range(spec.num_clients):
        labels = rng.choice(C, size=int(sizes[i]), p=priors[i])
        counts = np.bincount(labels, minlength=C)
        picked = []
        for c in range(C):
            want = int(counts[c])
            if want == 0:
                continue
            left = len(by_class[c]) - cursor[c]
            if want > left:
                raise PoolExhaustedError(c, want, left)
            picked.append(by_class[c][cursor[c] : cursor[c] + want])
            cursor[c] += want
        idx = np.concatenate(picked)
        clients.append(ClientDataset(i, pool.X[idx], pool.y[idx], true_cluster=0))
    return clients


def partition_label_shift(pool: SamplePool, spec: FederationSpec) -> list[ClientDataset]:
    """Per client: labels drawn from a Dirichlet(alpha) prior, features pulled
    from the pool without replacement."""
    if spec.scenario is not Scenario.LABEL_SHIFT:
        raise ValueError(f"scenario must be label_shift, got {spec.scenario.value}")
    return _partition_by_label_skew(pool, spec)


# cos/sin of g*90 degrees, exact
_QUARTER_TURNS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


def rotation_for_group(group: int, input_dim: int) -> np.ndarray:
    """Orthogonal rotation by group*90 degrees acting on the first two coordinates."""
    c, s = _QUARTER_TURNS[group % 4]
    R = np.eye(input_dim)
    R[0, 0], R[0, 1] = c, -s
    R[1, 0], R[1, 1] = s, c
    return R


def partition_covariate_shift(pool: SamplePool, spec: FederationSpec) -> list[ClientDataset]:
    """Label-skew partition, then round-robin group assignment with each group's
    features rotated by a fixed multiple of 90 degrees (group 0 untouched)."""
    if spec.scenario is not Scenario.LABEL_AND_COVARIATE_SHIFT:
        raise ValueError(
            f"scenario must be label_and_covariate_shift, got {spec.scenario.value}"
        )
    base = _partition_by_label_skew(pool, spec)
    out = []
    for ds in base:
        g = ds.client_id % spec.num_clusters
        X = ds.X if g % 4 == 0 else ds.X @ rotation_for_group(g, spec.input_dim).T
        out.append(ClientDataset(ds.client_id, X, ds.y, true_cluster=g))
    return out


def _distinct_permutations(rng: np.random.Generator, k: int, C: int) -> list[np.ndarray]:
    perms = [np.arange(C)]
    seen = {tuple(perms[0])}
    while len(perms) < k:
        p = rng.permutation(C)
        if tuple(p) not in seen:
            seen.add(tuple(p))
            perms.append(p)
    return perms


def partition_concept_shift(pool: SamplePool, spec: FederationSpec) -> list[ClientDataset]:
    """IID split, then group g relabels through its own permutation (group 0
    keeps the identity)."""
    if spec.scenario is not Scenario.CONCEPT_SHIFT:
        raise ValueError(f"scenario must be concept_shift, got {spec.scenario.value}")
    if spec.num_clusters > math.factorial(spec.num_classes):
        raise ValueError("more clusters than distinct label permutations")
    rng = rng_from(spec.seed, _IID)
    perms = _distinct_permutations(rng, spec.num_clusters, spec.num_classes)

    sizes = spec.client_sizes()
    if int(sizes.sum()) > pool.size:
        raise PoolExhaustedError(-1, int(sizes.sum()), pool.size)
    order = rng.permutation(pool.size)
    clients = []
    start = 0
    for i in range(spec.num_clients):
        idx = order[start : start + int(sizes[i])]
        start += int(sizes[i])
        g = i % spec.num_clusters
        clients.append(
            ClientDataset(i, pool.X[idx], perms[g][pool.y[idx]], true_cluster=g)
        )
    return clients


def generate_federation(spec: FederationSpec) -> list[ClientDataset]:
    """Pool generation plus the partition for the spec's scenario."""
    pool = generate_base_task(spec)
    if spec.scenario is Scenario.LABEL_SHIFT:
        return partition_label_shift(pool, spec)
    if spec.scenario is Scenario.LABEL_AND_COVARIATE_SHIFT:
        return partition_covariate_shift(pool, spec)
    return partition_concept_shift(pool, spec)


def train_val_split(
    data: ClientDataset, train_fraction: float, seed: int
) -> tuple[ClientDataset, ClientDataset]:
    """Seeded shuffle then split; both parts non-empty, union equals the input."""
    if data.n < 2:
        raise ValueError("need at least 2 samples to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = rng_from(seed, _SPLIT)
    order = rng.permutation(data.n)
    n_train = min(max(int(round(train_fraction * data.n)), 1), data.n - 1)
    tr, va = order[:n_train], order[n_train:]
    make = lambda idx: ClientDataset(
        data.client_id, data.X[idx], data.y[idx], true_cluster=data.true_cluster
    )
    return make(tr), make(va)


def dump_jsonl(clients: list[ClientDataset], path: str | Path) -> None:
    """One record per sample: {client, x, y, cluster}. Lossless for float64
    (json uses shortest round-trip decimal repr)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ds in clients:
            for xi, yi in zip(ds.X, ds.y):
                rec = {
                    "client": ds.client_id,
                    "x": [float(v) for v in xi],
                    "y": int(yi),
                    "cluster": None if ds.true_cluster is None else int(ds.true_cluster),
                }
                f.write(json.dumps(rec) + "\n")


def load_jsonl(path: str | Path) -> list[ClientDataset]:
    by_client: dict[int, dict] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            entry = by_client.setdefault(
                int(rec["client"]), {"X": [], "y": [], "cluster": rec.get("cluster")}
            )
            entry["X"].append(rec["x"])
            entry["y"].append(rec["y"])
    return [
        ClientDataset(
            cid,
            np.array(entry["X"], dtype=np.float64),
            np.array(entry["y"], dtype=np.int64),
            true_cluster=entry["cluster"],
        )
        for cid, entry in sorted(by_client.items())
    ]
