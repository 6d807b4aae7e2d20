"""Federated training loop, baselines and metric emission.

Each round: every client trains locally from the model it currently holds
(round 1 starts from one shared init), the server aggregates under the
configured rule, and clients receive their round models. Validation
accuracy is measured per user on a held-out split of that user's own data.
The whole loop is a pure function of the config's seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import (
    StreamPlan,
    fedavg_aggregate,
    kmeans_streams,
    select_num_streams,
    streamed_aggregate,
    user_centric_aggregate,
)
from .config import AUTO_STREAMS, ExperimentConfig, config_digest
from .datagen import ClientDataset, generate_federation, train_val_split
from .models import (
    ModelSpec,
    ParameterVector,
    cross_entropy_loss,
    init_parameters,
    local_train,
    predict_proba,
)
from .seeds import rng_from
from .similarity import MixingMatrix, SimilarityRoundResult, similarity_round

MAX_AUTO_STREAM_CANDIDATES = 10


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    per_user_val_accuracy: np.ndarray
    per_user_train_loss: np.ndarray

    def __post_init__(self) -> None:
        acc = np.array(self.per_user_val_accuracy, dtype=np.float64)
        loss = np.array(self.per_user_train_loss, dtype=np.float64)
        if acc.ndim != 1 or acc.shape != loss.shape:
            raise ValueError("per-user metric vectors must be 1-D and aligned")
        if np.any(acc < 0) or np.any(acc > 1):
            raise ValueError("accuracies must lie in [0, 1]")
        acc.setflags(write=False)
        loss.setflags(write=False)
        object.__setattr__(self, "per_user_val_accuracy", acc)
        object.__setattr__(self, "per_user_train_loss", loss)

    @property
    def mean_val_accuracy(self) -> float:
        return float(self.per_user_val_accuracy.mean())

    @property
    def worst_user_accuracy(self) -> float:
        return float(self.per_user_val_accuracy.min())


@dataclass(frozen=True)
class ExperimentResult:
    metrics: list[RoundMetrics]
    mixing: SimilarityRoundResult | None
    plan: StreamPlan | None
    final_models: list[ParameterVector]
    model_history: list[list[ParameterVector]] | None = None

    @property
    def final(self) -> RoundMetrics:
        return self.metrics[-1]


def evaluate(theta: ParameterVector, spec: ModelSpec, data: ClientDataset) -> float:
    """Fraction of argmax-correct predictions; ties resolve to the lowest class."""
    probs = predict_proba(theta, spec, data.X)
    return float(np.mean(probs.argmax(axis=1) == data.y))


def model_dispersion(models: Sequence[ParameterVector], labels: Sequence[int]) -> float:
    """Mean pairwise parameter distance between users sharing a label.

    Diagnostic for how tightly personalized models of same-cluster users
    travel together; returns 0 when no same-label pair exists.
    """
    total, count = 0.0, 0
    labels = list(labels)
    for i in range(len(models)):
        for j in range(i + 1, len(models)):
            if labels[i] == labels[j]:
                total += float(np.linalg.norm(models[i].values - models[j].values))
                count += 1
    return total / count if count else 0.0


def _split_seed(cfg: ExperimentConfig, client: int) -> int:
    return int(rng_from(cfg.seeds.data, 500 + client).integers(0, 2**31 - 1))


def _train_seed(cfg: ExperimentConfig, round_idx: int, client: int) -> int:
    return int(
        rng_from(cfg.seeds.training, round_idx, client).integers(0, 2**31 - 1)
    )


def _planning_seed(cfg: ExperimentConfig, tag: int) -> int:
    return int(rng_from(cfg.seeds.probe, 900 + tag).integers(0, 2**31 - 1))


def _prepare_clients(
    cfg: ExperimentConfig,
) -> tuple[list[ClientDataset], list[ClientDataset]]:
    clients = generate_federation(cfg.federation)
    train, val = [], []
    for ds in clients:
        tr, va = train_val_split(ds, 1.0 - cfg.val_fraction, _split_seed(cfg, ds.client_id))
        train.append(tr)
        val.append(va)
    return train, val


def _round_metrics(
    round_idx: int,
    models: Sequence[ParameterVector],
    spec: ModelSpec,
    train: Sequence[ClientDataset],
    val: Sequence[ClientDataset],
) -> RoundMetrics:
    acc = [evaluate(theta, spec, va) for theta, va in zip(models, val)]
    loss = [cross_entropy_loss(theta, spec, tr.X, tr.y) for theta, tr in zip(models, train)]
    return RoundMetrics(round_idx, np.array(acc), np.array(loss))


def _resolve_plan(
    cfg: ExperimentConfig, w: MixingMatrix
) -> StreamPlan:
    m = cfg.federation.num_clients
    if cfg.num_streams == AUTO_STREAMS:
        hi = min(m, MAX_AUTO_STREAM_CANDIDATES)
        k = select_num_streams(w, list(range(2, hi + 1)), _planning_seed(cfg, 1))
    else:
        k = int(cfg.num_streams)
    return kmeans_streams(w, k, _planning_seed(cfg, 2))


def _run_rounds(
    cfg: ExperimentConfig,
    train: list[ClientDataset],
    val: list[ClientDataset],
    rule: str,
    w: MixingMatrix | None,
    plan: StreamPlan | None,
    record_models: bool,
) -> tuple[list[RoundMetrics], list[list[ParameterVector]] | None, list[ParameterVector]]:
    m = cfg.federation.num_clients
    ns = [tr.n for tr in train]
    theta0 = init_parameters(cfg.model, cfg.seeds.init)
    current = [theta0] * m

    metrics = [_round_metrics(0, current, cfg.model, train, val)]
    history: list[list[ParameterVector]] | None = [] if record_models else None
    for t in range(1, cfg.rounds + 1):
        locals_ = [
            local_train(
                current[i], cfg.model, train[i].X, train[i].y, cfg.optimizer,
                _train_seed(cfg, t, i),
            )
            for i in range(m)
        ]
        if rule == "local":
            current = locals_
        elif rule == "fedavg":
            shared = fedavg_aggregate(locals_, ns)
            current = [shared] * m
        elif rule == "user_centric":
            current = user_centric_aggregate(locals_, w)
        else:  # streamed
            streams = streamed_aggregate(locals_, plan)
            current = [streams[plan.assignment[i]] for i in range(m)]
        metrics.append(_round_metrics(t, current, cfg.model, train, val))
        if history is not None:
            history.append(list(current))
    return metrics, history, list(current)


def run_experiment(
    cfg: ExperimentConfig,
    mixing_override: MixingMatrix | None = None,
    record_models: bool = False,
) -> ExperimentResult:
    """Full pipeline: data, optional similarity round and stream planning,
    then cfg.rounds federated rounds under cfg.rule.

    mixing_override skips the similarity round and uses the given matrix
    directly (the FedAvg-degeneration checks inject delta == 0 this way).
    """
    train, val = _prepare_clients(cfg)
    w: MixingMatrix | None = None
    mixing: SimilarityRoundResult | None = None
    plan: StreamPlan | None = None
    if cfg.rule in ("user_centric", "streamed"):
        if mixing_override is not None:
            w = mixing_override
        else:
            mixing = similarity_round(
                train, cfg.model, cfg.variance_batches, cfg.seeds.probe,
                sigma_mode=cfg.sigma_mode,
            )
            w = mixing.w
        if cfg.rule == "streamed":
            plan = _resolve_plan(cfg, w)
    metrics, history, final = _run_rounds(
        cfg, train, val, cfg.rule, w, plan, record_models
    )
    return ExperimentResult(
        metrics=metrics, mixing=mixing, plan=plan, final_models=final,
        model_history=history,
    )


def run_local_baseline(cfg: ExperimentConfig, record_models: bool = False) -> ExperimentResult:
    """Every user trains alone for rounds * local_epochs epochs; no communication."""
    return run_experiment(replace(cfg, rule="local"), record_models=record_models)


def run_fedavg_baseline(cfg: ExperimentConfig, record_models: bool = False) -> ExperimentResult:
    return run_experiment(replace(cfg, rule="fedavg"), record_models=record_models)


def oracle_plan(train: Sequence[ClientDataset]) -> StreamPlan:
    """Per-true-cluster FedAvg weights as a stream plan."""
    clusters = [ds.true_cluster for ds in train]
    if any(c is None for c in clusters):
        raise ValueError("oracle baseline needs ground-truth cluster labels")
    ids = sorted(set(clusters))
    remap = {c: k for k, c in enumerate(ids)}
    assignment = np.array([remap[c] for c in clusters], dtype=np.int64)
    ns = np.array([ds.n for ds in train], dtype=np.float64)
    centroids = np.zeros((len(ids), len(train)))
    for k in range(len(ids)):
        members = assignment == k
        centroids[k, members] = ns[members] / ns[members].sum()
    return StreamPlan(len(ids), assignment, centroids)


def run_oracle_baseline(cfg: ExperimentConfig, record_models: bool = False) -> ExperimentResult:
    """Independent FedAvg inside each ground-truth cluster, merged per user."""
    train, val = _prepare_clients(cfg)
    plan = oracle_plan(train)
    metrics, history, final = _run_rounds(
        cfg, train, val, "streamed", None, plan, record_models
    )
    return ExperimentResult(
        metrics=metrics, mixing=None, plan=plan, final_models=final,
        model_history=history,
    )


def write_metrics_csv(path: str | Path, metrics: Sequence[RoundMetrics]) -> None:
    """Long-form CSV `round,user,val_acc,train_loss`, shortest round-trip floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("round,user,val_acc,train_loss\n")
        for rm in metrics:
            for user in range(len(rm.per_user_val_accuracy)):
                f.write(
                    f"{rm.round},{user},"
                    f"{float(rm.per_user_val_accuracy[user])!r},"
                    f"{float(rm.per_user_train_loss[user])!r}\n"
                )


def read_mean_curve_csv(path: str | Path) -> list["MeanAccuracyPoint"]:
    """Per-round mean accuracy recovered from a metrics CSV."""
    sums: dict[int, list[float]] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        if header[:3] != ["round", "user", "val_acc"]:
            raise ValueError(f"unrecognized metrics header: {header}")
        for line in f:
            parts = line.rstrip("\n").split(",")
            sums.setdefault(int(parts[0]), []).append(float(parts[2]))
    return [
        MeanAccuracyPoint(r, float(np.mean(accs))) for r, accs in sorted(sums.items())
    ]


@dataclass(frozen=True)
class MeanAccuracyPoint:
    """Minimal per-round point accepted by comm.timed_curve."""

    round: int
    mean_val_accuracy: float


def summary_dict(cfg: ExperimentConfig, metrics: Sequence[RoundMetrics]) -> dict:
    return {
        "mean_curve": [rm.mean_val_accuracy for rm in metrics],
        "worst_user_final": metrics[-1].worst_user_accuracy,
        "config_digest": config_digest(cfg),
    }


def write_summary_json(
    path: str | Path, cfg: ExperimentConfig, metrics: Sequence[RoundMetrics]
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary_dict(cfg, metrics), f, indent=2, sort_keys=True)
        f.write("\n")
