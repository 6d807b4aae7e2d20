"""Experiment configuration: parsing, validation and the canonical digest.

Configs are single JSON documents with an explicit seed block; there is no
environment-variable configuration. The digest is a sha256 over the
canonicalized (sorted-keys) JSON form, so identical configs hash identically
on every platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from .comm import CommModel
from .datagen import FederationSpec
from .models import Activation, Architecture, ModelSpec, OptimizerConfig

RULE_KINDS = ("local", "fedavg", "user_centric", "streamed")
AUTO_STREAMS = "auto"


class ConfigError(ValueError):
    """Invalid configuration; `field` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SeedBlock:
    data: int = 0
    init: int = 1
    training: int = 2
    probe: int = 3

    def __post_init__(self) -> None:
        for name in ("data", "init", "training", "probe"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"seeds.{name}", f"must be a non-negative int, got {v!r}")

    def shifted(self, base: int) -> "SeedBlock":
        """Derived block for a seed override: disjoint child seeds of `base`."""
        return SeedBlock(data=base, init=base + 1, training=base + 2, probe=base + 3)


@dataclass(frozen=True)
class BoundSettings:
    trials: int = 10_000
    deltas: tuple[float, ...] = (0.05, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1000:
            raise ConfigError("bound.trials", f"must be >= 1000, got {self.trials}")
        if len(self.deltas) == 0 or any(not 0 < d < 1 for d in self.deltas):
            raise ConfigError("bound.deltas", "each delta must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("bound.seed", "must be non-negative")
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))


@dataclass(frozen=True)
class ExperimentConfig:
    federation: FederationSpec
    model: ModelSpec
    optimizer: OptimizerConfig
    rule: str
    rounds: int
    seeds: SeedBlock = field(default_factory=SeedBlock)
    val_fraction: float = 0.2
    num_streams: int | str = AUTO_STREAMS
    variance_batches: int = 10
    sigma_mode: str = "std"
    comm: CommModel | None = None
    bound: BoundSettings | None = None

    def __post_init__(self) -> None:
        if self.rule not in RULE_KINDS:
            raise ConfigError("rule", f"must be one of {RULE_KINDS}, got {self.rule!r}")
        if self.rounds < 0:
            raise ConfigError("rounds", f"must be >= 0, got {self.rounds}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction", f"must lie in (0, 1), got {self.val_fraction}")
        if self.variance_batches < 1:
            raise ConfigError("variance_batches", "must be >= 1")
        if self.sigma_mode not in ("std", "variance"):
            raise ConfigError("sigma_mode", "must be 'std' or 'variance'")
        if self.num_streams != AUTO_STREAMS:
            k = self.num_streams
            if not isinstance(k, int) or not 1 <= k <= self.federation.num_clients:
                raise ConfigError(
                    "num_streams",
                    f"must be 'auto' or an int in [1, {self.federation.num_clients}]",
                )
        if self.model.input_dim != self.federation.input_dim:
            raise ConfigError("model.input_dim", "must match federation.input_dim")
        if self.model.num_classes != self.federation.num_classes:
            raise ConfigError("model.num_classes", "must match federation.num_classes")

    def with_seed_override(self, base: int) -> "ExperimentConfig":
        seeds = self.seeds.shifted(base)
        federation = replace(self.federation, seed=seeds.data)
        return replace(self, seeds=seeds, federation=federation)


def _require(d: dict, key: str, section: str) -> object:
    if key not in d:
        raise ConfigError(f"{section}.{key}" if section else key, "missing required field")
    return d[key]


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config", "top-level document must be a JSON object")
    try:
        seeds = SeedBlock(**doc.get("seeds", {}))

        fed = dict(_require(doc, "federation", ""))
        fed.setdefault("seed", seeds.data)
        federation = FederationSpec(**fed)

        mod = dict(_require(doc, "model", ""))
        model = ModelSpec(
            architecture=Architecture(mod.get("architecture", "linear")),
            input_dim=federation.input_dim,
            num_classes=federation.num_classes,
            hidden_dim=int(mod.get("hidden_dim", 0)),
            activation=Activation(mod.get("activation", "relu")),
        )

        optimizer = OptimizerConfig(**_require(doc, "optimizer", ""))

        comm = None
        if "comm" in doc:
            comm_doc = dict(doc["comm"])
            if comm_doc.get("mu") == "inf":
                comm_doc["mu"] = float("inf")
            comm = CommModel(**comm_doc)
        bound = None
        if "bound" in doc:
            bound_doc = dict(doc["bound"])
            if "deltas" in bound_doc:
                bound_doc["deltas"] = tuple(bound_doc["deltas"])
            bound = BoundSettings(**bound_doc)

        num_streams = doc.get("num_streams", AUTO_STREAMS)
        if isinstance(num_streams, str) and num_streams != AUTO_STREAMS:
            raise ConfigError("num_streams", f"must be 'auto' or an int, got {num_streams!r}")

        return ExperimentConfig(
            federation=federation,
            model=model,
            optimizer=optimizer,
            rule=str(_require(doc, "rule", "")),
            rounds=int(_require(doc, "rounds", "")),
            seeds=seeds,
            val_fraction=float(doc.get("val_fraction", 0.2)),
            num_streams=num_streams,
            variance_batches=int(doc.get("variance_batches", 10)),
            sigma_mode=str(doc.get("sigma_mode", "std")),
            comm=comm,
            bound=bound,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError("config", str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical JSON-ready form; the inverse of config_from_dict up to defaults."""
    doc = {
        "federation": {
            "num_clients": cfg.federation.num_clients,
            "scenario": cfg.federation.scenario.value,
            "input_dim": cfg.federation.input_dim,
            "num_classes": cfg.federation.num_classes,
            "samples_per_client": list(cfg.federation.samples_per_client)
            if isinstance(cfg.federation.samples_per_client, tuple)
            else cfg.federation.samples_per_client,
            "dirichlet_alpha": cfg.federation.dirichlet_alpha,
            "num_clusters": cfg.federation.num_clusters,
            "seed": cfg.federation.seed,
            "pool_oversample": cfg.federation.pool_oversample,
        },
        "model": {
            "architecture": cfg.model.architecture.value,
            "hidden_dim": cfg.model.hidden_dim,
            "activation": cfg.model.activation.value,
        },
        "optimizer": {
            "learning_rate": cfg.optimizer.learning_rate,
            "momentum": cfg.optimizer.momentum,
            "batch_size": cfg.optimizer.batch_size,
            "local_epochs": cfg.optimizer.local_epochs,
        },
        "rule": cfg.rule,
        "rounds": cfg.rounds,
        "seeds": {
            "data": cfg.seeds.data,
            "init": cfg.seeds.init,
            "training": cfg.seeds.training,
            "probe": cfg.seeds.probe,
        },
        "val_fraction": cfg.val_fraction,
        "num_streams": cfg.num_streams,
        "variance_batches": cfg.variance_batches,
        "sigma_mode": cfg.sigma_mode,
    }
    if cfg.comm is not None:
        doc["comm"] = {
            "rho": cfg.comm.rho,
            "t_dl": cfg.comm.t_dl,
            "t_min": cfg.comm.t_min,
            "mu": "inf" if cfg.comm.mu == float("inf") else cfg.comm.mu,
            "uplink": cfg.comm.uplink,
        }
    if cfg.bound is not None:
        doc["bound"] = {
            "trials": cfg.bound.trials,
            "deltas": list(cfg.bound.deltas),
            "seed": cfg.bound.seed,
        }
    return doc


def config_digest(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
