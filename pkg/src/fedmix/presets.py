"""Desk-scale scenario presets.

Twenty clients, four groups where grouping applies, Dirichlet 0.4 label
skew, learning rate 0.1 with momentum 0.9. Sizes are chosen so a full run
finishes in seconds while the qualitative orderings (collaboration helps
under label shift, hurts FedAvg under concept shift, personalization
recovers the oracle) show up reliably.
"""

from __future__ import annotations

import copy

from .config import ExperimentConfig, config_from_dict

PRESETS: dict[str, dict] = {
    # moderate heterogeneity: one shared task, per-user label priors; many
    # classes and few samples keep local models data-starved so pooling pays
    "label_shift_small": {
        "federation": {
            "num_clients": 20,
            "scenario": "label_shift",
            "input_dim": 16,
            "num_classes": 20,
            "samples_per_client": 150,
            "dirichlet_alpha": 0.4,
            "num_clusters": 1,
        },
        "model": {"architecture": "linear"},
        "optimizer": {
            "learning_rate": 0.1,
            "momentum": 0.9,
            "batch_size": 20,
            "local_epochs": 1,
        },
        "rule": "user_centric",
        "rounds": 30,
        "val_fraction": 0.4,
        "variance_batches": 3,
        "seeds": {"data": 11, "init": 12, "training": 13, "probe": 14},
    },
    # four rotation groups on top of label skew; planar features so a
    # quarter turn moves the whole constellation
    "covariate_shift_small": {
        "federation": {
            "num_clients": 20,
            "scenario": "label_and_covariate_shift",
            "input_dim": 2,
            "num_classes": 10,
            "samples_per_client": 150,
            "dirichlet_alpha": 0.4,
            "num_clusters": 4,
        },
        "model": {"architecture": "linear"},
        "optimizer": {
            "learning_rate": 0.1,
            "momentum": 0.9,
            "batch_size": 30,
            "local_epochs": 1,
        },
        "rule": "user_centric",
        "rounds": 30,
        "val_fraction": 0.2,
        "variance_batches": 10,
        "seeds": {"data": 21, "init": 22, "training": 23, "probe": 24},
    },
    # four label-permutation groups: cross-group collaboration is harmful;
    # enough samples per client that the fingerprints separate the groups
    "concept_shift_small": {
        "federation": {
            "num_clients": 20,
            "scenario": "concept_shift",
            "input_dim": 8,
            "num_classes": 10,
            "samples_per_client": 1500,
            "dirichlet_alpha": 0.4,
            "num_clusters": 4,
        },
        "model": {"architecture": "linear"},
        "optimizer": {
            "learning_rate": 0.1,
            "momentum": 0.9,
            "batch_size": 50,
            "local_epochs": 1,
        },
        "rule": "streamed",
        "num_streams": 4,
        "rounds": 30,
        "val_fraction": 0.2,
        "variance_batches": 10,
        "seeds": {"data": 31, "init": 32, "training": 33, "probe": 34},
    },
}

PRESET_NOTES: dict[str, str] = {
    "label_shift_small": "20 users, Dirichlet(0.4) label skew, per-user mixing",
    "covariate_shift_small": "20 users in 4 rotation groups, per-user mixing",
    "concept_shift_small": "20 users in 4 label-permutation groups, 4 streams",
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {preset_names()}")
    return copy.deepcopy(PRESETS[name])


def preset_config(name: str) -> ExperimentConfig:
    return config_from_dict(preset_dict(name))
