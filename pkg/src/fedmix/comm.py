"""Round timing model.

A round costs one downlink broadcast per personalized stream, the slowest
client's compute time, then the uplink. Compute times are shifted
exponentials (deterministic when mu is infinite); the expected maximum over
m clients is t_min + H_m / mu with H_m the m-th harmonic number. Uplink
transmissions run on parallel per-user channels by default, each costing
rho * t_dl.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .seeds import rng_from

INFINITE = math.inf

UPLINK_MODES = ("parallel", "serial")


class TimingMode(str, Enum):
    EXPECTED = "expected"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class CommModel:
    """rho = uplink/downlink time ratio; t_dl = seconds per model broadcast;
    compute time per client is t_min + Exp(mu)."""

    rho: float
    t_dl: float
    t_min: float = 0.0
    mu: float = INFINITE
    uplink: str = "parallel"

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.t_dl <= 0:
            raise ValueError(f"t_dl must be > 0, got {self.t_dl}")
        if self.t_min < 0:
            raise ValueError(f"t_min must be >= 0, got {self.t_min}")
        if self.mu <= 0:
            raise ValueError("mu must be > 0 (inf means deterministic compute)")
        if self.uplink not in UPLINK_MODES:
            raise ValueError(f"uplink must be one of {UPLINK_MODES}")


# Fig-3-style system presets (times in units of t_dl = 1)
COMM_PRESETS: dict[str, CommModel] = {
    "wireless_slow": CommModel(rho=4.0, t_dl=1.0, t_min=1.0, mu=1.0),
    "wireless_fast": CommModel(rho=2.0, t_dl=1.0, t_min=1.0, mu=INFINITE),
    "wired": CommModel(rho=1.0, t_dl=1.0, t_min=1.0, mu=INFINITE),
}


def harmonic(m: int) -> float:
    return float(np.sum(1.0 / np.arange(1, m + 1)))


def expected_compute_time(m: int, cm: CommModel) -> float:
    """Expected max of m shifted-exponential compute times: t_min + H_m / mu."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if math.isinf(cm.mu):
        return cm.t_min
    return cm.t_min + harmonic(m) / cm.mu


def sample_compute_times(m: int, cm: CommModel, seed: int) -> np.ndarray:
    """m i.i.d. draws t_min + Exp(mu), via inverse CDF on seeded uniforms."""
    if m < 1:
        raise ValueError("m must be >= 1")
    u = rng_from(seed).random(m)
    if math.isinf(cm.mu):
        return np.full(m, cm.t_min)
    return cm.t_min - np.log1p(-u) / cm.mu


def max_compute_time_samples(m: int, cm: CommModel, seed: int, trials: int) -> np.ndarray:
    """Monte Carlo draws of the round's compute makespan (max over m clients).

    Trials are generated in fixed-size chunks with per-chunk child seeds, so
    the result does not depend on the chunking.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    chunk = 100_000
    out = np.empty(trials)
    pos = 0
    for shard, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        if math.isinf(cm.mu):
            out[pos : pos + size] = cm.t_min
        else:
            u = rng_from(seed, shard).random((size, m))
            out[pos : pos + size] = (cm.t_min - np.log1p(-u) / cm.mu).max(axis=1)
        pos += size
    return out


def round_time(
    m: int,
    num_streams: int,
    cm: CommModel,
    mode: TimingMode = TimingMode.EXPECTED,
    seed: int = 0,
) -> float:
    """Downlink (one broadcast per stream) + compute makespan + uplink."""
    if not 1 <= num_streams <= m:
        raise ValueError(f"num_streams must be in [1, {m}]")
    mode = TimingMode(mode)
    dl = num_streams * cm.t_dl
    if mode is TimingMode.EXPECTED:
        compute = expected_compute_time(m, cm)
    else:
        compute = float(sample_compute_times(m, cm, seed).max())
    ul = cm.rho * cm.t_dl * (m if cm.uplink == "serial" else 1)
    return dl + compute + ul


@dataclass(frozen=True)
class TimedCurve:
    """(time, mean validation accuracy) points, time in units of t_dl."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "points", tuple((float(t), float(a)) for t, a in self.points)
        )
        times = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("curve times must be strictly increasing")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("time_in_tdl,mean_val_acc\n")
            for t, acc in self.points:
                f.write(f"{t!r},{acc!r}\n")


def timed_curve(
    metrics: Sequence,
    m: int,
    num_streams: int,
    cm: CommModel,
    mode: TimingMode = TimingMode.EXPECTED,
    seed: int = 0,
    include_probe_round: bool = False,
) -> TimedCurve:
    """Cumulative round times paired with each round's mean accuracy.

    `metrics` entries need `.round` and `.mean_val_accuracy`. A round-0
    entry (the shared init, evaluated before any communication) sits at
    time 0. When include_probe_round is set, the one-off similarity round
    (single broadcast + compute + upload) is charged before round 1.
    """
    if len(metrics) == 0:
        raise ValueError("no metrics to place on a time axis")
    mode = TimingMode(mode)
    t = 0.0
    probe_pending = include_probe_round
    points = []
    for entry in metrics:
        if entry.round == 0:
            points.append((0.0, float(entry.mean_val_accuracy)))
            continue
        if probe_pending:
            t += round_time(m, 1, cm, mode, seed=rng_child(seed, 0))
            probe_pending = False
        t += round_time(m, num_streams, cm, mode, seed=rng_child(seed, entry.round))
        points.append((t / cm.t_dl, float(entry.mean_val_accuracy)))
    return TimedCurve(tuple(points))


def rng_child(seed: int, index: int) -> int:
    return int(rng_from(seed, 7000 + index).integers(0, 2**31 - 1))
