"""Brute-forceable check of the weighted-ERM risk bound.

Everything here is exact by enumeration: the hypothesis class is a finite
set of 1-D threshold classifiers (VC dimension 1), distributions are
discrete with known probabilities, and the loss is 0-1 (symmetric, bounded
by 1, triangular). The bound under test is

    B * sqrt(sum_j w_j^2 / n_j)
      * ( sqrt( (2 d / N) * ln(e N / d) ) + sqrt( ln(2 / delta) ) )
    + 2 * sum_j w_j * disc(P_i, P_j)
    + 2 * lam

with N the total sample count, d the VC dimension, disc the discrepancy
distance over the class, and lam the smallest sum of true risks under the
target and the w-mixture. Monte Carlo runs draw datasets, fit the weighted
ERM, and count how often its excess risk on the target exceeds the bound;
validity means the violation rate stays below delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeds import rng_from


@dataclass(frozen=True)
class FiniteHypothesisClass:
    """Threshold classifiers on the line: predict 1[x >= tau] (direction +1)
    or 1[x < tau] (direction -1) for tau in a finite grid."""

    hypotheses: tuple[tuple[float, int], ...]
    vc_dim: int = 1

    def __post_init__(self) -> None:
        if len(self.hypotheses) == 0:
            raise ValueError("hypothesis class must be non-empty")
        if any(d not in (-1, 1) for _, d in self.hypotheses):
            raise ValueError("direction must be +1 or -1")
        if self.vc_dim < 1:
            raise ValueError("vc_dim must be >= 1")

    def __len__(self) -> int:
        return len(self.hypotheses)

    def predictions(self, xs: np.ndarray) -> np.ndarray:
        """(num_hypotheses, num_points) 0/1 prediction matrix."""
        xs = np.asarray(xs, dtype=np.float64)
        taus = np.array([t for t, _ in self.hypotheses])
        dirs = np.array([d for _, d in self.hypotheses])
        geq = (xs[None, :] >= taus[:, None]).astype(np.int64)
        return np.where(dirs[:, None] == 1, geq, 1 - geq)


def threshold_class(taus: Sequence[float]) -> FiniteHypothesisClass:
    """Both orientations for every threshold in the grid."""
    hyps = tuple((float(t), d) for t in taus for d in (1, -1))
    return FiniteHypothesisClass(hyps, vc_dim=1)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution over (x, y) pairs with binary labels."""

    xs: np.ndarray
    ys: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        xs = np.array(self.xs, dtype=np.float64)
        ys = np.array(self.ys, dtype=np.int64)
        probs = np.array(self.probs, dtype=np.float64)
        if not (xs.shape == ys.shape == probs.shape) or xs.ndim != 1 or len(xs) == 0:
            raise ValueError("xs, ys, probs must be equal-length non-empty vectors")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        if not np.all(np.isin(ys, (0, 1))):
            raise ValueError("labels must be binary")
        for a in (xs, ys, probs):
            a.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "probs", probs)

    @property
    def support_size(self) -> int:
        return len(self.xs)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.choice(self.support_size, size=n, p=self.probs)
        return self.xs[idx], self.ys[idx]


def true_risks(fc: FiniteHypothesisClass, p: DiscreteDistribution) -> np.ndarray:
    """Exact 0-1 risk of every hypothesis under p."""
    preds = fc.predictions(p.xs)
    return (preds != p.ys[None, :]).astype(np.float64) @ p.probs


def discrepancy_distance(
    p: DiscreteDistribution, q: DiscreteDistribution, fc: FiniteHypothesisClass
) -> float:
    """Exact discrepancy over the class: the largest gap, across ordered
    hypothesis pairs (f, f'), between the two x-marginals' expected
    disagreement of f and f'."""
    ap = fc.predictions(p.xs)
    aq = fc.predictions(q.xs)
    dis_p = (ap[:, None, :] != ap[None, :, :]).astype(np.float64) @ p.probs
    dis_q = (aq[:, None, :] != aq[None, :, :]).astype(np.float64) @ q.probs
    return float(np.abs(dis_p - dis_q).max())


def weighted_erm(
    fc: FiniteHypothesisClass,
    datasets: Sequence[tuple[np.ndarray, np.ndarray]],
    weights: Sequence[float],
) -> int:
    """Index of the hypothesis minimizing the weighted empirical 0-1 loss
    sum_j (w_j / n_j) * sum_{(x,y) in D_j} 1[f(x) != y]; ties pick the
    lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(datasets) or np.any(w < 0):
        raise ValueError("need one non-negative weight per dataset")
    if w.sum() == 0:
        raise ValueError("all-zero effective weight")
    losses = np.zeros(len(fc))
    for wj, (xs, ys) in zip(w, datasets):
        if wj == 0:
            continue
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.int64)
        if len(xs) == 0:
            raise ValueError("dataset with positive weight is empty")
        preds = fc.predictions(xs)
        losses += (wj / len(xs)) * (preds != ys[None, :]).sum(axis=1)
    return int(np.argmin(losses))


def mixture(
    distributions: Sequence[DiscreteDistribution], weights: Sequence[float]
) -> DiscreteDistribution:
    """The w-weighted mixture, concatenating scaled supports."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(distributions) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a simplex vector over the distributions")
    xs = np.concatenate([p.xs for p in distributions])
    ys = np.concatenate([p.ys for p in distributions])
    probs = np.concatenate([wj * p.probs for wj, p in zip(w, distributions)])
    # renormalize away accumulated rounding so the invariant holds exactly
    return DiscreteDistribution(xs, ys, probs / probs.sum())


def lambda_term(
    fc: FiniteHypothesisClass,
    p_target: DiscreteDistribution,
    p_mixture: DiscreteDistribution,
) -> float:
    """Smallest attainable sum of true risks under the target and the mixture."""
    return float((true_risks(fc, p_target) + true_risks(fc, p_mixture)).min())


@dataclass(frozen=True)
class BoundInputs:
    loss_bound: float
    delta: float
    weights: np.ndarray
    ns: np.ndarray
    discrepancies: np.ndarray
    lam: float

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        ns = np.array(self.ns, dtype=np.int64)
        disc = np.array(self.discrepancies, dtype=np.float64)
        if self.loss_bound <= 0:
            raise ValueError("loss bound must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must form a simplex vector")
        if np.any(ns < 1) or len(ns) != len(w) or len(disc) != len(w):
            raise ValueError("ns/discrepancies must align with weights")
        if np.any(disc < 0):
            raise ValueError("discrepancies must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        for a in (w, ns, disc):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ns", ns)
        object.__setattr__(self, "discrepancies", disc)


def theorem_bound(inputs: BoundInputs, total_n: int, vc_dim: int) -> float:
    """The excess-risk bound, evaluated exactly as stated."""
    if total_n < 1 or vc_dim < 1:
        raise ValueError("total_n and vc_dim must be >= 1")
    w, ns = inputs.weights, inputs.ns
    est_scale = float(np.sqrt(np.sum(w * w / ns)))
    complexity = np.sqrt((2.0 * vc_dim / total_n) * np.log(np.e * total_n / vc_dim))
    confidence = np.sqrt(np.log(2.0 / inputs.delta))
    estimation = inputs.loss_bound * est_scale * (complexity + confidence)
    transfer = 2.0 * float(np.sum(w * inputs.discrepancies))
    return float(estimation + transfer + 2.0 * inputs.lam)


@dataclass(frozen=True)
class BoundValidation:
    violation_rate: float
    mean_slack: float
    bound: float
    trials: int


def validate_bound(
    fc: FiniteHypothesisClass,
    distributions: Sequence[DiscreteDistribution],
    ns: Sequence[int],
    weights: Sequence[float],
    delta: float,
    trials: int,
    seed: int,
    target_index: int = 0,
) -> BoundValidation:
    """Monte Carlo check that the bound holds with probability >= 1 - delta.

    Per trial: draw n_j samples from each P_j, fit the weighted ERM, and
    compare its exact excess risk on the target against the bound. Trials
    are vectorized through per-support multinomial counts, which is
    equivalent to sampling datasets point by point.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a meaningful rate")
    m = len(distributions)
    w = np.asarray(weights, dtype=np.float64)
    ns_arr = np.asarray(ns, dtype=np.int64)
    if len(w) != m or len(ns_arr) != m:
        raise ValueError("weights and ns must align with distributions")
    if not 0 <= target_index < m:
        raise ValueError("target_index out of range")

    target = distributions[target_index]
    risks_target = true_risks(fc, target)
    r_star = float(risks_target.min())

    # empirical weighted losses, all trials at once
    losses = np.zeros((trials, len(fc)))
    for j, p in enumerate(distributions):
        if w[j] == 0:
            continue
        counts = rng_from(seed, j).multinomial(int(ns_arr[j]), p.probs, size=trials)
        point_loss = (fc.predictions(p.xs) != p.ys[None, :]).astype(np.float64)
        losses += (w[j] / ns_arr[j]) * counts @ point_loss.T
    chosen = losses.argmin(axis=1)
    excess = risks_target[chosen] - r_star

    disc = np.array(
        [discrepancy_distance(target, p, fc) for p in distributions]
    )
    lam = lambda_term(fc, target, mixture(distributions, w))
    inputs = BoundInputs(
        loss_bound=1.0, delta=delta, weights=w, ns=ns_arr, discrepancies=disc, lam=lam
    )
    bound = theorem_bound(inputs, int(ns_arr.sum()), fc.vc_dim)
    return BoundValidation(
        violation_rate=float(np.mean(excess > bound)),
        mean_slack=float(np.mean(bound - excess)),
        bound=bound,
        trials=trials,
    )


def noisy_threshold_distribution(
    boundary: float,
    noise: float,
    support: Sequence[float],
    support_probs: Sequence[float] | None = None,
) -> DiscreteDistribution:
    """Labels 1[x >= boundary] flipped with probability `noise`, spread over
    the given x support (uniform unless probs given). Handy grid builder for
    validation configs."""
    support = np.asarray(support, dtype=np.float64)
    if support_probs is None:
        base = np.full(len(support), 1.0 / len(support))
    else:
        base = np.asarray(support_probs, dtype=np.float64)
        base = base / base.sum()
    if not 0 <= noise <= 0.5:
        raise ValueError("noise must lie in [0, 0.5]")
    clean = (support >= boundary).astype(np.int64)
    xs = np.concatenate([support, support])
    ys = np.concatenate([clean, 1 - clean])
    probs = np.concatenate([base * (1.0 - noise), base * noise])
    keep = probs > 0
    return DiscreteDistribution(xs[keep], ys[keep], probs[keep] / probs[keep].sum())


def default_validation_grid() -> list[dict]:
    """Named bound-validation configurations spanning identical, clustered,
    self-reliant and near-realizable regimes."""
    grid_x = np.linspace(0.05, 0.95, 10)
    fc = threshold_class(np.linspace(0.0, 1.0, 11))

    identical = noisy_threshold_distribution(0.5, 0.1, grid_x)
    low_a = noisy_threshold_distribution(0.35, 0.05, grid_x)
    high_b = noisy_threshold_distribution(0.65, 0.05, grid_x)
    clean_a = noisy_threshold_distribution(0.45, 0.0, grid_x)
    clean_b = noisy_threshold_distribution(0.55, 0.0, grid_x)
    noisy = noisy_threshold_distribution(0.5, 0.3, grid_x)

    return [
        {
            "name": "identical_uniform_w",
            "fc": fc,
            "distributions": [identical, identical, identical],
            "ns": [60, 60, 60],
            "weights": [1 / 3, 1 / 3, 1 / 3],
        },
        {
            "name": "two_groups_self_heavy",
            "fc": fc,
            "distributions": [low_a, low_a, high_b, high_b],
            "ns": [40, 40, 40, 40],
            "weights": [0.45, 0.45, 0.05, 0.05],
        },
        {
            "name": "single_client_weight",
            "fc": fc,
            "distributions": [identical, high_b],
            "ns": [100, 50],
            "weights": [1.0, 0.0],
        },
        {
            "name": "fedavg_weights_skewed_n",
            "fc": fc,
            "distributions": [identical, identical, identical],
            "ns": [20, 60, 120],
            "weights": [0.1, 0.3, 0.6],
        },
        {
            "name": "near_realizable_pair",
            "fc": fc,
            "distributions": [clean_a, clean_b],
            "ns": [30, 30],
            "weights": [0.5, 0.5],
        },
        {
            "name": "heavy_label_noise",
            "fc": fc,
            "distributions": [noisy, noisy],
            "ns": [80, 80],
            "weights": [0.5, 0.5],
        },
    ]
