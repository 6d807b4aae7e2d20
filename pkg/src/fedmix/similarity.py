"""Pre-training similarity round.

The server broadcasts one probe model; every client reports the mean
gradient of its full dataset at that model (its fingerprint) and a
batch-split estimate of its gradient variance. Pairwise squared distances
between fingerprints, scaled by the variance estimates, feed a normalized
exponential that yields one row-stochastic mixing vector per client:

    w[i, j]  proportional to  (n_j / n_i) * exp(-delta[i, j] / (2 s_i s_j))

With all deltas zero the rule reduces exactly to FedAvg's n_j / sum(n)
weighting; as a client's variance scale shrinks its row concentrates on
itself (pure local learning).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import ClientDataset
from .models import ModelSpec, ParameterVector, init_parameters, loss_and_gradient
from .seeds import rng_from

ROW_SUM_TOL = 1e-9
SIGMA_SQ_FLOOR = 1e-12

# modes for turning the raw variance estimate into the s_i scale factor
SIGMA_MODES = ("std", "variance")


@dataclass(frozen=True)
class GradientFingerprint:
    """Mean gradient of one client's full dataset at the shared probe model."""

    client_id: int
    full_gradient: np.ndarray
    n: int

    def __post_init__(self) -> None:
        g = np.array(self.full_gradient, dtype=np.float64)
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise ValueError("fingerprint gradient must be a finite 1-D vector")
        g.setflags(write=False)
        object.__setattr__(self, "full_gradient", g)
        if self.n < 1:
            raise ValueError("fingerprint sample count must be >= 1")


@dataclass(frozen=True)
class GradientVarianceEstimate:
    client_id: int
    sigma_sq: float
    num_batches: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma_sq) or self.sigma_sq < 0:
            raise ValueError(f"sigma_sq must be finite and >= 0, got {self.sigma_sq}")
        if self.num_batches < 1:
            raise ValueError("num_batches must be >= 1")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric, zero-diagonal matrix of squared fingerprint distances."""

    delta: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.delta, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"delta must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("delta entries must be finite and >= 0")
        if np.any(d != d.T):
            raise ValueError("delta must be exactly symmetric")
        if np.any(np.diag(d) != 0.0):
            raise ValueError("delta diagonal must be zero")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)

    @property
    def num_clients(self) -> int:
        return self.delta.shape[0]


@dataclass(frozen=True)
class MixingMatrix:
    """Row-stochastic collaboration coefficients; row i personalizes user i."""

    w: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"mixing matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("mixing weights must be finite and >= 0")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("mixing matrix rows must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def num_clients(self) -> int:
        return self.w.shape[0]


def probe_gradients(
    theta_hat: ParameterVector, spec: ModelSpec, clients: list[ClientDataset]
) -> list[GradientFingerprint]:
    """Full-dataset mean gradient per client at the common probe model."""
    out = []
    for ds in clients:
        _, grad = loss_and_gradient(theta_hat, spec, ds.X, ds.y)
        out.append(GradientFingerprint(ds.client_id, grad.values, ds.n))
    return out


def pairwise_delta(fingerprints: list[GradientFingerprint]) -> SimilarityMatrix:
    """delta[i, j] = squared Euclidean distance between fingerprints i and j.

    The upper triangle is computed once and mirrored, so symmetry is exact.
    """
    m = len(fingerprints)
    if m < 2:
        raise ValueError("need at least 2 fingerprints")
    dims = {fp.full_gradient.size for fp in fingerprints}
    if len(dims) != 1:
        raise ValueError(f"fingerprints have mismatched lengths: {sorted(dims)}")
    delta = np.zeros((m, m))
    for i in range(m):
        gi = fingerprints[i].full_gradient
        for j in range(i + 1, m):
            diff = gi - fingerprints[j].full_gradient
            d = float(diff @ diff)
            delta[i, j] = d
            delta[j, i] = d
    return SimilarityMatrix(delta)


def estimate_sigma_sq(
    theta_hat: ParameterVector,
    spec: ModelSpec,
    data: ClientDataset,
    num_batches: int,
    seed: int,
) -> GradientVarianceEstimate:
    """Gradient variance proxy: mean squared distance between per-batch mean
    gradients (seeded shuffle, K near-equal batches) and the full-data mean
    gradient, all evaluated at the probe model."""
    if num_batches < 1:
        raise ValueError("num_batches must be >= 1")
    if num_batches > data.n:
        raise ValueError(f"num_batches {num_batches} exceeds sample count {data.n}")
    _, full = loss_and_gradient(theta_hat, spec, data.X, data.y)
    order = rng_from(seed).permutation(data.n)
    total = 0.0
    for chunk in np.array_split(order, num_batches):
        # canonical sample order inside the batch: K = 1 then reproduces the
        # full-data gradient bit for bit, making sigma_sq exactly zero
        chunk = np.sort(chunk)
        _, g = loss_and_gradient(theta_hat, spec, data.X[chunk], data.y[chunk])
        diff = g.values - full.values
        total += float(diff @ diff)
    return GradientVarianceEstimate(data.client_id, total / num_batches, num_batches)


def mixing_matrix(
    deltas: SimilarityMatrix,
    sigmas: list[GradientVarianceEstimate],
    ns: list[int],
    sigma_mode: str = "std",
) -> MixingMatrix:
    """Normalized-exponential mixing weights from deltas, variance scales and
    dataset sizes.

    Each row is computed with a max-shift before exponentiating, so huge
    delta/sigma ratios saturate instead of underflowing the whole row. The
    n_j factor stays outside the exponential, which makes the delta == 0
    degeneration to FedAvg weights exact.
    """
    m = deltas.num_clients
    if len(sigmas) != m or len(ns) != m:
        raise ValueError("deltas, sigmas and ns must agree on the number of clients")
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
    sigma_sq = np.array([s.sigma_sq for s in sigmas], dtype=np.float64)
    if np.any(sigma_sq <= 0):
        raise ValueError(
            "sigma_sq must be strictly positive; apply the variance floor "
            f"(e.g. {SIGMA_SQ_FLOOR}) before building the mixing matrix"
        )
    n = np.array(ns, dtype=np.float64)
    if np.any(~np.isfinite(n)) or np.any(n <= 0):
        raise ValueError("sample counts must be positive")

    scale = np.sqrt(sigma_sq) if sigma_mode == "std" else sigma_sq
    exponents = -deltas.delta / (2.0 * np.outer(scale, scale))
    if np.any(np.isnan(exponents)):
        raise ValueError("NaN in mixing exponents")
    w = np.empty((m, m))
    for i in range(m):
        row = n * np.exp(exponents[i] - exponents[i].max())
        w[i] = row / row.sum()
    return MixingMatrix(w)


@dataclass(frozen=True)
class SimilarityRoundResult:
    """Mixing matrix plus the intermediates the server computed on the way."""

    w: MixingMatrix
    delta: SimilarityMatrix
    sigma_sq: np.ndarray
    ns: np.ndarray
    probe_seed: int

    def to_json_dict(self) -> dict:
        return {
            "m": self.w.num_clients,
            "delta": [[float(v) for v in row] for row in self.delta.delta],
            "sigma_sq": [float(v) for v in self.sigma_sq],
            "w": [[float(v) for v in row] for row in self.w.w],
        }


def _client_split_seed(seed: int, index: int) -> int:
    """Stable per-client child seed for the variance batch splits."""
    return int(rng_from(seed, 100 + index).integers(0, 2**31 - 1))


def similarity_round(
    clients: list[ClientDataset],
    spec: ModelSpec,
    num_batches: int,
    seed: int,
    sigma_mode: str = "std",
    sigma_sq_floor: float = SIGMA_SQ_FLOOR,
) -> SimilarityRoundResult:
    """The special round before training: probe broadcast, fingerprints,
    variance estimates, then the mixing matrix.

    Degenerate variance estimates (duplicated samples, K=1) are floored at
    sigma_sq_floor so the exponential stays defined.
    """
    theta_hat = init_parameters(spec, seed)
    fps = probe_gradients(theta_hat, spec, clients)
    delta = pairwise_delta(fps)
    sigmas = []
    for k, ds in enumerate(clients):
        est = estimate_sigma_sq(theta_hat, spec, ds, num_batches, _client_split_seed(seed, k))
        if est.sigma_sq < sigma_sq_floor:
            est = GradientVarianceEstimate(est.client_id, sigma_sq_floor, est.num_batches)
        sigmas.append(est)
    ns = [ds.n for ds in clients]
    w = mixing_matrix(delta, sigmas, ns, sigma_mode=sigma_mode)
    return SimilarityRoundResult(
        w=w,
        delta=delta,
        sigma_sq=np.array([s.sigma_sq for s in sigmas]),
        ns=np.array(ns, dtype=np.int64),
        probe_seed=seed,
    )
