"""Synthetic datasets with known archetypes, and archetype matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (
    DataMatrix,
    Domain,
    DomainMismatch,
    InvalidConfig,
    ModelKind,
    PAAError,
    ShapeMismatch,
    StochasticMatrix,
    derive_rng,
)

# Generators draw from their own stream so a dataset seed never collides
# with the restart streams of a fit using the same integer seed.
_SIMULATION_STREAM = 0x5EED


class DimensionTooSmall(PAAError):
    pass


class UnsupportedDimension(PAAError):
    pass


@dataclass(frozen=True)
class SyntheticDataset:
    true_archetypes: np.ndarray
    true_h: StochasticMatrix
    x: DataMatrix
    kind: ModelKind
    gen_config: dict = field(default_factory=dict)

    def __post_init__(self):
        d, k = self.true_archetypes.shape
        if self.true_h.shape != (k, self.x.cols) or self.x.rows != d:
            raise ShapeMismatch("inconsistent synthetic dataset shapes")


def _dirichlet_columns(rng, alpha: float, k: int, n: int) -> np.ndarray:
    h = rng.dirichlet(np.full(k, float(alpha)), size=n).T
    # tiny alphas can leave columns that sum to 1 only up to rounding
    return h / h.sum(axis=0)


def gen_binary(seed: int, K: int = 6, d: int = 10, n: int = 100, p_s: float = 0.3,
               alpha: float = 0.4) -> SyntheticDataset:
    """Bernoulli(p_s) archetypes; observations Bernoulli(E h) with
    h ~ Dirichlet(alpha)."""
    if K < 1 or d < 1 or n < 1 or alpha <= 0 or not 0 <= p_s <= 1:
        raise InvalidConfig("gen_binary needs K, d, n >= 1, alpha > 0, p_s in [0, 1]")
    rng = derive_rng(seed, _SIMULATION_STREAM)
    arche = rng.binomial(1, p_s, size=(d, K)).astype(float)
    h = _dirichlet_columns(rng, alpha, K, n)
    probs = np.clip(arche @ h, 0.0, 1.0)
    x = rng.binomial(1, probs).astype(float)
    cfg = dict(kind="binary", seed=int(seed), K=K, d=d, n=n, alpha=alpha, p_s=p_s)
    return SyntheticDataset(arche, StochasticMatrix(h), DataMatrix(x, Domain.BINARY),
                            ModelKind.BERNOULLI, cfg)


def gen_poisson(seed: int, K: int = 6, d: int = 12, n: int = 500, rate_max: int = 10,
                alpha: float = 0.4) -> SyntheticDataset:
    """One all-zero archetype, one with every rate drawn from
    Uniform{1..rate_max}, the rest with two such rates on disjoint
    coordinate pairs; observations Poisson(E h), h ~ Dirichlet(alpha)."""
    if K < 2:
        raise InvalidConfig("gen_poisson needs K >= 2")
    if d < 2 * (K - 2):
        raise DimensionTooSmall(
            f"d={d} cannot host {K - 2} disjoint coordinate pairs (need d >= {2 * (K - 2)})")
    if n < 1 or rate_max < 1 or alpha <= 0:
        raise InvalidConfig("gen_poisson needs n >= 1, rate_max >= 1, alpha > 0")
    rng = derive_rng(seed, _SIMULATION_STREAM)
    arche = np.zeros((d, K))
    arche[:, 1] = rng.integers(1, rate_max + 1, size=d)
    coords = rng.permutation(d)[: 2 * (K - 2)].reshape(K - 2, 2)
    for j, pair in enumerate(coords, start=2):
        arche[pair, j] = rng.integers(1, rate_max + 1, size=2)
    h = _dirichlet_columns(rng, alpha, K, n)
    x = rng.poisson(arche @ h).astype(float)
    cfg = dict(kind="poisson", seed=int(seed), K=K, d=d, n=n, alpha=alpha,
               rate_max=rate_max)
    return SyntheticDataset(arche, StochasticMatrix(h),
                            DataMatrix(x, Domain.NONNEG_INT), ModelKind.POISSON, cfg)


def simplex_circle(K: int, shrink: float = 0.95) -> np.ndarray:
    """``K`` equidistant points on a circle in the 2-simplex, 3 x K.

    The circle is centred at the barycentre with radius ``shrink`` times
    the inscribed radius ``1/sqrt(6)``; the first point lies toward the
    first vertex.
    """
    center = np.full(3, 1.0 / 3.0)
    u = np.array([2.0, -1.0, -1.0]) / np.sqrt(6.0)
    v = np.array([0.0, 1.0, -1.0]) / np.sqrt(2.0)
    radius = shrink / np.sqrt(6.0)
    angles = 2.0 * np.pi * np.arange(K) / K
    pts = center[:, None] + radius * (np.outer(u, np.cos(angles)) + np.outer(v, np.sin(angles)))
    return pts / pts.sum(axis=0)


def gen_multinomial(seed: int, K: int = 5, d: int = 3, n: int = 500,
                    count_min: int = 1000, count_max: int = 2000,
                    alpha: float = 0.5) -> SyntheticDataset:
    """Archetypes on a circle inside the 2-simplex; observation ``i`` is
    Multinomial(n_i, P h_i) with n_i ~ Uniform{count_min..count_max}."""
    if d != 3:
        raise UnsupportedDimension(f"the circle construction needs d = 3, got d={d}")
    if K < 3:
        raise InvalidConfig("gen_multinomial needs K >= 3")
    if not 1 <= count_min <= count_max or n < 1 or alpha <= 0:
        raise InvalidConfig("gen_multinomial needs 1 <= count_min <= count_max, n >= 1, alpha > 0")
    rng = derive_rng(seed, _SIMULATION_STREAM)
    arche = simplex_circle(K)
    h = _dirichlet_columns(rng, alpha, K, n)
    probs = arche @ h
    probs = probs / probs.sum(axis=0)
    totals = rng.integers(count_min, count_max + 1, size=n)
    x = np.stack([rng.multinomial(totals[i], probs[:, i]) for i in range(n)], axis=1)
    cfg = dict(kind="multinomial", seed=int(seed), K=K, d=d, n=n, alpha=alpha,
               count_min=count_min, count_max=count_max)
    return SyntheticDataset(arche, StochasticMatrix(h),
                            DataMatrix(x.astype(float), Domain.COMPOSITION),
                            ModelKind.MULTINOMIAL, cfg)


# ---------------------------------------------------------------------------
# matching


@dataclass(frozen=True)
class MatchResult:
    assignment: List[Optional[int]]
    distances: np.ndarray
    matched_count: int

    def matched_distances(self) -> List[float]:
        return [float(self.distances[r, t])
                for r, t in enumerate(self.assignment) if t is not None]


def binarize(values, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(values, dtype=float) >= threshold).astype(float)


def jaccard_distance(a, b) -> float:
    """``1 - |a & b| / |a | b|`` for binary vectors; two empty sets are
    at distance 0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return 1.0 - np.count_nonzero(a & b) / union


def distance_matrix(recovered, truth, metric: str) -> np.ndarray:
    recovered = np.asarray(recovered, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recovered.ndim != 2 or truth.ndim != 2 or recovered.shape[0] != truth.shape[0]:
        raise ShapeMismatch(
            f"recovered {recovered.shape} and truth {truth.shape} differ in dimension")
    if metric in ("jaccard", "jaccard-binarized"):
        if not np.isin(truth, (0.0, 1.0)).all():
            raise DomainMismatch("Jaccard matching needs binary true archetypes")
        rb = binarize(recovered)
        return np.array([[jaccard_distance(rb[:, r], truth[:, t])
                          for t in range(truth.shape[1])]
                         for r in range(recovered.shape[1])])
    if metric == "l1":
        return np.abs(recovered[:, :, None] - truth[:, None, :]).sum(axis=0)
    raise InvalidConfig(f"unknown metric {metric!r}")


def match_archetypes(recovered, truth, metric: str = "l1") -> MatchResult:
    """Unique nearest-neighbour matching of recovered to true archetypes.

    Pairs are visited in increasing distance (ties by lower recovered, then
    lower true index). A recovered archetype is only ever matched to one of
    its nearest true archetypes; if that one was already claimed at a
    smaller distance it stays unassigned.
    """
    dist = distance_matrix(recovered, truth, metric)
    n_rec, n_true = dist.shape
    assignment: List[Optional[int]] = [None] * n_rec
    if n_rec == 0 or n_true == 0:
        return MatchResult(assignment, dist, 0)
    nearest = dist.min(axis=1)
    claimed = set()
    order = sorted((dist[r, t], r, t) for r in range(n_rec) for t in range(n_true))
    for dval, r, t in order:
        if dval > nearest[r] or assignment[r] is not None or t in claimed:
            continue
        assignment[r] = t
        claimed.add(t)
    return MatchResult(assignment, dist, len(claimed))


def normalize_profiles(z) -> np.ndarray:
    """Project nonnegative archetypes back onto the simplex (column sums 1)."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, None)
    sums = z.sum(axis=0)
    sums[sums == 0] = 1.0
    return z / sums
