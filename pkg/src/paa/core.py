"""Shared containers: data matrices, column-stochastic matrices, fit
configuration, fitted models and the seeded RNG contract.

All matrices follow the "columns are observations" orientation: a data
matrix is ``M x N`` (features x observations), ``W`` is ``N x K`` and
``H`` is ``K x N``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

STOCHASTIC_ATOL = 1e-9
_U64 = (1 << 64) - 1


class PAAError(Exception):
    """Base class for all errors raised by this package."""


class ZeroColumn(PAAError):
    pass


class NegativeEntry(PAAError):
    pass


class DomainMismatch(PAAError):
    pass


class EmptyDocument(PAAError):
    pass


class NonFinite(PAAError):
    pass


class ShapeMismatch(PAAError):
    pass


class InvalidConfig(PAAError):
    pass


class Domain(str, enum.Enum):
    REAL = "real"
    NONNEG_INT = "nonnegative-integer"
    BINARY = "binary"
    COMPOSITION = "nonnegative-integer-composition"


class ModelKind(str, enum.Enum):
    NORMAL = "normal"
    POISSON = "poisson"
    MULTINOMIAL = "multinomial"
    BERNOULLI = "bernoulli"

    @property
    def domain(self) -> Domain:
        return _KIND_DOMAIN[self]

    @classmethod
    def parse(cls, value: Union[str, "ModelKind"]) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidConfig(f"unknown model kind {value!r}") from None


_KIND_DOMAIN = {
    ModelKind.NORMAL: Domain.REAL,
    ModelKind.POISSON: Domain.NONNEG_INT,
    ModelKind.MULTINOMIAL: Domain.COMPOSITION,
    ModelKind.BERNOULLI: Domain.BINARY,
}


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


def check_domain(values: np.ndarray, domain: Domain) -> None:
    """Raise DomainMismatch naming the first offending (row, col) cell."""
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if domain in (Domain.NONNEG_INT, Domain.COMPOSITION):
        bad |= (values < 0) | (values != np.round(values))
    elif domain is Domain.BINARY:
        bad |= (values != 0) & (values != 1)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DomainMismatch(
            f"value {values[i, j]!r} at row {i}, column {j} is not in the "
            f"{domain.value} domain")


@dataclass(frozen=True)
class DataMatrix:
    """Observed data, ``M`` features by ``N`` observations."""

    values: np.ndarray
    domain: Domain = Domain.REAL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch(f"data must be 2-D, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch("data needs at least one row and one column")
        domain = Domain(self.domain)
        check_domain(values, domain)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", _readonly(values))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def for_kind(cls, values, kind) -> "DataMatrix":
        return cls(values, ModelKind.parse(kind).domain)


@dataclass(frozen=True)
class StochasticMatrix:
    """Nonnegative matrix whose columns each sum to one.

    ``atol`` is the tolerance the column sums were validated against. The
    exact constructors use 1e-9; relaxed iterates of the Poisson and normal
    fitters are wrapped with a looser tolerance.
    """

    values: np.ndarray
    atol: float = STOCHASTIC_ATOL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch(f"expected a matrix, got shape {values.shape}")
        if (values < 0).any():
            raise NegativeEntry("stochastic matrix has a negative entry")
        err = np.abs(values.sum(axis=0) - 1.0)
        if err.size and err.max() > self.atol:
            raise InvalidConfig(
                f"column sums deviate from 1 by {err.max():.3g} "
                f"(tolerance {self.atol:g})")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def normalize_columns(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if (values < 0).any():
        raise NegativeEntry("cannot normalize a matrix with negative entries")
    sums = values.sum(axis=0)
    if (sums <= 0).any():
        raise ZeroColumn(
            f"column {int(np.flatnonzero(sums <= 0)[0])} sums to zero")
    return values / sums


def make_stochastic(values) -> StochasticMatrix:
    """Divide every column by its sum.

    >>> make_stochastic([[2, 0], [2, 1]]).values.tolist()
    [[0.5, 0.0], [0.5, 1.0]]
    """
    return StochasticMatrix(normalize_columns(values))


def derive_rng(master_seed: int, stream_id: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(master_seed, stream_id)``.

    Both integers are reduced modulo 2**64 and mixed by numpy's
    ``SeedSequence`` hash, so the stream is a pure function of the pair and
    distinct stream ids give statistically independent generators.
    """
    seq = np.random.SeedSequence([int(master_seed) & _U64, int(stream_id) & _U64])
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class FitConfig:
    k: int
    max_iter: int = 1000
    tol: float = 1e-8
    # "auto" or a positive float
    lambda_mode: Union[str, float] = "auto"
    restarts: int = 10
    seed: int = 0
    init: str = "dirichlet-uniform"
    delta: float = 1e-3
    prob_floor: float = 1e-6
    # cap on projected-gradient steps per subproblem in the normal fitter
    inner_iter: int = 100

    def __post_init__(self):
        if int(self.k) < 1:
            raise InvalidConfig(f"k must be >= 1, got {self.k}")
        if int(self.max_iter) < 1:
            raise InvalidConfig(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise InvalidConfig(f"tol must be > 0, got {self.tol}")
        if int(self.restarts) < 1:
            raise InvalidConfig(f"restarts must be >= 1, got {self.restarts}")
        if not 0 < self.delta < 1:
            raise InvalidConfig(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.prob_floor < 0.5:
            raise InvalidConfig(
                f"prob_floor must lie in (0, 0.5), got {self.prob_floor}")
        if self.init != "dirichlet-uniform":
            raise InvalidConfig(f"unknown init scheme {self.init!r}")
        if self.lambda_mode != "auto":
            try:
                value = float(self.lambda_mode)
            except (TypeError, ValueError):
                raise InvalidConfig(
                    f"lambda must be 'auto' or a number, got {self.lambda_mode!r}"
                ) from None
            if not value > 0:
                raise InvalidConfig(f"lambda must be > 0, got {value}")
            object.__setattr__(self, "lambda_mode", value)
        if int(self.inner_iter) < 1:
            raise InvalidConfig("inner_iter must be >= 1")

    def replace(self, **changes) -> "FitConfig":
        values = self.to_dict()
        values.update(changes)
        return FitConfig(**values)

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "max_iter": int(self.max_iter),
            "tol": float(self.tol),
            "lambda_mode": self.lambda_mode,
            "restarts": int(self.restarts),
            "seed": int(self.seed),
            "init": self.init,
            "delta": float(self.delta),
            "prob_floor": float(self.prob_floor),
            "inner_iter": int(self.inner_iter),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        return cls(**d)


@dataclass(frozen=True)
class ArchetypalModel:
    """A fitted model; ``z`` is the archetype matrix ``theta @ w``."""

    kind: ModelKind
    w: StochasticMatrix
    h: StochasticMatrix
    z: np.ndarray
    nll_trace: tuple
    config: FitConfig
    seed_used: int
    stream_id: Optional[int] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        object.__setattr__(self, "z", _readonly(self.z))
        object.__setattr__(self, "nll_trace", tuple(float(v) for v in self.nll_trace))
        n, k = self.w.shape
        if self.h.shape != (k, n):
            raise ShapeMismatch(
                f"w is {self.w.shape} but h is {self.h.shape}")
        if self.z.shape[1] != k:
            raise ShapeMismatch(f"z has {self.z.shape[1]} columns, expected {k}")

    @property
    def k(self) -> int:
        return self.w.cols
