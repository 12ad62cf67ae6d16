"""Observation models: per-observation parameter profiles, the negative
log-likelihood of a factorization, its gradient, and per-observation
deviance.

Data-only constants (``log x!``, multinomial coefficients) are dropped from
every reported likelihood, so values are comparable across runs of one model
kind but not across kinds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DataMatrix,
    Domain,
    DomainMismatch,
    EmptyDocument,
    ModelKind,
    NonFinite,
    ShapeMismatch,
    check_domain,
)

LOG_FLOOR = 1e-300
DEFAULT_PROB_FLOOR = 1e-6


@dataclass(frozen=True)
class ProfileMatrix:
    """Maximum-likelihood parameter profile of every observation.

    ``theta`` holds the Poisson rates, the (clamped) Bernoulli success
    probabilities, the multinomial word frequencies, or the raw data for
    the normal model.
    """

    kind: ModelKind
    theta: np.ndarray
    prob_floor: float = DEFAULT_PROB_FLOOR

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))

    @property
    def q(self) -> np.ndarray:
        """Failure probabilities ``1 - P`` (Bernoulli only)."""
        return 1.0 - self.theta

    @property
    def shape(self):
        return self.theta.shape


def _values(a) -> np.ndarray:
    return np.asarray(getattr(a, "values", a), dtype=float)


def _check_kind(x: DataMatrix, kind: ModelKind) -> None:
    if x.domain is not kind.domain:
        # Binary data are valid counts and counts are valid reals.
        ok = (kind.domain is Domain.REAL
              or (kind.domain in (Domain.NONNEG_INT, Domain.COMPOSITION)
                  and x.domain in (Domain.NONNEG_INT, Domain.COMPOSITION,
                                   Domain.BINARY)))
        if not ok:
            raise DomainMismatch(
                f"{kind.value} model needs {kind.domain.value} data, "
                f"got {x.domain.value}")


def estimate_profiles(x: DataMatrix, kind, prob_floor: float = DEFAULT_PROB_FLOOR
                      ) -> ProfileMatrix:
    kind = ModelKind.parse(kind)
    _check_kind(x, kind)
    values = x.values
    if kind is ModelKind.BERNOULLI:
        theta = np.clip(values, prob_floor, 1.0 - prob_floor)
    elif kind is ModelKind.MULTINOMIAL:
        totals = values.sum(axis=0)
        if (totals <= 0).any():
            raise EmptyDocument(
                f"observation {int(np.flatnonzero(totals <= 0)[0])} has no counts")
        theta = values / totals
    else:
        theta = values
    return ProfileMatrix(kind, theta, prob_floor)


def _check_shapes(x: np.ndarray, theta: np.ndarray, w: np.ndarray, h: np.ndarray):
    m, n = x.shape
    if theta.shape != (m, n):
        raise ShapeMismatch(f"profiles are {theta.shape}, data are {(m, n)}")
    if w.ndim != 2 or w.shape[0] != n:
        raise ShapeMismatch(f"w is {w.shape}, expected ({n}, K)")
    if h.shape != (w.shape[1], n):
        raise ShapeMismatch(f"h is {h.shape}, expected ({w.shape[1]}, {n})")


def _xlog(coef: np.ndarray, arg: np.ndarray) -> np.ndarray:
    """``coef * log(arg)`` with ``0 * log(0) = 0``; guards the log floor."""
    live = coef != 0
    if (arg[live] < LOG_FLOOR).any():
        raise NonFinite("log argument underflows 1e-300 where data are nonzero")
    out = np.zeros_like(arg)
    out[live] = coef[live] * np.log(arg[live])
    return out


def nll_from_reconstruction(x: np.ndarray, recon: np.ndarray, kind: ModelKind,
                            recon_q: np.ndarray = None) -> float:
    """Objective given ``recon = theta @ W @ H`` (and ``Q @ W @ H``)."""
    if kind is ModelKind.NORMAL:
        return float(np.sum((x - recon) ** 2))
    if kind is ModelKind.POISSON:
        return float(np.sum(recon - _xlog(x, recon)))
    if kind is ModelKind.MULTINOMIAL:
        return float(-np.sum(_xlog(x, recon)))
    if kind is ModelKind.BERNOULLI:
        return float(-np.sum(_xlog(x, recon)) - np.sum(_xlog(1.0 - x, recon_q)))
    raise ValueError(kind)


def neg_log_likelihood(x: DataMatrix, profiles: ProfileMatrix, w, h,
                       kind=None) -> float:
    """Cost of the factorization ``theta @ w @ h`` under the model kind.

    Normal: squared Frobenius residual. Poisson, multinomial and Bernoulli:
    the negative log-likelihood without data-only constants.
    """
    kind = ModelKind.parse(kind or profiles.kind)
    xv = _values(x)
    w, h = _values(w), _values(h)
    theta = profiles.theta
    _check_shapes(xv, theta, w, h)
    recon = theta @ (w @ h)
    recon_q = profiles.q @ (w @ h) if kind is ModelKind.BERNOULLI else None
    return nll_from_reconstruction(xv, recon, kind, recon_q)


def nll_gradient(x: DataMatrix, profiles: ProfileMatrix, w, h, kind=None):
    """Partial derivatives ``(d/dW, d/dH)`` of ``neg_log_likelihood``.

    These are unconstrained derivatives; projecting them onto the simplex
    tangent space is the caller's business.
    """
    kind = ModelKind.parse(kind or profiles.kind)
    xv = _values(x)
    w, h = _values(w), _values(h)
    theta = profiles.theta
    _check_shapes(xv, theta, w, h)
    z = theta @ w
    recon = z @ h
    if kind is ModelKind.NORMAL:
        d_recon = -2.0 * (xv - recon)
    elif kind is ModelKind.POISSON:
        d_recon = 1.0 - _safe_ratio(xv, recon)
    elif kind is ModelKind.MULTINOMIAL:
        d_recon = -_safe_ratio(xv, recon)
    else:
        zq = profiles.q @ w
        d_q = -_safe_ratio(1.0 - xv, zq @ h)
        d_p = -_safe_ratio(xv, recon)
        dw = theta.T @ d_p @ h.T + profiles.q.T @ d_q @ h.T
        dh = z.T @ d_p + zq.T @ d_q
        return dw, dh
    return theta.T @ d_recon @ h.T, z.T @ d_recon


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    live = num != 0
    if (den[live] < LOG_FLOOR).any():
        raise NonFinite("denominator underflows 1e-300 where data are nonzero")
    out = np.zeros_like(den)
    out[live] = num[live] / den[live]
    return out


def deviance(x_col, fitted_mean, kind, prob_floor: float = DEFAULT_PROB_FLOOR
             ) -> float:
    """Twice the log-likelihood gap between the saturated and fitted model
    for a single observation. Reduces to the residual sum of squares for
    the normal model."""
    kind = ModelKind.parse(kind)
    x = np.asarray(x_col, dtype=float).ravel()
    mu = np.asarray(fitted_mean, dtype=float).ravel()
    if x.shape != mu.shape:
        raise ShapeMismatch(f"observation has {x.size} entries, mean has {mu.size}")
    if kind is ModelKind.NORMAL:
        return float(np.sum((x - mu) ** 2))
    check_domain(x[:, None], kind.domain)
    if kind is ModelKind.POISSON:
        if (mu < 0).any():
            raise DomainMismatch("Poisson rates must be nonnegative")
        ll_sat = np.sum(_xlog(x, np.where(x > 0, x, 1.0)) - x)
        ll_fit = np.sum(_xlog(x, mu) - mu)
        return float(2.0 * (ll_sat - ll_fit))
    if kind is ModelKind.BERNOULLI:
        p_sat = np.clip(x, prob_floor, 1.0 - prob_floor)
        p_fit = np.clip(mu, prob_floor, 1.0 - prob_floor)
        y = 1.0 - x
        ll_sat = x @ np.log(p_sat) + y @ np.log(1.0 - p_sat)
        ll_fit = x @ np.log(p_fit) + y @ np.log(1.0 - p_fit)
        return float(2.0 * (ll_sat - ll_fit))
    if kind is ModelKind.MULTINOMIAL:
        total = x.sum()
        if total <= 0:
            raise EmptyDocument("observation has no counts")
        live = x > 0
        p_sat = x[live] / total
        p_fit = np.maximum(mu[live], prob_floor)
        return float(2.0 * np.sum(x[live] * (np.log(p_sat) - np.log(p_fit))))
    raise ValueError(kind)


def observation_deviances(x: DataMatrix, profiles: ProfileMatrix, z, h) -> np.ndarray:
    """Deviance of every observation under the fitted means ``z @ h``."""
    xv = _values(x)
    means = np.asarray(z, dtype=float) @ _values(h)
    return np.array([
        deviance(xv[:, n], means[:, n], profiles.kind, profiles.prob_floor)
        for n in range(xv.shape[1])
    ])
