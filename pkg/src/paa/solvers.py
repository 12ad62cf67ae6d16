"""Fitting algorithms.

* ``fit_normal``: classical archetypal analysis, ``min ||X - XWH||_F^2``
  over column-stochastic ``W`` and ``H``.
* ``fit_poisson``: multiplicative majorization-minimization updates on a
  penalty-relaxed objective (stochasticity enforced by a log-barrier-like
  penalty of weight ``lambda``).
* ``fit_multinomial``: EM updates, exactly stochastic at every step.
* ``fit_bernoulli``: majorization-minimization on unnormalized factors
  ``G`` and ``V`` whose column normalizations are ``H`` and ``W``.

Every update kernel takes and returns plain arrays in the orientation
``X: M x N``, ``theta: M x N``, ``W: N x K``, ``H: K x N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .core import (
    ArchetypalModel,
    DataMatrix,
    FitConfig,
    InvalidConfig,
    ModelKind,
    NonFinite,
    PAAError,
    ShapeMismatch,
    StochasticMatrix,
    derive_rng,
    normalize_columns,
)
from .obs_models import (
    LOG_FLOOR,
    ProfileMatrix,
    _check_kind,
    _safe_ratio,
    estimate_profiles,
    nll_from_reconstruction,
)


DEN_FLOOR = 1e-300


@dataclass(frozen=True)
class UnnormalizedFactors:
    """Positive reparameterization of ``H`` (``g``) and ``W`` (``v``)."""

    g: np.ndarray
    v: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return normalize_columns(self.g)

    @property
    def w(self) -> np.ndarray:
        return normalize_columns(self.v)


@dataclass(frozen=True)
class FitReport:
    model: ArchetypalModel
    iterations: int
    converged: bool
    final_nll: float
    # largest |column sum - 1| of the relaxed factors before renormalization
    renorm_residual: float = 0.0


# ---------------------------------------------------------------------------
# helpers


def _guard_den(den: np.ndarray, what: str) -> np.ndarray:
    if not np.all(den >= DEN_FLOOR):
        raise NonFinite(f"{what} denominator underflows {DEN_FLOOR:g}")
    return den


def _normalize(values: np.ndarray, what: str) -> np.ndarray:
    sums = _guard_den(values.sum(axis=0), what)
    return values / sums


def _relative_change(prev: float, cur: float) -> float:
    if prev == cur:
        return 0.0
    return abs(prev - cur) / max(abs(prev), LOG_FLOOR)


def init_factors(rng: np.random.Generator, n: int, k: int
                 ) -> Tuple[StochasticMatrix, StochasticMatrix]:
    """Uniform(0, 1] entries, columns normalized; ``W`` is drawn first."""
    if not 1 <= k <= n:
        raise InvalidConfig(f"need 1 <= k <= n, got k={k}, n={n}")
    w = 1.0 - rng.random((n, k))
    h = 1.0 - rng.random((k, n))
    return StochasticMatrix(w / w.sum(axis=0)), StochasticMatrix(h / h.sum(axis=0))


def archetypes(profiles, w) -> np.ndarray:
    """Archetype (profile) matrix ``theta @ w``."""
    theta = np.asarray(getattr(profiles, "theta", profiles), dtype=float)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if theta.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"profiles {theta.shape} and w {w.shape} do not chain")
    return theta @ w


def generating_observations(w, delta: float) -> list:
    """Per archetype, the sorted observation indices with weight above delta."""
    if not 0 < delta < 1:
        raise InvalidConfig(f"delta must lie in (0, 1), got {delta}")
    w = np.asarray(getattr(w, "values", w), dtype=float)
    return [np.flatnonzero(w[:, k] > delta).tolist() for k in range(w.shape[1])]


def _start(x: DataMatrix, config: FitConfig, stream_id: int, init):
    n = x.cols
    if config.k > n:
        raise InvalidConfig(f"k={config.k} exceeds the number of observations {n}")
    if init is None:
        w0, h0 = init_factors(derive_rng(config.seed, stream_id), n, config.k)
    else:
        w0, h0 = init
    w = np.array(getattr(w0, "values", w0), dtype=float)
    h = np.array(getattr(h0, "values", h0), dtype=float)
    if w.shape != (n, config.k) or h.shape != (config.k, n):
        raise ShapeMismatch(
            f"initial factors {w.shape}, {h.shape} do not match n={n}, k={config.k}")
    return w, h


def _package(kind, x, profiles, w, h, trace, config, stream_id, iterations,
             converged, renorm_residual=0.0) -> FitReport:
    w_s = StochasticMatrix(normalize_columns(w))
    h_s = StochasticMatrix(normalize_columns(h))
    z = archetypes(profiles, w_s)
    recon = z @ h_s.values
    recon_q = profiles.q @ w_s.values @ h_s.values if kind is ModelKind.BERNOULLI else None
    final = nll_from_reconstruction(x.values, recon, kind, recon_q)
    model = ArchetypalModel(kind, w_s, h_s, z, trace, config, int(config.seed),
                            stream_id=stream_id)
    return FitReport(model, iterations, converged, final, float(renorm_residual))


# ---------------------------------------------------------------------------
# normal model


def project_simplex_columns(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of every column onto the probability simplex."""
    k = v.shape[0]
    u = -np.sort(-v, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    idx = np.arange(1, k + 1)[:, None]
    cond = u - css / idx > 0
    rho = k - 1 - np.argmax(cond[::-1], axis=0)
    tau = css[rho, np.arange(v.shape[1])] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def normal_objective(x: np.ndarray, w: np.ndarray, h: np.ndarray,
                     penalty: float = 0.0) -> float:
    """``||X - XWH||^2`` plus ``penalty * (||1H - 1||^2 + ||1W - 1||^2)``."""
    rss = float(np.sum((x - x @ w @ h) ** 2))
    if penalty:
        rss += penalty * (float(np.sum((h.sum(axis=0) - 1) ** 2))
                          + float(np.sum((w.sum(axis=0) - 1) ** 2)))
    return rss


def _apg(v, grad, objective, lip, steps, project, tol=1e-10):
    """Projected gradient with Nesterov momentum, restarted whenever the
    extrapolated step would raise the objective; never increases it."""
    if lip <= 0:
        return v
    f = objective(v)
    y, t = v, 1.0
    for _ in range(steps):
        cand = project(y - grad(y) / lip)
        f_cand = objective(cand)
        if f_cand > f:
            # momentum overshot: plain step from the current point
            cand = project(v - grad(v) / lip)
            f_cand = objective(cand)
            t = 1.0
            if f_cand > f:
                break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - v)
        moved = np.max(np.abs(cand - v))
        v, f, t = cand, f_cand, t_next
        if moved <= tol:
            break
    return v


def _pg_h(x, z, h, steps):
    # min_H ||X - ZH||^2 over stochastic columns
    ztz, ztx = z.T @ z, z.T @ x
    return _apg(h, lambda a: 2.0 * (ztz @ a - ztx),
                lambda a: float(np.sum((x - z @ a) ** 2)),
                2.0 * np.linalg.norm(ztz, 2), steps, project_simplex_columns)


def nnls(a: np.ndarray, b: np.ndarray, max_iter: Optional[int] = None) -> np.ndarray:
    """``argmin ||a x - b||`` over ``x >= 0`` by the Lawson-Hanson active
    set method.

    scipy's ``nnls`` (1.15) can stop at non-optimal points on
    underdetermined systems, which is exactly the shape of the archetype
    subproblems, so this small solver is used instead.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    tol = 10.0 * np.finfo(float).eps * max(m, n) * max(np.abs(a).sum(axis=0).max(initial=0.0), 1.0)
    max_iter = 3 * n if max_iter is None else max_iter
    for _ in range(max_iter):
        grad = a.T @ (b - a @ x)
        grad[passive] = -np.inf
        j = int(np.argmax(grad))
        if grad[j] <= tol:
            break
        passive[j] = True
        while True:
            s = np.zeros(n)
            s[passive] = np.linalg.lstsq(a[:, passive], b, rcond=None)[0]
            if s[passive].min() > 0:
                x = s
                break
            bad = passive & (s <= 0)
            gap = x[bad] - s[bad]
            alpha = np.min(np.where(gap > 0, x[bad] / np.where(gap > 0, gap, 1.0), 0.0))
            x = x + alpha * (s - x)
            # variables that reached zero leave the passive set; the
            # entering one always leaves too if it could not stay positive
            drop = passive & (x <= tol)
            if s[j] <= 0:
                drop[j] = True
            x[drop] = 0.0
            passive &= ~drop
            if not passive.any():
                break
    return x


def simplex_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``argmin ||a w - b||`` over the probability simplex.

    With ``a' = a - b 1^T`` the problem becomes the min-norm point of the
    hull of the columns of ``a'``. The NNLS problem ``min ||a' u||^2 +
    (1^T u - 1)^2`` over ``u >= 0`` has a solution whose direction is that
    min-norm point: along any ray ``u = t w`` the optimum over ``t`` is
    increasing in ``||a' w||``. So normalizing the NNLS solution is exact
    and needs no large penalty weight.
    """
    shifted = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)[:, None]
    scale = float(np.abs(shifted).max(initial=0.0))
    if scale == 0.0:
        return np.full(a.shape[1], 1.0 / a.shape[1])
    aug = np.vstack([shifted / scale, np.ones((1, a.shape[1]))])
    rhs = np.zeros(aug.shape[0])
    rhs[-1] = 1.0
    sol = nnls(aug, rhs)
    total = sol.sum()
    if total <= 0:
        return np.full(a.shape[1], 1.0 / a.shape[1])
    return sol / total


def _bcd_w(x, w, h):
    """One exact block-coordinate sweep over the columns of ``W``.

    With ``T = X H^+`` the residual equals ``tr((XW - T) G (XW - T)^T)``
    plus a constant, ``G = H H^T``. Holding the other columns fixed,
    column ``k`` minimizes ``G_kk ||X w_k - c_k||^2`` with
    ``c_k = t_k - sum_{l != k} G_kl (X w_l - t_l) / G_kk``, a simplex
    least-squares problem. A column is only replaced when it improves.
    """
    w = w.copy()
    g = h @ h.T
    target = np.linalg.lstsq(h.T, x.T, rcond=None)[0].T
    z = x @ w
    for k in range(w.shape[1]):
        if g[k, k] <= 0:
            continue
        off = (z - target) @ g[:, k] - (z[:, k] - target[:, k]) * g[k, k]
        c = target[:, k] - off / g[k, k]
        wk = simplex_lstsq(x, c)
        zk = x @ wk
        if np.sum((zk - c) ** 2) < np.sum((z[:, k] - c) ** 2):
            w[:, k] = wk
            z[:, k] = zk
    return w


def normal_penalty(x: np.ndarray) -> float:
    msq = float(np.mean(x ** 2))
    return 200.0 * msq if msq > 0 else 1.0


def _penalized_nnls_h(x, z, h, penalty):
    root = np.sqrt(penalty)
    a = np.vstack([z, np.full((1, z.shape[1]), root)])
    out = np.empty_like(h)
    for n in range(x.shape[1]):
        out[:, n] = nnls(a, np.append(x[:, n], root))
    return out


def _penalized_nnls_w(x, target, w, penalty):
    root = np.sqrt(penalty)
    a = np.vstack([x, np.full((1, x.shape[1]), root)])
    out = np.empty_like(w)
    for k in range(target.shape[1]):
        out[:, k] = nnls(a, np.append(target[:, k], root))
    return out


def _pg_w_penalized(x, w, h, penalty, steps):
    hht = h @ h.T
    xht = x @ h.T
    n = w.shape[0]
    lip = 2.0 * (np.linalg.norm(x, 2) ** 2 * np.linalg.norm(hht, 2) + penalty * n)
    return _apg(w, lambda a: 2.0 * x.T @ (x @ a @ hht - xht)
                + 2.0 * penalty * (a.sum(axis=0) - 1),
                lambda a: normal_objective(x, a, h, penalty), lip, steps,
                lambda a: np.maximum(a, 0.0))


def fit_normal(x: DataMatrix, config: FitConfig, stream_id: int = 0, init=None,
               method: str = "projected") -> FitReport:
    """Classical archetypal analysis by alternating least squares.

    ``method="projected"`` (default) keeps ``W`` and ``H`` exactly
    column-stochastic. ``H`` is updated by accelerated projected gradient
    and ``W`` by an exact column-wise sweep, so the residual
    ``||X - XWH||^2`` never increases.

    ``method="penalized"`` is the original relaxation: nonnegative least
    squares with ``lambda * ||1H - 1||^2`` and ``lambda * ||1W - 1||^2``
    penalties, archetypes refreshed by least squares in between. A
    projected-gradient step on the penalized objective replaces the ``W``
    update whenever the latter would increase it. Relaxed factors are
    renormalized before packaging.
    """
    xv = x.values
    w, h = _start(x, config, stream_id, init)
    if method not in ("projected", "penalized"):
        raise InvalidConfig(f"unknown normal-fit method {method!r}")
    penalty = 0.0
    if method == "penalized":
        penalty = (normal_penalty(xv) if config.lambda_mode == "auto"
                   else float(config.lambda_mode))
    obj = normal_objective(xv, w, h, penalty)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        if method == "projected":
            h = _pg_h(xv, xv @ w, h, config.inner_iter)
            w = _bcd_w(xv, w, h)
        else:
            h = _penalized_nnls_h(xv, xv @ w, h, penalty)
            target = np.linalg.lstsq(h.T, xv.T, rcond=None)[0].T
            w_new = _penalized_nnls_w(xv, target, w, penalty)
            if normal_objective(xv, w_new, h, penalty) > normal_objective(xv, w, h, penalty):
                w_new = _pg_w_penalized(xv, w, h, penalty, config.inner_iter)
            w = w_new
        cur = normal_objective(xv, w, h, penalty)
        trace.append(cur)
        if _relative_change(obj, cur) < config.tol:
            converged = True
            obj = cur
            break
        obj = cur
    residual = 0.0
    if method == "penalized":
        residual = max(np.abs(w.sum(axis=0) - 1).max(), np.abs(h.sum(axis=0) - 1).max())
    profiles = ProfileMatrix(ModelKind.NORMAL, xv)
    return _package(ModelKind.NORMAL, x, profiles, w, h, trace, config, stream_id,
                    it, converged, residual)


# ---------------------------------------------------------------------------
# Poisson model


def poisson_penalty(x: np.ndarray) -> float:
    """Twenty times the sample variance of all entries of ``x``."""
    var = float(np.var(x))
    return 20.0 * var if var > 0 else 1.0


def poisson_objective(x, lam, w, h, penalty) -> float:
    """Penalized Poisson cost minimized by the multiplicative updates."""
    recon = lam @ w @ h
    data = nll_from_reconstruction(x, recon, ModelKind.POISSON)
    sh, sw = h.sum(axis=0), w.sum(axis=0)
    if (sh <= 0).any() or (sw <= 0).any():
        raise NonFinite("a factor column sums to zero")
    return data + penalty * (float(np.sum(sh - np.log(sh))) + float(np.sum(sw - np.log(sw))))


def update_poisson_h(x, lam, w, h, penalty) -> np.ndarray:
    z = lam @ w
    ratio = _safe_ratio(x, z @ h)
    num = z.T @ ratio + penalty / _guard_den(h.sum(axis=0), "Poisson H")
    den = _guard_den(z.sum(axis=0)[:, None] + penalty, "Poisson H")
    return h * (num / den)


def update_poisson_w(x, lam, w, h, penalty) -> np.ndarray:
    ratio = _safe_ratio(x, lam @ w @ h)
    num = lam.T @ ratio @ h.T + penalty / _guard_den(w.sum(axis=0), "Poisson W")
    den = _guard_den(np.outer(lam.sum(axis=0), h.sum(axis=1)) + penalty, "Poisson W")
    return w * (num / den)


def fit_poisson(x: DataMatrix, config: FitConfig, stream_id: int = 0, init=None
                ) -> FitReport:
    """Multiplicative updates on the relaxed Poisson objective.

    The trace records the penalized objective shifted by ``lambda * (N + K)``,
    which equals the plain negative log-likelihood whenever ``W`` and ``H``
    are exactly stochastic and exceeds it otherwise. The returned factors
    are the renormalized iterate with the lowest plain likelihood seen,
    which includes the (feasible) starting point.
    """
    _check_kind(x, ModelKind.POISSON)
    xv = x.values
    profiles = estimate_profiles(x, ModelKind.POISSON, config.prob_floor)
    lam = profiles.theta
    penalty = (poisson_penalty(xv) if config.lambda_mode == "auto"
               else float(config.lambda_mode))
    w, h = _start(x, config, stream_id, init)
    n, k = w.shape
    shift = penalty * (n + k)

    def feasible_nll(w, h):
        wn, hn = w / w.sum(axis=0), h / h.sum(axis=0)
        return nll_from_reconstruction(xv, lam @ wn @ hn, ModelKind.POISSON)

    obj = poisson_objective(xv, lam, w, h, penalty) - shift
    trace = [obj]
    best = (feasible_nll(w, h), w, h)
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        h = update_poisson_h(xv, lam, w, h, penalty)
        w = update_poisson_w(xv, lam, w, h, penalty)
        cur = poisson_objective(xv, lam, w, h, penalty) - shift
        trace.append(cur)
        candidate = feasible_nll(w, h)
        if candidate < best[0]:
            best = (candidate, w, h)
        if _relative_change(obj, cur) < config.tol:
            converged = True
            break
        obj = cur
    residual = max(np.abs(w.sum(axis=0) - 1).max(), np.abs(h.sum(axis=0) - 1).max())
    _, w, h = best
    return _package(ModelKind.POISSON, x, profiles, w, h, trace, config, stream_id,
                    it, converged, residual)


# ---------------------------------------------------------------------------
# multinomial model


def update_multinomial_h(x, p, w, h) -> np.ndarray:
    z = p @ w
    ratio = _safe_ratio(x, z @ h)
    return _normalize(h * (z.T @ ratio), "multinomial H")


def update_multinomial_w(x, p, w, h) -> np.ndarray:
    ratio = _safe_ratio(x, p @ w @ h)
    return _normalize(w * (p.T @ (ratio @ h.T)), "multinomial W")


def extreme_columns(p: np.ndarray, max_dim: int = 6) -> np.ndarray:
    """Indices of a set of columns of ``p`` whose convex hull is the hull of
    all columns.

    Exact hull vertices are computed when the columns span at most
    ``max_dim`` affine dimensions. Otherwise, or if qhull fails, every
    column is returned, which is always a valid (if large) superset.
    """
    n = p.shape[1]
    everything = np.arange(n)
    centred = p - p.mean(axis=1, keepdims=True)
    u, sv, _ = np.linalg.svd(centred, full_matrices=False)
    scale = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > 1e-10 * max(scale, 1e-300))) if scale > 0 else 0
    if rank == 0:
        return everything[:1]
    coords = u[:, :rank].T @ centred
    if rank == 1:
        return np.unique([np.argmin(coords[0]), np.argmax(coords[0])])
    if rank > max_dim or n <= rank + 1:
        return everything
    try:
        return np.sort(ConvexHull(coords.T).vertices)
    except (QhullError, ValueError):
        return everything


def barycentric_weights(p: np.ndarray, support: np.ndarray) -> np.ndarray:
    """``C`` (len(support) x N), column-stochastic, with ``p[:, support] @ C = p``
    for columns inside the hull of the support."""
    pv = p[:, support]
    c = np.zeros((len(support), p.shape[1]))
    position = {int(j): i for i, j in enumerate(support)}
    for col in range(p.shape[1]):
        if col in position:
            c[position[col], col] = 1.0
        else:
            c[:, col] = simplex_lstsq(pv, p[:, col])
    return c


def _em_sweep(x, pv, w, h):
    h = update_multinomial_h(x, pv, w, h)
    return update_multinomial_w(x, pv, w, h), h


def _squarem_step(x, pv, w, h):
    """One safeguarded SQUAREM cycle around the EM sweep.

    Returns the better of two plain sweeps and the extrapolated point
    followed by one sweep, so the NLL never goes up.
    """
    w1, h1 = _em_sweep(x, pv, w, h)
    w2, h2 = _em_sweep(x, pv, w1, h1)
    best = (nll_from_reconstruction(x, pv @ w2 @ h2, ModelKind.MULTINOMIAL), w2, h2)
    rw, rh = w1 - w, h1 - h
    vw, vh = w2 - w1 - rw, h2 - h1 - rh
    r2 = np.sum(rw ** 2) + np.sum(rh ** 2)
    v2 = np.sum(vw ** 2) + np.sum(vh ** 2)
    if v2 <= 0.0:
        return best
    alpha = min(-np.sqrt(r2 / v2), -1.0)
    if alpha == -1.0:
        return best
    we = w - 2 * alpha * rw + alpha ** 2 * vw
    he = h - 2 * alpha * rh + alpha ** 2 * vh
    if not ((we > 0).all() and (he > 0).all()):
        return best
    try:
        we, he = _em_sweep(x, pv, we / we.sum(axis=0), he / he.sum(axis=0))
        cand = nll_from_reconstruction(x, pv @ we @ he, ModelKind.MULTINOMIAL)
    except PAAError:
        return best
    return (cand, we, he) if cand < best[0] else best


def fit_multinomial(x: DataMatrix, config: FitConfig, stream_id: int = 0, init=None,
                    accelerate: bool = True) -> FitReport:
    """EM for the multinomial model.

    With ``accelerate`` (the default) two exact shortcuts are used. The NLL
    depends on ``W`` only through the archetypes ``P W``, which always lie
    in the hull of the profile columns, so ``W`` is supported on the hull's
    vertices (the start is mapped there without changing ``P W``). Each
    iteration is then one safeguarded SQUAREM cycle of the EM sweep. The
    trace stays non-increasing either way. ``accelerate=False`` runs the
    plain EM sweep on the full ``W``.
    """
    _check_kind(x, ModelKind.MULTINOMIAL)
    xv = x.values
    profiles = estimate_profiles(x, ModelKind.MULTINOMIAL, config.prob_floor)
    p = profiles.theta
    w, h = _start(x, config, stream_id, init)
    n = w.shape[0]
    support = extreme_columns(p) if accelerate else np.arange(n)
    if accelerate and len(support) < n:
        w = _normalize(barycentric_weights(p, support) @ w, "multinomial W")
    pv = p[:, support]
    obj = nll_from_reconstruction(xv, pv @ w @ h, ModelKind.MULTINOMIAL)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        if accelerate:
            cur, w, h = _squarem_step(xv, pv, w, h)
        else:
            w, h = _em_sweep(xv, pv, w, h)
            cur = nll_from_reconstruction(xv, pv @ w @ h, ModelKind.MULTINOMIAL)
        trace.append(cur)
        if _relative_change(obj, cur) < config.tol:
            converged = True
            break
        obj = cur
    full = np.zeros((n, w.shape[1]))
    full[support] = w
    return _package(ModelKind.MULTINOMIAL, x, profiles, full, h, trace, config,
                    stream_id, it, converged)


# ---------------------------------------------------------------------------
# Bernoulli model


def bernoulli_objective(x, p, w, h) -> float:
    q = 1.0 - p
    return nll_from_reconstruction(x, p @ w @ h, ModelKind.BERNOULLI, q @ w @ h)


def update_bernoulli_g(x, y, p, q, w, h, g) -> np.ndarray:
    zp, zq = p @ w, q @ w
    num = zp.T @ _safe_ratio(x, zp @ h) + zq.T @ _safe_ratio(y, zq @ h)
    den = _guard_den(x.sum(axis=0) + y.sum(axis=0), "Bernoulli G")
    return g * (num / den)


def update_bernoulli_v(x, y, p, q, w, h, v) -> np.ndarray:
    zp, zq = p @ w, q @ w
    rp = _safe_ratio(x, zp @ h)
    rq = _safe_ratio(y, zq @ h)
    num = p.T @ rp @ h.T + q.T @ rq @ h.T
    den = _guard_den(np.sum(h * (zp.T @ rp + zq.T @ rq), axis=1), "Bernoulli V")
    return v * (num / den)


def fit_bernoulli(x: DataMatrix, config: FitConfig, stream_id: int = 0, init=None
                  ) -> FitReport:
    _check_kind(x, ModelKind.BERNOULLI)
    xv = x.values
    yv = 1.0 - xv
    profiles = estimate_profiles(x, ModelKind.BERNOULLI, config.prob_floor)
    p, q = profiles.theta, profiles.q
    w, h = _start(x, config, stream_id, init)
    g, v = h.copy(), w.copy()
    obj = bernoulli_objective(xv, p, w, h)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        g = update_bernoulli_g(xv, yv, p, q, w, h, g)
        h = _normalize(g, "Bernoulli H")
        v = update_bernoulli_v(xv, yv, p, q, w, h, v)
        w = _normalize(v, "Bernoulli W")
        cur = bernoulli_objective(xv, p, w, h)
        trace.append(cur)
        if _relative_change(obj, cur) < config.tol:
            converged = True
            break
        obj = cur
    return _package(ModelKind.BERNOULLI, x, profiles, w, h, trace, config,
                    stream_id, it, converged)


_FITTERS = {
    ModelKind.NORMAL: fit_normal,
    ModelKind.POISSON: fit_poisson,
    ModelKind.MULTINOMIAL: fit_multinomial,
    ModelKind.BERNOULLI: fit_bernoulli,
}


def fit(x: DataMatrix, kind, config: FitConfig, stream_id: int = 0,
        init=None) -> FitReport:
    """Dispatch to the fitter for ``kind``."""
    return _FITTERS[ModelKind.parse(kind)](x, config, stream_id=stream_id, init=init)
