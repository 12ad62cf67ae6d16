"""Multi-restart fitting and log-likelihood curves over a range of K."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import DataMatrix, FitConfig, InvalidConfig, ModelKind, PAAError
from .solvers import FitReport, fit

# stream id recorded for the warm start built from the previous K
WARM_STREAM = -1


def default_jobs() -> int:
    """Worker count from ``PAA_JOBS``, else the usable CPU count."""
    env = os.environ.get("PAA_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise InvalidConfig(f"PAA_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise InvalidConfig(f"PAA_JOBS must be >= 1, got {jobs}")
        return jobs
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def _one(args):
    x, kind, config, stream, init = args
    try:
        return stream, fit(x, kind, config, stream_id=stream, init=init), None
    except PAAError as err:
        return stream, None, err


def _better(a: Tuple[int, FitReport], b: Tuple[int, FitReport]) -> bool:
    """Order by NLL, then stream id; the warm start only wins outright."""
    (sa, ra), (sb, rb) = a, b
    if ra.final_nll != rb.final_nll:
        return ra.final_nll < rb.final_nll
    rank = lambda s: (s == WARM_STREAM, s)
    return rank(sa) < rank(sb)


def run_restarts(x: DataMatrix, kind, config: FitConfig, jobs: Optional[int] = 1,
                 warm_start=None) -> FitReport:
    """Fit with stream ids ``0 .. restarts-1`` and keep the lowest NLL.

    Ties go to the smaller stream id. ``warm_start`` is an optional
    ``(w, h)`` pair fitted as one extra candidate under stream id -1; it
    replaces the random restarts' winner only when strictly better. Failed
    restarts are skipped; if all fail the last error is raised. The result
    does not depend on ``jobs``.
    """
    kind = ModelKind.parse(kind)
    tasks = [(x, kind, config, s, None) for s in range(config.restarts)]
    if warm_start is not None:
        tasks.append((x, kind, config, WARM_STREAM, warm_start))
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs < 1:
        raise InvalidConfig(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(tasks) == 1:
        results = [_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_one, tasks))
    best = None
    last_err = None
    for stream, report, err in sorted(results, key=lambda r: r[0]):
        if report is None:
            last_err = err
            continue
        if best is None or _better((stream, report), best):
            best = (stream, report)
    if best is None:
        raise last_err
    return best[1]


@dataclass(frozen=True)
class ElbowEntry:
    k: int
    best_nll: float
    # stream id of the winning restart; -1 marks the warm start
    seed_of_best: int
    restarts: int


@dataclass(frozen=True)
class ElbowCurve:
    entries: Tuple[ElbowEntry, ...]
    kind: ModelKind
    reports: Tuple[FitReport, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        ks = [e.k for e in self.entries]
        if ks != sorted(ks):
            raise InvalidConfig("elbow entries must be sorted by k")

    def ks(self) -> List[int]:
        return [e.k for e in self.entries]

    def nlls(self) -> List[float]:
        return [e.best_nll for e in self.entries]

    def is_monotone(self, slack: float = 1e-6) -> bool:
        v = self.nlls()
        return all(b <= a + slack for a, b in zip(v, v[1:]))

    def suggestion(self) -> Optional[dict]:
        k = kneedle(self.ks(), self.nlls())
        if k is None:
            return None
        return {"k": k, "method": "kneedle", "status": "heuristic"}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "entries": [
                {"k": e.k, "best_nll": e.best_nll, "seed_of_best": e.seed_of_best,
                 "restarts": e.restarts}
                for e in self.entries
            ],
            "suggestion": self.suggestion(),
        }


def kneedle(ks: Sequence[int], values: Sequence[float]) -> Optional[int]:
    """Knee of a decreasing curve: the point farthest above the chord after
    rescaling both axes to [0, 1]. Needs at least three points; returns
    ``None`` for a flat or too-short curve.
    """
    ks = np.asarray(ks, dtype=float)
    v = np.asarray(values, dtype=float)
    if ks.size < 3 or np.ptp(ks) == 0 or np.ptp(v) == 0:
        return None
    xn = (ks - ks.min()) / np.ptp(ks)
    yn = (v.max() - v) / np.ptp(v)
    return int(ks[int(np.argmax(yn - xn))])


def split_archetype(w, h) -> Tuple[np.ndarray, np.ndarray]:
    """A ``K + 1`` solution with the same reconstruction as ``(w, h)``.

    The archetype with the largest total weight in ``H`` is duplicated and
    its row of ``H`` is shared equally between the two copies.
    """
    w = np.asarray(getattr(w, "values", w), dtype=float)
    h = np.asarray(getattr(h, "values", h), dtype=float)
    j = int(np.argmax(h.sum(axis=1)))
    w2 = np.column_stack([w, w[:, j]])
    h2 = np.vstack([h, h[j] / 2.0])
    h2[j] /= 2.0
    return w2, h2


def elbow_curve(x: DataMatrix, kind, k_min: int, k_max: int, config: FitConfig,
                jobs: Optional[int] = 1, warm_start: bool = True) -> ElbowCurve:
    """Best-of-restarts NLL for every K in ``k_min .. k_max``.

    With ``warm_start`` each K after the first also fits the previous K's
    best solution with one archetype split in two. That candidate starts at
    the previous NLL and the fitters never increase the objective, so the
    curve is non-increasing in K.
    """
    kind = ModelKind.parse(kind)
    if not 1 <= k_min <= k_max <= x.cols:
        raise InvalidConfig(
            f"need 1 <= k_min <= k_max <= N={x.cols}, got {k_min}..{k_max}")
    entries, reports = [], []
    prev = None
    for k in range(k_min, k_max + 1):
        cfg = config.replace(k=k)
        warm = None
        if warm_start and prev is not None:
            warm = split_archetype(prev.model.w, prev.model.h)
        report = run_restarts(x, kind, cfg, jobs=jobs, warm_start=warm)
        stream = report.model.stream_id
        entries.append(ElbowEntry(k, float(report.final_nll), int(stream), cfg.restarts))
        reports.append(report)
        prev = report
    return ElbowCurve(tuple(entries), kind, tuple(reports))
