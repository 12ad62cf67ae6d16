import numpy as np
import pytest

from paa.core import DataMatrix, FitConfig, InvalidConfig, make_stochastic
from paa.model_selection import (
    ElbowCurve,
    ElbowEntry,
    default_jobs,
    elbow_curve,
    kneedle,
    run_restarts,
    split_archetype,
)
from paa.solvers import fit


def _poisson_data(seed=0, m=5, n=25):
    rng = np.random.default_rng(seed)
    return DataMatrix.for_kind(rng.poisson(4.0, size=(m, n)), "poisson")


def test_single_restart_equals_stream_zero():
    x = _poisson_data()
    cfg = FitConfig(k=2, restarts=1, max_iter=100)
    a = run_restarts(x, "poisson", cfg)
    b = fit(x, "poisson", cfg, stream_id=0)
    assert a.final_nll == b.final_nll
    np.testing.assert_array_equal(a.model.w.values, b.model.w.values)


def test_best_is_minimum_and_deterministic():
    x = _poisson_data(1)
    cfg = FitConfig(k=3, restarts=5, max_iter=100)
    best = run_restarts(x, "poisson", cfg)
    singles = [fit(x, "poisson", cfg, stream_id=s).final_nll for s in range(5)]
    assert best.final_nll == min(singles)
    assert best.model.stream_id == int(np.argmin(singles))
    assert run_restarts(x, "poisson", cfg).final_nll == best.final_nll


def test_pool_gives_same_result():
    x = _poisson_data(2)
    cfg = FitConfig(k=2, restarts=3, max_iter=60)
    a = run_restarts(x, "multinomial", cfg, jobs=1)
    b = run_restarts(x, "multinomial", cfg, jobs=2)
    assert a.final_nll == b.final_nll and a.model.stream_id == b.model.stream_id
    np.testing.assert_array_equal(a.model.h.values, b.model.h.values)


def test_all_restarts_failing_propagates():
    x = DataMatrix.for_kind([[0, 1], [0, 2]], "multinomial")  # empty first document
    with pytest.raises(Exception):
        run_restarts(x, "multinomial", FitConfig(k=1, restarts=2))


def test_split_archetype_reproduces_reconstruction():
    rng = np.random.default_rng(3)
    w = make_stochastic(rng.random((6, 2))).values
    h = make_stochastic(rng.random((2, 6))).values
    w2, h2 = split_archetype(w, h)
    assert w2.shape == (6, 3) and h2.shape == (3, 6)
    np.testing.assert_allclose(w2 @ h2, w @ h, atol=1e-15)
    np.testing.assert_allclose(h2.sum(axis=0), 1, atol=1e-15)


@pytest.mark.parametrize("kind", ["normal", "poisson", "multinomial", "bernoulli"])
def test_elbow_curve_is_monotone(kind):
    rng = np.random.default_rng(4)
    raw = rng.integers(0, 2, size=(5, 20)) if kind == "bernoulli" else \
        rng.poisson(3.0, size=(5, 20)) + (kind == "multinomial")
    x = DataMatrix.for_kind(raw, kind)
    curve = elbow_curve(x, kind, 1, 4, FitConfig(k=1, restarts=3, max_iter=150))
    assert curve.ks() == [1, 2, 3, 4]
    assert curve.is_monotone(1e-6)
    assert all(e.restarts == 3 for e in curve.entries)


def test_elbow_on_exact_three_archetype_data():
    # observations are convex combinations of three observed vertices
    verts = np.array([[0.0, 6.0, 0.0], [0.0, 0.0, 6.0], [1.0, 1.0, 1.0]])
    rng = np.random.default_rng(5)
    h = rng.dirichlet(np.full(3, 0.7), size=60).T
    x = DataMatrix(np.hstack([verts, verts @ h]))
    curve = elbow_curve(x, "normal", 2, 4, FitConfig(k=2, restarts=5))
    nll = dict(zip(curve.ks(), curve.nlls()))
    assert nll[3] < 1e-8 and nll[4] <= nll[3] + 1e-6
    assert nll[2] >= 1.1 * nll[3] and nll[2] > 1.0


def test_elbow_argument_checks():
    x = _poisson_data(n=5)
    with pytest.raises(InvalidConfig):
        elbow_curve(x, "poisson", 3, 2, FitConfig(k=1))
    with pytest.raises(InvalidConfig):
        elbow_curve(x, "poisson", 2, 6, FitConfig(k=1))


def test_kneedle_flags_heuristic():
    assert kneedle([1, 2, 3, 4, 5, 6], [100, 40, 20, 18, 17, 16]) == 3
    assert kneedle([1, 2], [2, 1]) is None
    curve = ElbowCurve(tuple(ElbowEntry(k, v, 0, 1) for k, v in
                             zip([1, 2, 3, 4], [10.0, 3.0, 2.5, 2.4])), "normal")
    assert curve.suggestion() == {"k": 2, "method": "kneedle", "status": "heuristic"}
    with pytest.raises(InvalidConfig):
        ElbowCurve((ElbowEntry(2, 1.0, 0, 1), ElbowEntry(1, 2.0, 0, 1)), "normal")


def test_default_jobs_env(monkeypatch):
    monkeypatch.setenv("PAA_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("PAA_JOBS", "zero")
    with pytest.raises(InvalidConfig):
        default_jobs()
    monkeypatch.delenv("PAA_JOBS")
    assert default_jobs() >= 1
