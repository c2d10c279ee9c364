import math

import numpy as np
import pytest

from rinstance.data import Dataset, PlantedSpec, Tweet, generate_planted
from rinstance.evaluate import reference_elastic_net_lr, reference_objective
from rinstance.graph import laplacian
from rinstance.model import Hyper, ModelParams, full_objective, initial_params
from rinstance.optimizer import (TRACE_COLUMNS, BCDConfig, LineSearchError,
                                 converged, eta_schedule, extrapolate, fit,
                                 line_search, save_trace)
from conftest import random_dataset, random_graph


def test_extrapolate_examples():
    assert extrapolate(2.0, 1.0, 1.0) == 3.0
    np.testing.assert_array_equal(extrapolate(np.ones(2), np.zeros(2), 0.0),
                                  np.ones(2))
    np.testing.assert_array_equal(extrapolate(np.ones(2), np.ones(2), 0.7),
                                  np.ones(2))


def test_eta_schedule():
    assert eta_schedule(1) == 0.0
    t1 = (1 + math.sqrt(5)) / 2
    t2 = (1 + math.sqrt(1 + 4 * t1 * t1)) / 2
    assert eta_schedule(2) == pytest.approx((t1 - 1) / t2)
    seq = [eta_schedule(k) for k in range(1, 300)]
    assert all(a < b for a, b in zip(seq, seq[1:])) and seq[-1] < 1
    assert eta_schedule(50, 'zero') == 0.0
    with pytest.raises(ValueError):
        eta_schedule(0)


def test_line_search_quadratic_bound():
    for c in (0.3, 1.0, 7.5, 100.0):
        f = lambda x, c=c: 0.5 * c * float(x @ x)
        x0 = np.array([1.0, -2.0])
        res = line_search(f, x0, c * x0, L_start=0.01)
        assert res.L <= 2.0 * c
        assert res.alpha == pytest.approx(1.0 / res.L)


def test_line_search_zero_gradient_accepts_first_L():
    f = lambda x: float(x @ x)
    res = line_search(f, np.zeros(3), np.zeros(3), L_start=0.5)
    assert res.L == 0.5
    np.testing.assert_array_equal(res.point, np.zeros(3))


def test_line_search_result_satisfies_criterion(rng):
    f = lambda x: float(np.sum(np.logaddexp(0, x)) + np.sum(x ** 4))
    for _ in range(20):
        p = rng.standard_normal(4)
        g = 1 / (1 + np.exp(-p)) + 4 * p ** 3
        prox = lambda v, a: np.sign(v) * np.maximum(np.abs(v) - 0.1 * a, 0)
        res = line_search(f, p, g, prox, L_start=1e-3)
        diff = res.point - p
        assert f(res.point) <= f(p) + g @ diff + 0.5 * res.L * diff @ diff + 1e-12


def test_line_search_gives_up():
    # a jump away from the origin can never satisfy the upper model
    f = lambda x: 0.0 if not x.any() else 1.0
    with pytest.raises(LineSearchError):
        line_search(f, np.zeros(1), np.array([-1.0]), max_doublings=3)


def test_converged_rule():
    assert converged([5.0, 5.0], 1e-6)
    halving = [2.0 ** -k for k in range(5)]
    assert not converged(halving[:2], 1e-9)
    assert not converged([1.0], 1e-6)


def test_config_validation():
    for bad in (dict(max_iter=0), dict(tol=0), dict(xi=1.5),
                dict(ls_growth=1.0), dict(eta_mode='heavy')):
        with pytest.raises(ValueError):
            BCDConfig(**bad)


def small_planted(seed=0):
    d, _ = generate_planted(PlantedSpec(m=200, k=10, seed=seed))
    lap = laplacian(random_graph(np.random.default_rng(seed), 200, p=0.02))
    return d, lap


def test_fit_descends_and_stays_feasible():
    d, lap = small_planted()
    h = Hyper(r=3)
    seen = []

    def check(k, p):
        seen.append(max(np.count_nonzero(x) for x in p.u))

    p, tr = fit(d, lap, h, BCDConfig(max_iter=60), callback=check)
    assert tr.records[-1].objective < tr.initial_objective
    objs = [tr.initial_objective] + tr.objectives
    assert max(np.diff(objs)) <= 1e-8
    assert max(seen) <= 3 and len(seen) == len(tr)
    assert full_objective(d, lap, p, h) == pytest.approx(objs[-1])


def test_fit_separable_two_tweets():
    d = Dataset([Tweet('a', 1, np.array([[1.0, 0.0]])),
                 Tweet('b', -1, np.array([[-1.0, 0.0]]))], 2)
    h = Hyper(lambda1=0, lambda2=0, lambda3=0, r=1)
    p, _ = fit(d, None, h, BCDConfig(max_iter=100))
    z = np.array([t.words.T @ u for t, u in zip(d.tweets, p.u)])
    assert np.all(np.sign(z @ p.beta) == d.labels)


def test_fit_matches_reference_in_reduction(rng):
    for _ in range(5):
        d = random_dataset(rng, m=25, k=4, n_range=(1, 5))
        h = Hyper(lambda3=0.0, r=int(d.lengths.max()))
        p, tr = fit(d, None, h, BCDConfig(max_iter=5000, tol=1e-12,
                                          freeze_u=True))
        assert all(np.all(x == 1) for x in p.u)
        beta = reference_elastic_net_lr(d, h.lambda1, h.lambda2)
        assert tr.records[-1].objective == pytest.approx(
            reference_objective(d, beta, h.lambda1, h.lambda2), abs=1e-4)


def test_zero_eta_without_penalties_is_plain_gradient_descent(rng):
    # with frozen unit weights and no penalties, each beta step is a plain
    # gradient step with the same backtracking rule
    d = random_dataset(rng, m=12, k=2, n_range=(1, 3))
    h = Hyper(lambda1=0.0, lambda2=0.0, lambda3=0.0, r=3)
    cfg = BCDConfig(max_iter=15, tol=1e-15, eta_mode='zero', freeze_u=True)
    init = initial_params(d, h)
    init.u = [np.ones(n) for n in d.lengths]
    betas = []
    fit(d, None, h, cfg, init=init, callback=lambda k, p: betas.append(p.beta))
    z = np.array([t.words.sum(0) for t in d.tweets])
    y = d.labels
    f = lambda b: float(np.logaddexp(0, -y * (z @ b)).sum())
    grad = lambda b: z.T @ (-y / (1 + np.exp(y * (z @ b))))
    beta, L = init.beta.copy(), cfg.L_init
    for expect in betas:
        res = line_search(f, beta, grad(beta), L_start=max(cfg.L_init, L / 2))
        beta, L = res.point, res.L
        np.testing.assert_allclose(expect, beta, rtol=1e-12, atol=1e-14)


def test_fit_is_deterministic():
    d, lap = small_planted(1)
    a, ta = fit(d, lap, Hyper(r=3), BCDConfig(max_iter=20, seed=4))
    b, tb = fit(d, lap, Hyper(r=3), BCDConfig(max_iter=20, seed=4))
    np.testing.assert_array_equal(a.beta, b.beta)
    assert ta.objectives == tb.objectives


def test_fit_checks_shapes(rng):
    d = random_dataset(rng, m=5, k=2)
    with pytest.raises(ValueError):
        fit(d, laplacian(random_graph(rng, 4)), Hyper())
    bad = ModelParams(np.zeros(3), [np.zeros(n) for n in d.lengths])
    with pytest.raises(ValueError):
        fit(d, None, Hyper(lambda3=0), init=bad)


def test_fit_unlabeled_tweets_are_fine(rng):
    d = random_dataset(rng, m=30, k=3, unlabeled=0.5)
    lap = laplacian(random_graph(rng, 30, p=0.2))
    _, tr = fit(d, lap, Hyper(r=2), BCDConfig(max_iter=30))
    assert tr.records[-1].objective <= tr.initial_objective


def test_trace_file(tmp_path):
    d, lap = small_planted()
    _, tr = fit(d, lap, Hyper(r=3), BCDConfig(max_iter=5))
    save_trace(tr, tmp_path / 't.csv', header='h')
    lines = (tmp_path / 't.csv').read_text().splitlines()
    assert lines[0] == '# h'
    assert lines[1] == ','.join(TRACE_COLUMNS[:-1])
    assert len(lines) == 2 + 1 + len(tr)
    save_trace(tr, tmp_path / 'm.csv', timings=True)
    assert (tmp_path / 'm.csv').read_text().splitlines()[0].endswith('millis')
