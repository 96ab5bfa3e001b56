import math

import numpy as np
import pytest

from emgmm import bounds, core, solvers
from emgmm.errors import ConfigError, DegenerateComponent, NonFiniteInput


def brute_em_step(x, means, weights):
    """Responsibility-weighted means, one point at a time with exact sums."""
    K = means.shape[0]
    num = [[0.0] * x.shape[1] for _ in range(K)]
    num_terms = [[[] for _ in range(x.shape[1])] for _ in range(K)]
    den_terms = [[] for _ in range(K)]
    for p in x:
        logits = [math.log(weights[k]) - 0.5 * sum((p - means[k]) ** 2) for k in range(K)]
        top = max(logits)
        e = [math.exp(v - top) for v in logits]
        tot = sum(e)
        for k in range(K):
            w = e[k] / tot
            den_terms[k].append(w)
            for c in range(x.shape[1]):
                num_terms[k][c].append(w * p[c])
    for k in range(K):
        den = math.fsum(den_terms[k])
        num[k] = [math.fsum(t) / den for t in num_terms[k]]
    return np.array(num)


def test_em_step_matches_brute_force_and_improves():
    m = core.build_model(np.array([[0.0], [10.0]]), [0.5, 0.5])
    x = core.sample(m, 10_000, 4).points
    start = np.array([[1.0], [9.0]])
    new = solvers.em_step(x, start, m.weights)
    assert np.allclose(new.means, brute_em_step(x, start, m.weights), rtol=1e-12, atol=1e-13)
    assert core.estimate_error(new, m) < core.estimate_error(start, m)


def test_single_component_is_sample_mean():
    x = np.random.default_rng(0).normal(size=(500, 3))
    est = solvers.em_step(x, np.array([[5.0, 5.0, 5.0]]), [1.0])
    assert np.allclose(est.means[0], x.mean(axis=0), rtol=1e-13, atol=1e-15)
    again = solvers.em_step(x, est, [1.0])
    assert np.allclose(again.means, est.means, rtol=1e-13, atol=1e-15)
    g = solvers.gradient_em_step(x, np.array([[5.0, 5.0, 5.0]]), [1.0], 1.0)
    assert np.allclose(g.means, est.means, rtol=1e-12, atol=1e-14)


def test_single_sample():
    x = np.array([[1.5, -2.0]])
    est = solvers.em_step(x, np.array([[1.0, -2.0], [1.2, -1.0]]), [0.5, 0.5])
    assert np.allclose(est.means, np.repeat(x, 2, axis=0))


def test_gradient_zero_step_is_identity():
    x = np.random.default_rng(1).normal(size=(50, 2))
    mu = np.array([[0.0, 0.0], [3.0, 0.0]])
    assert np.array_equal(solvers.gradient_em_step(x, mu, [0.5, 0.5], 0.0).means, mu)
    with pytest.raises(NonFiniteInput):
        solvers.gradient_em_step(x, mu, [0.5, 0.5], float("nan"))


def test_degenerate_component():
    x = np.zeros((10, 1))
    with pytest.raises(DegenerateComponent) as info:
        solvers.em_step(x, np.array([[0.0], [60.0]]), [0.5, 0.5])
    assert info.value.component == 1


def test_run_records_and_is_deterministic():
    m = core.build_model(core.make_centers("equispaced_1d", 3, 1, 10.0), core.equal_weights(3))
    x = core.sample(m, 5000, 3).points
    init = core.init_sphere(m, 0.4, 1)
    cfg = solvers.SolverConfig(max_iters=20)
    a = solvers.run(x, init, m.weights, cfg, reference=m, region_lambda=0.4)
    b = solvers.run(x, init, m.weights, cfg, reference=m, region_lambda=0.4)
    assert len(a.errors) == a.iterations_run + 1 == 21
    assert a.errors == b.errors and np.array_equal(a.final.means, b.final.means)
    assert len(a.in_region_flags) == 21 and a.in_region_flags[0]
    none = solvers.run(x, init, m.weights, solvers.SolverConfig(max_iters=0), reference=m)
    assert none.errors == [pytest.approx(core.estimate_error(init, m))]


def test_run_reports_failing_iteration():
    x = np.zeros((5, 1))
    with pytest.raises(DegenerateComponent) as info:
        solvers.run(x, np.array([[0.0], [60.0]]), [0.5, 0.5], solvers.SolverConfig(max_iters=3))
    assert info.value.iteration == 1


def test_step_size_validated_only_with_model():
    m = core.build_model(np.array([[0.0], [10.0]]), [0.5, 0.5])
    x = core.sample(m, 100, 0).points
    cfg = solvers.SolverConfig(algorithm="gradient_em", step_size=2.5, max_iters=1)
    solvers.run(x, m.means, m.weights, cfg)
    with pytest.raises(ConfigError):
        solvers.run(x, m.means, m.weights, cfg, reference=m)


def test_early_stop_needs_reference():
    with pytest.raises(ConfigError):
        solvers.run(np.zeros((3, 1)), np.array([[0.0]]), [1.0],
                    solvers.SolverConfig(stop_tol=1e-8))


def test_sanity_with_enough_samples():
    lam = 0.4
    r = bounds.contraction_min_separation(lam, 3, 1.0, 1 / 3)
    m = core.build_model(core.regular_simplex_centers(3, 2, r), core.equal_weights(3))
    st = core.separation_stats(m)
    thr = bounds.sample_thresholds(lam, 0.05, 3, 2, st.pi_min, st.r_min, st.per_component,
                                   st.r_max)
    n = bounds.min_n_over_log_n(thr.em)
    x = core.sample(m, n, 9).points
    init = core.init_sphere(m, lam, 2)
    traj = solvers.run(x, init, m.weights, solvers.SolverConfig(max_iters=30), reference=m)
    assert traj.final_error < traj.initial_error
