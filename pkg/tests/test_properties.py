import math

import numpy as np
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from emgmm import bounds, core, oracle, solvers
from emgmm.errors import DegenerateComponent

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
lams = st.floats(min_value=0.01, max_value=0.49)


@st.composite
def mixtures(draw, max_k=4, max_d=4, scale=1e3):
    K = draw(st.integers(1, max_k))
    d = draw(st.integers(1, max_d))
    means = draw(hnp.arrays(np.float64, (K, d),
                            elements=st.floats(-scale, scale, allow_nan=False)))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=K, max_size=K)))
    weights = raw / raw.sum()
    if K > 1:
        gaps = np.linalg.norm(means[:, None] - means[None], axis=-1)[np.triu_indices(K, 1)]
        assume(gaps.min() > 1e-3)
    return core.build_model(means, weights)


@given(mixtures(), hnp.arrays(np.float64, (5, 4), elements=finite))
@settings(max_examples=200, deadline=None)
def test_responsibilities_are_probabilities(model, xs):
    x = xs[:, : model.d]
    w = core.responsibilities(x, model.means, model.weights)
    assert np.all((w >= 0) & (w <= 1))
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


@given(mixtures(max_k=3, max_d=3, scale=20.0), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_em_step_stays_in_sample_hull(model, seed):
    x = core.sample(model, 50, seed).points
    est = model.means + 0.5
    try:
        new = solvers.em_step(x, est, model.weights)
    except DegenerateComponent:
        return
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.maximum(hi - lo, 1.0)
    assert np.all(new.means >= lo - 1e-9 * span) and np.all(new.means <= hi + 1e-9 * span)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 3)),
                  elements=st.floats(-50, 50)),
       hnp.arrays(np.float64, 3, elements=st.floats(-50, 50)))
@settings(max_examples=100, deadline=None)
def test_single_component_identities(x, start):
    mu = start[: x.shape[1]][None, :]
    em = solvers.em_step(x, mu, [1.0])
    assert np.allclose(solvers.em_step(x, em, [1.0]).means, em.means, rtol=0, atol=1e-12)
    g = solvers.gradient_em_step(x, mu, [1.0], 1.0)
    assert np.allclose(g.means, em.means, rtol=1e-12, atol=1e-12 * (1 + np.abs(x).max()))


@given(mixtures(max_k=4, max_d=5, scale=30.0), lams, st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_initializers_land_in_region(model, lam, seed):
    assume(model.K > 1)
    assert core.in_region(core.init_sphere(model, lam, seed), model, lam)
    assert core.in_region(core.init_line_pair(model, lam, seed), model, lam)


@given(mixtures(max_k=3, max_d=3, scale=10.0), st.integers(1, 200), st.integers(0, 2**63))
@settings(max_examples=30, deadline=None)
def test_sampling_is_deterministic(model, n, seed):
    a, b = core.sample(model, n, seed), core.sample(model, n, seed)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)


@given(st.floats(0.001, 0.498), st.floats(0.0001, 0.001))
def test_decay_rate_decreasing(lam, step):
    hi = bounds.decay_rate(lam)
    assert 0 < bounds.decay_rate(lam + step) < hi < 0.125


@given(lams, st.integers(2, 50), st.floats(1.0, 10.0))
def test_contraction_separation_monotone(lam, K, theta):
    pi_min = 1.0 / (K * theta)
    base = bounds.contraction_min_separation(lam, K, theta, pi_min)
    assert math.isfinite(base) and base > 0
    assert bounds.contraction_min_separation(lam, K, theta, pi_min / 2) > base
    assert bounds.contraction_min_separation(min(lam + 0.005, 0.499), K, theta, pi_min) > base
    assert bounds.contraction_min_separation(lam, K + 1, theta, pi_min * K / (K + 1)) > base


@given(lams, st.integers(2, 30))
def test_threshold_ordering(lam, K):
    eq9 = bounds.contraction_min_separation(lam, K, 1.0, 1.0 / K)
    assert eq9 >= bounds.denominator_min_separation(lam, K, 1.0) >= \
        bounds.cross_responsibility_min_separation(lam, 1.0)


@given(st.floats(0.0, 1e7))
def test_inverter_is_minimal(thr):
    n = bounds.min_n_over_log_n(thr)
    assert n / math.log(n) > thr
    assert n == 3 or (n - 1) / math.log(n - 1) <= thr


@given(lams, st.integers(2, 10), st.floats(1, 5), st.integers(1, 40),
       st.floats(0.1, 100), st.floats(0.1, 100))
def test_bounds_positive_and_finite(lam, K, theta, d0, r_i, r_j):
    for v in bounds.moment_bounds(lam, K, theta, d0, r_i, r_j):
        assert math.isfinite(v) and v >= 0
    assert 0 <= bounds.cross_responsibility_bound(lam, 0.3, 0.2, r_i) < math.inf
    assert bounds.self_responsibility_lower(lam, K, theta, r_i) <= 1
    assert all(v > 0 for v in bounds.subgaussian_bounds(lam, r_i))


@given(st.floats(0.05, 6.0), st.floats(-4.0, 8.0), st.floats(0.05, 4.0), st.floats(0.05, 1.0))
@settings(max_examples=150, deadline=None)
def test_g_integral_monotone(a, b, alpha, step):
    g = oracle.g_integral(a, b, alpha)
    assert 0 <= g <= 1
    assert oracle.g_integral(a, b + step, alpha) <= g + 1e-12
    if alpha > math.exp(-b):
        assert oracle.g_integral(a + step, b, alpha) >= g - 1e-12


@given(st.integers(2, 6), st.integers(2, 6), lams, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_ab_bounds_hold_in_region(K, d, lam, seed):
    rng = np.random.default_rng(seed)
    model = core.build_model(rng.normal(scale=5.0, size=(K, d)), core.equal_weights(K))
    est = core.init_sphere(model, lam, seed)
    ab = oracle.ab_values(model, est, 0, 1, lam)
    assert 0 < ab.a <= ab.a_star * (1 + 1e-12)
    assert ab.b >= ab.b_star - 1e-9 * abs(ab.b_star)
