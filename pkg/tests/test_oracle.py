import math

import numpy as np
import pytest

from emgmm import bounds, core, oracle
from emgmm.errors import DegenerateComponent, DomainError, RegionViolation

MC = oracle.McConfig(n_mc=200_000, seed=5)


def two_component(r=6.0, d=2, weights=(0.5, 0.5)):
    means = np.zeros((2, d))
    means[1, 0] = r
    return core.build_model(means, list(weights))


def test_mc_config_validation():
    with pytest.raises(ValueError):
        oracle.McConfig(n_mc=999)


def test_single_component_update_is_draw_mean():
    m = core.build_model(np.array([[1.0, -2.0, 0.5]]), [1.0])
    new, se = oracle.population_em_step(m, np.array([[9.0, 9.0, 9.0]]), MC)
    assert np.linalg.norm(new.means[0] - m.means[0]) <= 5 / math.sqrt(MC.n_mc) * math.sqrt(3)
    assert se[0] > 0


def test_fixed_point_both_updates():
    m = two_component()
    new, se = oracle.population_em_step(m, m.means, MC)
    assert np.all(core.per_component_errors(new, m) <= 5 * se)
    g, gse = oracle.population_gradient_em_step(m, m.means, 1.0, MC)
    assert np.all(core.per_component_errors(g, m) <= 5 * gse)


def test_gradient_zero_step_and_range():
    m = two_component()
    est = m.means + 0.5
    g, _ = oracle.population_gradient_em_step(m, est, 0.0, MC)
    assert np.array_equal(g.means, est)
    with pytest.raises(DomainError):
        oracle.population_gradient_em_step(m, est, 2.0, MC)


def test_degenerate_denominator():
    m = two_component(r=6.0)
    far = np.array([[0.0, 0.0], [500.0, 0.0]])
    with pytest.raises(DegenerateComponent):
        oracle.population_em_step(m, far, MC)


def test_expected_responsibility():
    one = core.build_model(np.zeros((1, 2)), [1.0])
    e = oracle.expected_responsibility(one, one.means, 0, 0, MC)
    assert e.value == 1.0 and e.std_error == 0.0
    m = two_component(r=2.0)
    a = oracle.expected_responsibility(m, m.means, 0, 0, MC)
    b = oracle.expected_responsibility(m, m.means, 1, 1, MC)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def test_expected_responsibility_matches_quadrature():
    m = two_component(r=4.0, weights=(0.3, 0.7))
    est = oracle.adversarial_estimate(m, 0, 1, 0.2)
    e = oracle.expected_responsibility(m, est, 0, 1, oracle.McConfig(n_mc=10**6, seed=2))
    ab = oracle.ab_values(m, est, 0, 1, 0.2)
    g = oracle.g_integral(ab.a, ab.b, ab.alpha)
    assert abs(e.value - g) <= 4 * e.std_error


def test_denominator_check():
    m = two_component(r=8.0, weights=(0.2, 0.8))
    w = oracle.expected_weights(m, m.means, MC)
    assert np.allclose(w.value, m.weights, atol=5 * w.std_error.max())
    assert oracle.denominator_lower_bound_check(m, m.means, MC) == [True, True]
    one = core.build_model(np.zeros((1, 2)), [1.0])
    assert oracle.denominator_lower_bound_check(one, one.means, MC) == [True]


def test_g_integral_examples():
    assert oracle.g_integral(0.0, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert oracle.g_integral(1.0, 50.0, 1.0) < 1e-10
    assert oracle.g_integral(2, 1, 1) > oracle.g_integral(2, 2, 1) > oracle.g_integral(2, 3, 1)
    assert oracle.g_integral(1, 1, 1) < oracle.g_integral(2, 1, 1)


def test_g_integral_vs_trapezoid():
    for a, b, alpha in [(0.5, -1.0, 2.0), (3.0, 4.0, 0.25), (6.0, 12.0, 1.0)]:
        assert oracle.g_integral(a, b, alpha) == pytest.approx(
            oracle.g_integral_trapezoid(a, b, alpha), abs=1e-8)


def test_ab_values():
    m = two_component(r=10.0)
    ab = oracle.ab_values(m, m.means, 0, 1, 0.3)
    assert ab.a == pytest.approx(10.0) and ab.b == pytest.approx(50.0)
    assert ab.a_star == pytest.approx(16.0) and ab.b_star == pytest.approx(20.0)
    adv = oracle.adversarial_estimate(m, 0, 1, 0.3)
    ext = oracle.ab_values(m, adv, 0, 1, 0.3)
    assert ext.b == pytest.approx(ab.b_star, rel=1e-12)
    assert ext.a == pytest.approx(10.0, rel=1e-12)
    assert core.in_region(adv, m, 0.3)
    with pytest.raises(RegionViolation):
        oracle.ab_values(m, m.means + np.array([[4.0, 0.0], [0.0, 0.0]]), 0, 1, 0.3)


def test_ab_values_random_search():
    rng = np.random.default_rng(3)
    m = core.build_model(rng.normal(scale=5, size=(3, 4)), [0.2, 0.3, 0.5])
    r = core.separation_stats(m).per_component
    lam = 0.35
    for _ in range(1000):
        u = rng.normal(size=(3, 4))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        est = m.means + (lam * r * rng.uniform(0, 1, 3) ** 0.25)[:, None] * u
        ab = oracle.ab_values(m, est, 0, 1, lam)
        assert ab.a <= ab.a_star + 1e-9 and ab.b >= ab.b_star - 1e-9 and ab.a > 0


def test_operator_norm_paths():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(80, 80))
    exact = np.linalg.norm(a, 2)
    assert oracle.operator_norm(a) == pytest.approx(exact, rel=1e-5)
    s = a[:10, :10]
    assert oracle.operator_norm(s) == pytest.approx(np.linalg.norm(s, 2), rel=1e-12)


def test_v_matrix_single_component_is_zero():
    one = core.build_model(np.zeros((1, 3)), [1.0])
    v = oracle.v_matrix_norm(one, one.means, "estimate", 0, 0, MC)
    assert v.value <= 3 * v.std_error + 1e-300


def test_cross_moment_single_component():
    d = 4
    one = core.build_model(np.zeros((1, d)), [1.0])
    e = oracle.cross_moment(one, one.means, "truth", 0, 0, 0, oracle.McConfig(10**6, seed=1))
    assert abs(e.value - (d * d + 2 * d)) <= 5 * e.std_error


def test_psi2_norm_of_standard_normal():
    y = np.random.default_rng(4).standard_normal(10**6)
    assert oracle.psi2_norm(y) == pytest.approx(math.sqrt(8 / 3), rel=0.05)
    assert oracle.psi2_norm(np.zeros(5)) == 0.0


def test_subgaussian_norm_within_bound():
    lam = 0.25
    r = 1.2 * bounds.subgaussian_min_separation(lam, 1.0)
    m = core.build_model(core.regular_simplex_centers(2, 2, r), core.equal_weights(2))
    est = core.init_sphere(m, lam, 1)
    v = oracle.subgaussian_norm(m, est, 0, "truth", 8, MC)
    assert 0 < v <= 1.1 * bounds.subgaussian_bounds(lam, r)[0]


def test_oracle_is_deterministic():
    m = two_component()
    a, _ = oracle.population_em_step(m, m.means + 0.3, MC)
    b, _ = oracle.population_em_step(m, m.means + 0.3, MC)
    assert np.array_equal(a.means, b.means)


def test_exponential_decay_shape():
    lam = 0.2
    c = bounds.decay_rate(lam)
    rs = np.array([4.0, 6.0, 8.0])
    logs = []
    for r in rs:
        m = two_component(r=r)
        est = oracle.adversarial_estimate(m, 0, 1, lam)
        e = oracle.expected_responsibility(m, est, 0, 1, oracle.McConfig(10**6, seed=3))
        logs.append(math.log(e.value))
    slopes = np.diff(logs) / np.diff(rs**2)
    assert np.all(slopes <= -c)
