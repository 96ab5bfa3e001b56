"""Monte Carlo realizations of population-level expectations.

Every expectation over the mixture is estimated on a stratified draw
(exactly ``round(n_mc * pi_k)`` points from component ``k``) and carries a
standard error from batch means: each stratum is cut into ``n_batches``
contiguous batches, the estimator is recomputed per batch, and the standard
error is the standard deviation of those batch values over
``sqrt(n_batches)``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_hermite

from . import rng as _rng
from .core import (
    MeansEstimate,
    as_means,
    init_sphere,
    log_responsibilities,
    per_component_errors,
    random_unit_vectors,
    separation_stats,
)
from .errors import (
    ConfigError,
    DegenerateComponent,
    DomainError,
    MomentExplosion,
    NonFiniteInput,
    PowerIterationNotConverged,
    QuadratureNotConverged,
    RegionViolation,
    ShapeMismatch,
)

MIN_MC = 1000
DENSE_NORM_MAX_DIM = 64


@dataclass(frozen=True)
class McConfig:
    n_mc: int = 10**6
    seed: int = 0
    stratify: bool = True
    n_batches: int = 10

    def __post_init__(self):
        if self.n_mc < MIN_MC:
            raise ConfigError(f"n_mc must be >= {MIN_MC}")
        if self.n_batches < 2:
            raise ConfigError("need at least two batches for a standard error")


@dataclass(frozen=True)
class McEstimate:
    value: object
    std_error: object
    n_used: int
    seed: int

    def upper(self, k=3.0):
        return np.asarray(self.value) + k * np.asarray(self.std_error)

    def lower(self, k=3.0):
        return np.asarray(self.value) - k * np.asarray(self.std_error)


@dataclass(frozen=True)
class ABPair:
    a: float
    b: float
    a_star: float
    b_star: float
    alpha: float


# --------------------------------------------------------------------------
# draws and batch bookkeeping


class _Draw:
    """Points grouped into strata, each with a mixture weight.

    Batches are contiguous chunks within each stratum.  For a stratified draw
    the expectation is ``sum_s pi_s mean_s(f)``; for a plain draw there is one
    stratum with weight one.
    """

    def __init__(self, strata, stratum_weights, n_batches):
        self.strata = strata
        self.stratum_weights = np.asarray(stratum_weights, dtype=np.float64)
        self.n_batches = n_batches
        self.points = np.concatenate(strata, axis=0)
        self.sizes = [s.shape[0] for s in strata]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        if min(self.sizes) < n_batches:
            raise ConfigError("n_mc too small for the requested number of batches")

    @property
    def n(self):
        return self.points.shape[0]

    def _stratum_slices(self):
        for s in range(len(self.strata)):
            yield s, slice(self.offsets[s], self.offsets[s + 1])

    def expect(self, values):
        """Expectation and batch values of per-point ``values`` (leading axis n)."""
        values = np.asarray(values, dtype=np.float64)
        tail = values.shape[1:]
        total = np.zeros(tail)
        batches = np.zeros((self.n_batches,) + tail)
        for s, sl in self._stratum_slices():
            v = values[sl]
            wgt = self.stratum_weights[s]
            total += wgt * np.mean(v, axis=0)
            for b, chunk in enumerate(np.array_split(v, self.n_batches, axis=0)):
                batches[b] += wgt * np.mean(chunk, axis=0)
        return total, batches

    def expect_outer(self, scale, left, right):
        """``E[scale * left right^T]`` and its batch values."""
        d = left.shape[1]
        total = np.zeros((d, d))
        batches = np.zeros((self.n_batches, d, d))
        for s, sl in self._stratum_slices():
            wgt = self.stratum_weights[s]
            a, l, r = scale[sl], left[sl], right[sl]
            total += wgt * ((l * a[:, None]).T @ r) / a.shape[0]
            for b, idx in enumerate(np.array_split(np.arange(a.shape[0]), self.n_batches)):
                batches[b] += wgt * ((l[idx] * a[idx, None]).T @ r[idx]) / idx.size
        return total, batches


def _batch_se(batches):
    nb = batches.shape[0]
    return np.std(batches, axis=0, ddof=1) / math.sqrt(nb)


def _mixture_draw(model, mc, tag):
    if mc.stratify:
        g = _rng.stream(mc.seed, tag)
        strata = []
        for k in range(model.K):
            m = max(int(round(mc.n_mc * model.weights[k])), mc.n_batches)
            strata.append(model.means[k] + g.standard_normal((m, model.d)))
        return _Draw(strata, model.weights, mc.n_batches)
    g = _rng.stream(mc.seed, tag)
    labels = g.choice(model.K, size=mc.n_mc, p=model.weights)
    pts = model.means[labels] + g.standard_normal((mc.n_mc, model.d))
    return _Draw([pts], [1.0], mc.n_batches)


def _component_draw(model, k, mc, tag):
    g = _rng.stream(mc.seed, tag, k)
    pts = model.means[k] + g.standard_normal((mc.n_mc, model.d))
    return _Draw([pts], [1.0], mc.n_batches)


def _resp(points, means, weights):
    w = np.exp(log_responsibilities(points, means, weights))
    w /= w.sum(axis=1, keepdims=True)
    return w


def _estimate_means(model, estimate):
    means = as_means(estimate)
    if means.shape != model.means.shape:
        raise ShapeMismatch(f"estimate shape {means.shape} != model shape {model.means.shape}")
    if not np.all(np.isfinite(means)):
        raise NonFiniteInput("estimate contains non-finite coordinates")
    return means


def _check_region(model, means, lam):
    stats = separation_stats(model)
    errs = per_component_errors(means, model)
    if model.K > 1 and np.any(errs > lam * stats.per_component):
        raise RegionViolation(
            f"estimate outside the lambda={lam} region: "
            f"ratios {np.round(errs / stats.per_component, 6).tolist()}"
        )
    return stats


# --------------------------------------------------------------------------
# population updates


def population_em_step(model, estimate, mc):
    """Population EM update with expectations replaced by one shared MC draw.

    Returns ``(MeansEstimate, std_errors)`` where ``std_errors[i]`` is the
    delta-method standard error of ``mu+_i`` (Euclidean norm of the
    coordinate-wise standard errors).
    """
    means = _estimate_means(model, estimate)
    draw = _mixture_draw(model, mc, "population_em")
    w = _resp(draw.points, means, model.weights)
    out = np.empty_like(means)
    se = np.empty(model.K)
    for i in range(model.K):
        den, den_b = draw.expect(w[:, i])
        num, num_b = draw.expect(w[:, i, None] * draw.points)
        den_se = float(_batch_se(den_b))
        if den < 10.0 * den_se or den <= 0:
            raise DegenerateComponent(i, detail=f"E[w_i] = {den:.3g} +- {den_se:.3g}")
        out[i] = num / den
        resid = (num_b - out[i][None, :] * den_b[:, None]) / den
        se[i] = float(np.linalg.norm(_batch_se(resid)))
    return MeansEstimate(out), se


def population_gradient_em_step(model, estimate, step_size, mc):
    """Population gradient EM update ``mu_i + s E[w_i (X - mu_i)]`` by MC."""
    stats = separation_stats(model)
    if not 0 <= step_size < 1.0 / stats.pi_min:
        raise DomainError(f"step size must lie in [0, 1/pi_min = {1 / stats.pi_min:g})")
    means = _estimate_means(model, estimate)
    draw = _mixture_draw(model, mc, "population_gradient_em")
    w = _resp(draw.points, means, model.weights)
    out = np.empty_like(means)
    se = np.empty(model.K)
    for i in range(model.K):
        g, g_b = draw.expect(w[:, i, None] * (draw.points - means[i]))
        out[i] = means[i] + step_size * g
        se[i] = step_size * float(np.linalg.norm(_batch_se(g_b)))
    return MeansEstimate(out), se


# --------------------------------------------------------------------------
# responsibility expectations


def expected_responsibility(model, estimate, source, target, mc):
    """``E_source[w_target(X, mu)]`` with ``X ~ N(mu*_source, I)``."""
    means = _estimate_means(model, estimate)
    if model.K == 1:
        return McEstimate(1.0, 0.0, mc.n_mc, mc.seed)
    draw = _component_draw(model, source, mc, "expected_responsibility")
    w = _resp(draw.points, means, model.weights)[:, target]
    val, b = draw.expect(w)
    return McEstimate(float(val), float(_batch_se(b)), draw.n, mc.seed)


def expected_weights(model, estimate, mc):
    """``E_X[w_i(X, mu)]`` for every ``i`` over the full mixture."""
    means = _estimate_means(model, estimate)
    draw = _mixture_draw(model, mc, "expected_weights")
    w = _resp(draw.points, means, model.weights)
    val, b = draw.expect(w)
    return McEstimate(val, _batch_se(b), draw.n, mc.seed)


def denominator_lower_bound_check(model, estimate, mc, k_se=3.0):
    """Per component: ``E[w_i] + k_se * se >= 3/4 pi_i``."""
    est = expected_weights(model, estimate, mc)
    ok = est.upper(k_se) >= 0.75 * model.weights
    return [bool(x) for x in ok]


def adversarial_estimate(model, i, j, lam, seed=0):
    """Estimate at which ``E_i[w_j]`` is largest for the pair ``(i, j)``.

    Both ``mu_i`` and ``mu_j`` are shifted along ``mu*_i - mu*_j``, by
    ``lam * R_i`` and ``lam * R_j``: ``mu_i`` moves away from ``mu*_j`` and
    ``mu_j`` moves toward ``mu*_i``.  When ``R_i = R_j = R_ij`` this attains
    ``B = B*``, and among estimates with ``B = B*`` it has the largest ``A``
    (namely ``R_ij``).  Every other component is placed on its ``lam * R_k``
    sphere.
    """
    if i == j:
        raise ValueError("need two distinct components")
    stats = separation_stats(model)
    means = np.array(init_sphere(model, lam, seed).means) if model.K > 2 else np.array(model.means)
    u = (model.means[i] - model.means[j]) / stats.pairwise[i, j]
    means[i] = model.means[i] + lam * stats.per_component[i] * u
    means[j] = model.means[j] + lam * stats.per_component[j] * u
    return MeansEstimate(means)


# --------------------------------------------------------------------------
# one-dimensional reduction


@lru_cache(maxsize=16)
def _hermite(n):
    x, w = roots_hermite(n)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


def _g_rule(a, b, alpha, n):
    t, w = _hermite(n)
    z = a * t + b + math.log(alpha)
    return float(np.sum(w * np.exp(-np.logaddexp(0.0, z))))


def g_integral(a, b, alpha, tol=1e-10, start_nodes=200, max_nodes=204800):
    """``E_t[1 / (1 + alpha exp(a t + b))]`` for ``t ~ N(0, 1)``.

    Gauss-Hermite quadrature; the node count doubles from ``start_nodes``
    until two successive values agree to ``tol``.
    """
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(alpha)):
        raise NonFiniteInput("g_integral needs finite inputs")
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    n = start_nodes
    prev = _g_rule(a, b, alpha, n)
    while n < max_nodes:
        n *= 2
        cur = _g_rule(a, b, alpha, n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise QuadratureNotConverged(
        f"g({a}, {b}; alpha={alpha}) did not settle within {max_nodes} nodes"
    )


def g_integral_trapezoid(a, b, alpha, lo=-12.0, hi=12.0, points=10**6):
    """Brute-force trapezoid rule for :func:`g_integral` on ``[lo, hi]``."""
    t = np.linspace(lo, hi, points)
    f = np.exp(-np.logaddexp(0.0, a * t + b + math.log(alpha)) - 0.5 * t * t)
    return float(np.trapezoid(f, t) / math.sqrt(2.0 * math.pi))


def ab_values(model, estimate, i, j, lam):
    """Reduced-coordinate pair ``(A, B)`` and the extremal values ``A*, B*``."""
    means = _estimate_means(model, estimate)
    stats = _check_region(model, means, lam)
    xi_i = model.means[i] - means[i]
    xi_j = model.means[j] - means[j]
    diff = model.means[i] - model.means[j]
    r_ij = stats.pairwise[i, j]
    a = float(np.linalg.norm(diff - xi_i + xi_j))
    b = float(0.5 * np.sum((diff + xi_j) ** 2) - 0.5 * np.sum(xi_i**2))
    return ABPair(
        a=a,
        b=b,
        a_star=(1 + 2 * lam) * r_ij,
        b_star=0.5 * (1 - 2 * lam) * r_ij**2,
        alpha=float(model.weights[i] / model.weights[j]),
    )


# --------------------------------------------------------------------------
# second-moment matrices


def operator_norm(m, tol=1e-6, max_iter=200, dense_max_dim=DENSE_NORM_MAX_DIM):
    """Largest singular value: dense SVD up to ``dense_max_dim``, else power iteration."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] <= dense_max_dim:
        return float(np.linalg.norm(m, 2))
    gram = m.T @ m
    v = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    prev = 0.0
    for _ in range(max_iter):
        u = gram @ v
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return 0.0
        v = u / nrm
        sigma = math.sqrt(nrm)
        if abs(sigma - prev) <= tol * sigma:
            return sigma
        prev = sigma
    raise PowerIterationNotConverged(f"no convergence after {max_iter} iterations")


def _v_choice(model, means, v_choice):
    if v_choice == "estimate":
        return means
    if v_choice == "truth":
        return model.means
    raise ValueError("v_choice must be 'estimate' or 'truth'")


def v_matrix(model, estimate, v_choice, i, j, mc):
    """MC estimate of the responsibility-weighted cross second moment matrix.

    ``i != j``: ``E[w_i w_j (X - v_i)(X - mu_j)^T]``;
    ``i == j``: ``E[w_i (1 - w_i)(X - v_i)(X - mu_i)^T]``.
    Returns the full-sample matrix, the per-batch matrices and the draw size.
    """
    means = _estimate_means(model, estimate)
    v = _v_choice(model, means, v_choice)
    draw = _mixture_draw(model, mc, "v_matrix")
    w = _resp(draw.points, means, model.weights)
    scale = w[:, i] * (1.0 - w[:, i]) if i == j else w[:, i] * w[:, j]
    total, batches = draw.expect_outer(scale, draw.points - v[i], draw.points - means[j])
    return total, batches, draw.n


def v_matrix_norm(model, estimate, v_choice, i, j, mc):
    """Operator norm of :func:`v_matrix`; standard error from per-batch norms."""
    total, batches, n = v_matrix(model, estimate, v_choice, i, j, mc)
    value = operator_norm(total)
    norms = np.array([operator_norm(b) for b in batches])
    return McEstimate(value, float(_batch_se(norms)), n, mc.seed)


def cross_moment(model, estimate, v_choice, k, i, j, mc):
    """``E_k[||X - v_i||^2 ||X - mu_j||^2]`` with ``X ~ N(mu*_k, I)``."""
    means = _estimate_means(model, estimate)
    v = _v_choice(model, means, v_choice)
    draw = _component_draw(model, k, mc, "cross_moment")
    x = draw.points
    a = np.einsum("ij,ij->i", x - v[i], x - v[i])
    b = np.einsum("ij,ij->i", x - means[j], x - means[j])
    val, bt = draw.expect(a * b)
    return McEstimate(float(val), float(_batch_se(bt)), draw.n, mc.seed)


# --------------------------------------------------------------------------
# sub-Gaussian norm


def _mean_exp(y2, sw, t):
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(sw * np.exp(y2 / (t * t))))


def psi2_norm(y, sample_weights=None, rel_width=1e-3, max_doublings=10):
    """Smallest ``t`` with weighted mean of ``exp(y^2 / t^2)`` at most 2 (bisection)."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise MomentExplosion("non-finite values in sub-Gaussian norm input")
    if sample_weights is None:
        sample_weights = np.full(y.shape, 1.0 / y.size)
    sw = np.asarray(sample_weights, dtype=np.float64)
    y2 = y * y
    second = float(np.sum(sample_weights * y2))
    if second == 0.0:
        return 0.0
    hi = 2.0 * math.sqrt(second)
    for _ in range(max_doublings + 1):
        if _mean_exp(y2, sw, hi) <= 2.0:
            break
        hi *= 2.0
    else:
        raise MomentExplosion(f"E exp(Y^2/t^2) still above 2 at t = {hi / 2:g}")
    lo = hi / 2.0
    while _mean_exp(y2, sw, lo) <= 2.0:
        hi, lo = lo, lo / 2.0
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if _mean_exp(y2, sw, mid) <= 2.0:
            hi = mid
        else:
            lo = mid
    return hi


def subgaussian_norm(model, estimate, i, center_choice, n_directions, mc):
    """Directional sub-Gaussian norm of ``w_i(X, mu)(X - c_i)``, maximized over
    ``n_directions`` random unit directions.

    ``center_choice`` picks ``c_i = mu*_i`` (``"truth"``) or ``c_i = mu_i``
    (``"estimate"``).
    """
    means = _estimate_means(model, estimate)
    c = _v_choice(model, means, center_choice)
    draw = _mixture_draw(model, mc, "subgaussian")
    w = _resp(draw.points, means, model.weights)[:, i]
    z = (draw.points - c[i]) * w[:, None]
    sw = np.concatenate(
        [np.full(n, p / n) for n, p in zip(draw.sizes, draw.stratum_weights)]
    )
    dirs = random_unit_vectors(n_directions, model.d, mc.seed, "subgaussian_directions")
    return max(psi2_norm(z @ v, sw) for v in dirs)
