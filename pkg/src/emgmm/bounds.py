"""Closed-form separation thresholds, rates and bounds.

All logarithms are natural.  The effective dimension is ``min(d, 2K)`` for
both EM and gradient EM.  Universal constants without a published value
default to 1 and live in :class:`ConstantsConfig`.
"""

from dataclasses import dataclass, fields
import math

import numpy as np

from .core import separation_stats
from .errors import DomainError


@dataclass(frozen=True)
class ConstantsConfig:
    sample_const: float = 1.0  # leading constant of the sample-size conditions
    error_const: float = 1.0  # leading constant of the statistical error terms
    moment_const: float = 14.0  # weighted second-moment operator-norm bounds
    cross_moment_const: float = 14.0  # fourth-moment bound

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"{f.name} must be strictly positive")


def _check_lambda(lam):
    if not 0 < lam < 0.5:
        raise DomainError(f"lambda must lie in (0, 1/2), got {lam}")


def decay_rate(lam):
    """Exponent rate ``(1/8) ((1 - 2 lam) / (1 + 2 lam))^2``."""
    _check_lambda(lam)
    return 0.125 * ((1 - 2 * lam) / (1 + 2 * lam)) ** 2


def contraction_min_separation(lam, K, theta, pi_min):
    """Minimal ``R_min`` for one-step halving of the population EM error.

    For balanced weights this is at most
    ``sqrt((4/c) (2 log K + log(32 sqrt(28) / (3 c))))``.
    """
    if K < 2:
        raise DomainError("needs K >= 2")
    if theta < 1:
        raise DomainError("theta must be >= 1")
    if not 0 < pi_min <= 1.0 / K * (1 + 1e-12):
        raise DomainError("pi_min must lie in (0, 1/K]")
    c = decay_rate(lam)
    log_arg = (
        math.log(32 * (K - 1))
        + 0.5 * math.log(14 * (1 + theta))
        - math.log(3)
        - math.log(pi_min)
        - math.log(c)
    )
    return math.sqrt(max(4.0 / c * log_arg, 0.0))


def cross_responsibility_bound(lam, pi_i, pi_j, r_ij):
    """Upper bound on ``E_i[w_j]``: ``(1 + pi_j/pi_i) exp(-c r_ij^2)``."""
    if not r_ij > 0:
        raise DomainError("r_ij must be positive")
    if not (pi_i > 0 and pi_j > 0):
        raise DomainError("weights must be positive")
    return (1 + pi_j / pi_i) * math.exp(-decay_rate(lam) * r_ij**2)


def cross_responsibility_min_separation(lam, theta):
    """Separation needed by :func:`cross_responsibility_bound`."""
    _check_lambda(lam)
    if theta < 1:
        raise DomainError("theta must be >= 1")
    return math.sqrt(2.0 / (1 - 2 * lam) * math.log(theta))


def self_responsibility_lower(lam, K, theta, r_i):
    """Lower bound on ``E_i[w_i]``: ``1 - (K-1)(1+theta) exp(-c r_i^2)``."""
    if K < 2:
        raise DomainError("needs K >= 2")
    return 1 - (K - 1) * (1 + theta) * math.exp(-decay_rate(lam) * r_i**2)


def denominator_min_separation(lam, K, theta):
    """Separation at which ``E[w_i] >= 3/4 pi_i`` is guaranteed."""
    if K < 2:
        raise DomainError("needs K >= 2")
    return math.sqrt(math.log(15 * (K - 1) * (1 + theta)) / decay_rate(lam))


def moment_bounds(lam, K, theta, d0, r_i, r_j, const=14.0):
    """Operator-norm bounds for the diagonal and off-diagonal weighted moments."""
    if K < 2 or d0 < 1 or r_i <= 0 or r_j <= 0 or const <= 0:
        raise DomainError("moment_bounds needs K >= 2, d0 >= 1 and positive radii")
    c = decay_rate(lam)
    diag = math.sqrt(const * (K - 1) * (1 + theta)) * max(d0, r_i**2) * math.exp(
        -0.5 * c * r_i**2
    )
    r = max(r_i, r_j)
    off = math.sqrt(const * (1 + theta)) * max(d0, r**2) * math.exp(-0.5 * c * r**2)
    return diag, off


def cross_moment_bound(stats, d, k, i, j, const=14.0):
    """Bound on ``E_k[||X - v_i||^2 ||X - mu_j||^2]`` for estimates in the region.

    With a single component the separation terms vanish and the bound is
    ``const * d^2``.
    """
    if stats.pairwise.shape[0] == 1:
        term = 0.0
    elif i == j == k:
        term = stats.per_component[i] ** 4
    elif k != i and k != j:
        term = stats.pairwise[i, k] ** 2 * stats.pairwise[j, k] ** 2
    else:
        term = stats.pairwise[i, j] ** 4
    return const * max(d**2, term)


def log_const_em(K, d, r_max):
    return 100.0 * K**2 * r_max * (math.sqrt(d) + 2 * r_max) ** 2


def log_const_grad(K, d, r_max):
    return 36.0 * K**2 * r_max * (math.sqrt(d) + 2 * r_max) ** 2


@dataclass(frozen=True)
class SampleThresholds:
    em: float
    grad: float
    log_const_em: float
    log_const_grad: float


def sample_thresholds(lam, delta, K, d, pi_min, r_min, r_i, r_max, constants=None):
    """Right-hand sides of the EM and gradient EM sample-size conditions.

    Both are thresholds on ``n / log n``; see :func:`min_n_over_log_n`.
    """
    constants = constants or ConstantsConfig()
    _check_lambda(lam)
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    r_i = np.asarray(r_i, dtype=np.float64)
    if K < 2 or not (r_min > 0 and r_max >= r_min and np.all(r_i > 0)):
        raise DomainError("sample thresholds need K >= 2 and positive separations")
    return _sample_thresholds(lam, delta, K, d, pi_min, r_min, r_i, r_max, constants)


def _sample_thresholds(lam, delta, K, d, pi_min, r_min, r_i, r_max, constants):
    ce = log_const_em(K, d, r_max)
    cg = log_const_grad(K, d, r_max)
    scale = 1.0 / ((1 - 2 * lam) ** 2 * lam**2)
    em = (
        constants.sample_const * K * d * math.log(ce / delta) / pi_min
        * max(1.0, scale / (pi_min * r_min**2))
    )
    ratio = np.maximum(lam**2 * r_i**2, 1.0 / (1 - 2 * lam) ** 2) / (lam**2 * r_i**2)
    grad = (
        constants.sample_const * K * d * math.log(cg / delta) / pi_min**2
        * float(np.max(ratio))
    )
    return SampleThresholds(em=em, grad=grad, log_const_em=ce, log_const_grad=cg)


def n_over_log_n(n):
    return n / math.log(n)


def min_n_over_log_n(threshold):
    """Smallest integer ``n >= 3`` with ``n / log n > threshold`` (bisection).

    ``n / log n`` is increasing for ``n >= 3``.
    """
    if not math.isfinite(threshold):
        raise DomainError("threshold must be finite")
    lo = 3
    if n_over_log_n(lo) > threshold:
        return lo
    hi = 4
    while n_over_log_n(hi) <= threshold:
        hi *= 2
    # invariant: f(lo) <= threshold < f(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if n_over_log_n(mid) > threshold:
            hi = mid
        else:
            lo = mid
    return hi


def statistical_errors(lam, delta, K, d, n, weights, r_i, r_max, constants=None):
    """Per-component statistical error terms for EM and gradient EM.

    Returns ``(em, grad)`` arrays of length ``K``.
    """
    constants = constants or ConstantsConfig()
    _check_lambda(lam)
    if n < 2:
        raise DomainError("n must be >= 2")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    weights = np.asarray(weights, dtype=np.float64)
    r_i = np.asarray(r_i, dtype=np.float64)
    root_em = math.sqrt(K * d * math.log(log_const_em(K, d, r_max) * n / delta) / n)
    root_grad = math.sqrt(K * d * math.log(log_const_grad(K, d, r_max) * n / delta) / n)
    em = constants.error_const / ((1 - 2 * lam) * weights) * root_em
    grad = (
        constants.error_const / weights
        * np.maximum(1.0 / (1 - 2 * lam), lam * r_i)
        * root_grad
    )
    return em, grad


def gradient_contraction_factor(step_size, pi_min):
    """Per-iteration error factor ``1 - (3/8) s pi_min`` of gradient EM."""
    if not 0 < step_size < 1.0 / pi_min:
        raise DomainError("step size must lie in (0, 1/pi_min)")
    return 1 - 0.375 * step_size * pi_min


def subgaussian_bounds(lam, r_i):
    """``(truth-centered, estimate-centered)`` sub-Gaussian norm bounds."""
    _check_lambda(lam)
    inv = 1.0 / (1 - 2 * lam)
    return 16.0 * inv, 24.0 * max(inv, lam * r_i)


def subgaussian_min_separation(lam, theta):
    c = decay_rate(lam)
    first = 4.0 / (1 - 2 * lam) * math.log(
        4 * math.log(1.5) * theta**2 * (1 - 2 * lam) / c
    )
    second = 4.0 / c * math.log(2.0)
    return math.sqrt(max(first, second, 0.0))


@dataclass(frozen=True)
class BoundReport:
    K: int
    d: int
    n: int
    lam: float
    delta: float
    step_size: float
    r_min: float
    r_max: float
    decay_rate: float
    contraction_separation: float
    separation_ok: bool
    denominator_separation: float
    cross_responsibility_separation: float
    subgaussian_separation: float
    sample_threshold_em: float
    sample_threshold_grad: float
    min_n_em: int
    min_n_grad: int
    sample_size_ok_em: bool
    sample_size_ok_grad: bool
    log_const_em: float
    log_const_grad: float
    gradient_factor: float
    statistical_error_em: np.ndarray
    statistical_error_grad: np.ndarray
    self_responsibility_lowers: np.ndarray
    cross_responsibility_bounds: np.ndarray
    moment_bounds: np.ndarray
    subgaussian_bounds: np.ndarray

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def flat_row(self):
        """One scalar per column; arrays are exploded with index suffixes."""
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                for idx in np.ndindex(v.shape):
                    row[f.name + "_" + "_".join(map(str, idx))] = float(v[idx])
            else:
                row[f.name] = v
        return row


def build_report(model, lam, n, delta, step_size=1.0, constants=None):
    """Evaluate every threshold and bound for ``model`` at ``(lam, n, delta, s)``."""
    constants = constants or ConstantsConfig()
    stats = separation_stats(model)
    K, d = model.K, model.d
    c = decay_rate(lam)
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    if n < 2:
        raise DomainError("n must be >= 2")
    if K == 1:
        zeros = np.zeros(1)
        return BoundReport(
            K=1, d=d, n=n, lam=lam, delta=delta, step_size=step_size,
            r_min=math.inf, r_max=math.inf, decay_rate=c,
            contraction_separation=0.0, separation_ok=True,
            denominator_separation=0.0, cross_responsibility_separation=0.0,
            subgaussian_separation=0.0,
            sample_threshold_em=0.0, sample_threshold_grad=0.0,
            min_n_em=3, min_n_grad=3, sample_size_ok_em=True, sample_size_ok_grad=True,
            log_const_em=0.0, log_const_grad=0.0,
            gradient_factor=1 - 0.375 * step_size,
            statistical_error_em=zeros, statistical_error_grad=zeros,
            self_responsibility_lowers=np.ones(1),
            cross_responsibility_bounds=np.ones((1, 1)),
            moment_bounds=np.zeros((1, 1)),
            subgaussian_bounds=np.array([subgaussian_bounds(lam, 0.0)]),
        )
    r_i = stats.per_component
    sep = contraction_min_separation(lam, K, stats.theta, stats.pi_min)
    thr = _sample_thresholds(
        lam, delta, K, d, stats.pi_min, stats.r_min, r_i, stats.r_max, constants
    )
    em_err, grad_err = statistical_errors(
        lam, delta, K, d, n, model.weights, r_i, stats.r_max, constants
    )
    cross = np.ones((K, K))
    mom = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            diag, off = moment_bounds(
                lam, K, stats.theta, stats.d0, r_i[i], r_i[j], constants.moment_const
            )
            if i == j:
                mom[i, j] = diag
            else:
                mom[i, j] = off
                cross[i, j] = cross_responsibility_bound(
                    lam, model.weights[i], model.weights[j], stats.pairwise[i, j]
                )
    lowers = np.array(
        [self_responsibility_lower(lam, K, stats.theta, r) for r in r_i]
    )
    sub = np.array([subgaussian_bounds(lam, r) for r in r_i])
    ratio = n / math.log(n)
    return BoundReport(
        K=K, d=d, n=n, lam=lam, delta=delta, step_size=step_size,
        r_min=stats.r_min, r_max=stats.r_max, decay_rate=c,
        contraction_separation=sep,
        separation_ok=bool(stats.r_min >= sep),
        denominator_separation=denominator_min_separation(lam, K, stats.theta),
        cross_responsibility_separation=cross_responsibility_min_separation(lam, stats.theta),
        subgaussian_separation=subgaussian_min_separation(lam, stats.theta),
        sample_threshold_em=thr.em,
        sample_threshold_grad=thr.grad,
        min_n_em=min_n_over_log_n(thr.em),
        min_n_grad=min_n_over_log_n(thr.grad),
        sample_size_ok_em=bool(ratio > thr.em),
        sample_size_ok_grad=bool(ratio > thr.grad),
        log_const_em=thr.log_const_em,
        log_const_grad=thr.log_const_grad,
        gradient_factor=gradient_contraction_factor(step_size, stats.pi_min),
        statistical_error_em=em_err,
        statistical_error_grad=grad_err,
        self_responsibility_lowers=lowers,
        cross_responsibility_bounds=cross,
        moment_bounds=mom,
        subgaussian_bounds=sub,
    )
