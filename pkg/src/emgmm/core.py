"""Spherical Gaussian mixtures with known weights.

Model and estimate containers, separation statistics, exact sampling,
log-space responsibilities and their gradients, error metrics, and the
initializer constructions used by the experiments.

All arrays are float64.  Means are stored as ``(K, d)`` matrices; row ``i``
is the center of component ``i``.
"""

from dataclasses import dataclass
import json
import math

import numpy as np

from . import rng as _rng
from .errors import (
    DimensionTooSmall,
    DuplicateMeans,
    GmmNumericalError,
    NonFiniteInput,
    NonPositiveWeight,
    ParseError,
    ShapeMismatch,
    WeightsNotNormalized,
)

WEIGHT_SUM_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def _pairwise_distances(means):
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Ground-truth mixture ``sum_i pi_i N(mu*_i, I_d)``."""

    means: np.ndarray
    weights: np.ndarray

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def to_dict(self):
        return {
            "d": self.d,
            "k": self.K,
            "weights": self.weights.tolist(),
            "means": self.means.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        means, weights = _parse_payload(data, require_weights=True)
        return build_model(means, weights)

    def __repr__(self):
        return f"MixtureModel(K={self.K}, d={self.d})"


@dataclass(frozen=True, eq=False)
class MeansEstimate:
    """Candidate centers ``mu_1..mu_K``."""

    means: np.ndarray

    def __post_init__(self):
        m = np.array(self.means, dtype=np.float64, copy=True)
        if m.ndim != 2:
            raise ShapeMismatch(f"means must be a K x d matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteInput("estimate contains non-finite coordinates")
        m.setflags(write=False)
        object.__setattr__(self, "means", m)

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    @property
    def flat(self):
        """Concatenation ``(mu_1, ..., mu_K)`` in R^{Kd}."""
        return self.means.ravel()

    def to_dict(self):
        return {"d": self.d, "k": self.K, "means": self.means.ravel().tolist()}

    @classmethod
    def from_dict(cls, data):
        means, _ = _parse_payload(data, require_weights=False)
        return cls(means)

    def __repr__(self):
        return f"MeansEstimate(K={self.K}, d={self.d})"


@dataclass(frozen=True)
class SeparationStats:
    pairwise: np.ndarray
    per_component: np.ndarray
    r_min: float
    r_max: float
    pi_min: float
    pi_max: float
    theta: float
    d0: int


@dataclass(frozen=True)
class LabeledSample:
    point: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``n`` draws stored column-wise; indexing yields :class:`LabeledSample`."""

    points: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, idx):
        return LabeledSample(self.points[idx], int(self.labels[idx]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def _parse_payload(data, require_weights):
    try:
        d = int(data["d"])
        k = int(data["k"])
        flat = np.asarray(data["means"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model payload: {exc}") from exc
    if flat.size != d * k:
        raise ParseError(f"expected {k * d} mean coordinates, got {flat.size}")
    weights = data.get("weights")
    if weights is None:
        if require_weights:
            raise ParseError("model payload is missing 'weights'")
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size != k:
            raise ParseError(f"expected {k} weights, got {weights.size}")
    return flat.reshape(k, d), weights


def as_means(estimate):
    """Accept a :class:`MeansEstimate`, :class:`MixtureModel` or array."""
    if isinstance(estimate, (MeansEstimate, MixtureModel)):
        return estimate.means
    m = np.asarray(estimate, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    return m


def build_model(means, weights):
    """Validate and freeze a mixture model."""
    means = np.asarray(means, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if means.ndim == 1:
        means = means[:, None]
    if means.ndim != 2 or weights.ndim != 1:
        raise ShapeMismatch("means must be K x d and weights a K-vector")
    if means.shape[0] != weights.shape[0]:
        raise ShapeMismatch(
            f"{means.shape[0]} means but {weights.shape[0]} weights"
        )
    if means.shape[0] < 1 or means.shape[1] < 1:
        raise ShapeMismatch("need K >= 1 and d >= 1")
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(weights))):
        raise NonFiniteInput("means and weights must be finite")
    if np.any(weights <= 0):
        raise NonPositiveWeight(f"weights must be strictly positive: {weights}")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise WeightsNotNormalized(f"weights sum to {math.fsum(weights)!r}")
    if means.shape[0] > 1:
        dist = _pairwise_distances(means)
        off = dist[~np.eye(means.shape[0], dtype=bool)]
        if np.any(off <= 0):
            raise DuplicateMeans("two components share the same center")
    return MixtureModel(_frozen(means), _frozen(weights))


def equal_weights(K):
    return np.full(K, 1.0 / K)


def separation_stats(model):
    K = model.K
    w = model.weights
    pairwise = _pairwise_distances(model.means)
    if K > 1:
        masked = pairwise + np.diag(np.full(K, np.inf))
        per = masked.min(axis=1)
        r_min = float(per.min())
        r_max = float(pairwise.max())
    else:
        per = np.array([np.inf])
        r_min = r_max = math.inf
    pairwise.setflags(write=False)
    per.setflags(write=False)
    return SeparationStats(
        pairwise=pairwise,
        per_component=per,
        r_min=r_min,
        r_max=r_max,
        pi_min=float(w.min()),
        pi_max=float(w.max()),
        theta=float(w.max() / w.min()),
        d0=min(model.d, 2 * K),
    )


def sample(model, n, seed):
    """Draw ``n`` labeled points; bit-deterministic in ``(model, n, seed)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = _rng.stream(seed, "sample")
    labels = g.choice(model.K, size=n, p=model.weights)
    noise = g.standard_normal((n, model.d))
    points = model.means[labels] + noise
    return SampleSet(points, labels.astype(np.int64))


def stratified_draw(model, n_total, seed, tag="stratified"):
    """Exactly ``round(n_total * pi_k)`` standard-normal draws around each center.

    Returns a list of ``(m_k, d)`` arrays, one per component.
    """
    g = _rng.stream(seed, tag)
    out = []
    for k in range(model.K):
        m = max(int(round(n_total * model.weights[k])), 1)
        out.append(model.means[k] + g.standard_normal((m, model.d)))
    return out


def squared_distances(x, means, x_sq=None):
    """``(n, K)`` matrix of ``||x_l - mu_k||^2``.

    Expanded as ``|x|^2 - 2 x.mu + |mu|^2`` so the work is one matrix product;
    ``x_sq`` lets callers reuse the row norms across iterations.
    """
    x = np.atleast_2d(x)
    if x_sq is None:
        x_sq = np.einsum("ij,ij->i", x, x)
    mu_sq = np.einsum("ij,ij->i", means, means)
    out = x @ (-2.0 * means.T)
    out += x_sq[:, None]
    out += mu_sq[None, :]
    return np.maximum(out, 0.0, out=out)


def log_responsibilities(x, means, weights, x_sq=None):
    logits = np.log(weights)[None, :] - 0.5 * squared_distances(x, means, x_sq)
    top = logits.max(axis=1, keepdims=True)
    lse = top + np.log(np.sum(np.exp(logits - top), axis=1, keepdims=True))
    return logits - lse


def responsibilities(x, estimate, weights):
    """Posterior component probabilities ``w_i(x, mu)``.

    ``x`` may be a single point of shape ``(d,)`` (returns a K-vector) or a
    batch of shape ``(n, d)`` (returns ``(n, K)``).  Computed in log space
    with max subtraction, so separations up to ~1e3 neither overflow nor
    underflow the normalizer.
    """
    means = as_means(estimate)
    weights = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != means.shape[1] or weights.shape[0] != means.shape[0]:
        raise ShapeMismatch("dimension mismatch between x, means and weights")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(means))):
        raise NonFiniteInput("responsibilities need finite inputs")
    w = np.exp(log_responsibilities(x, means, weights))
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if single else w


def responsibility_gradient(x, estimate, weights, i):
    """Gradient of ``w_i(x, mu)`` with respect to ``mu``, as K blocks in R^d.

    Row ``i`` is ``-w_i (1 - w_i)(mu_i - x)``, row ``j != i`` is
    ``w_i w_j (mu_j - x)``.
    """
    means = as_means(estimate)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    w = responsibilities(x, means, weights)
    grad = (w[i] * w)[:, None] * (means - x[None, :])
    grad[i] = -w[i] * (1.0 - w[i]) * (means[i] - x)
    return grad


def _check_shapes(estimate, model):
    means = as_means(estimate)
    if means.shape != model.means.shape:
        raise ShapeMismatch(
            f"estimate shape {means.shape} != model shape {model.means.shape}"
        )
    return means


def per_component_errors(estimate, model):
    """Vector of ``||mu_i - mu*_i||`` (index matching, no permutation)."""
    means = _check_shapes(estimate, model)
    return row_norms(means - model.means)


def row_norms(a):
    """Euclidean norm of each row; the single definition used for region tests."""
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def estimate_error(estimate, model):
    """``E(mu) = max_i ||mu_i - mu*_i||``."""
    return float(per_component_errors(estimate, model).max())


def in_region(estimate, model, lam, stats=None):
    """Closed-region test ``||mu_i - mu*_i|| <= lam * R_i`` for every ``i``."""
    errs = per_component_errors(estimate, model)
    stats = stats or separation_stats(model)
    return bool(np.all(errs <= lam * stats.per_component))


def region_ratios(estimate, model, stats=None):
    """``||mu_i - mu*_i|| / R_i`` per component."""
    stats = stats or separation_stats(model)
    return per_component_errors(estimate, model) / stats.per_component


def _unit_vectors(g, count, d):
    v = g.standard_normal((count, d))
    norms = np.linalg.norm(v, axis=1)
    # a zero draw has probability zero but would divide by zero
    while np.any(norms == 0):
        bad = norms == 0
        v[bad] = g.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def random_unit_vectors(count, d, seed, tag="directions"):
    return _unit_vectors(_rng.stream(seed, tag), count, d)


def init_sphere(model, lam, seed):
    """Each ``mu_i`` uniform on the sphere of radius ``lam * R_i`` about ``mu*_i``."""
    if model.K < 2:
        raise ValueError("init_sphere needs K > 1")
    if not 0 < lam < 0.5:
        raise ValueError("lambda must lie in (0, 1/2)")
    stats = separation_stats(model)
    u = _unit_vectors(_rng.stream(seed, "init_sphere"), model.K, model.d)
    radius = lam * stats.per_component
    return MeansEstimate(_clamp(model.means, radius[:, None] * u, radius))


def _clamp(centers, offsets, radius):
    """``centers + offsets`` with each row pulled inside its closed ball.

    Rounding in the addition can push a point past the radius by an ulp of
    the center, which may be a large relative error for a small radius.  The
    offset is shrunk by ``1 - 2^k eps`` for growing ``k`` until the
    recomputed distance is within the radius.
    """
    means = centers + offsets
    eps = np.finfo(np.float64).eps
    for k in range(52):
        over = row_norms(means - centers) > radius
        if not np.any(over):
            return means
        means[over] = centers[over] + (1 - eps * 2.0**k) * offsets[over]
    raise GmmNumericalError("could not place initial means inside the region")


def init_line_pair(model, lam, seed):
    """Move ``mu_1``/``mu_2`` toward each other along their connecting line.

    Components 3..K are placed by :func:`init_sphere` at the same ``lam``.
    """
    if model.K < 2:
        raise ValueError("init_line_pair needs K >= 2")
    stats = separation_stats(model)
    if model.K > 2:
        means = np.array(init_sphere(model, lam, seed).means)
    else:
        means = np.array(model.means)
    a, b = model.means[0], model.means[1]
    r12 = stats.pairwise[0, 1]
    u = (b - a) / r12
    offsets = np.array([stats.per_component[0] * u, -stats.per_component[1] * u]) * lam
    means[:2] = _clamp(model.means[:2], offsets, lam * stats.per_component[:2])
    return MeansEstimate(means)


def make_centers(scheme, K, d, scale=1.0):
    """Center layouts used by the experiments.

    ``simplex``: rows ``e_1..e_K``.  ``equispaced_1d``: ``0, scale, 2 scale, ...``
    in one dimension.  ``scaled_basis``: rows ``scale * e_i``.
    """
    if scheme == "simplex":
        if d < K:
            raise DimensionTooSmall(f"simplex centers need d >= K ({d} < {K})")
        return np.eye(K, d)
    if scheme == "equispaced_1d":
        if d != 1:
            raise DimensionTooSmall("equispaced_1d centers need d = 1")
        return (scale * np.arange(K, dtype=np.float64))[:, None]
    if scheme == "scaled_basis":
        if d < K:
            raise DimensionTooSmall(f"scaled_basis centers need d >= K ({d} < {K})")
        return scale * np.eye(K, d)
    raise ValueError(f"unknown center scheme {scheme!r}")


def regular_simplex_centers(K, d, side):
    """``K`` equidistant centers (pairwise distance ``side``) in ``R^d``, ``d >= K - 1``."""
    if d < K - 1:
        raise DimensionTooSmall(f"need d >= K - 1 ({d} < {K - 1})")
    # centered basis vectors in R^K, projected onto their (K-1)-dim span
    e = np.eye(K) - 1.0 / K
    u, s, _ = np.linalg.svd(e)
    coords = e @ u[:, : K - 1] if K > 1 else np.zeros((1, 0))
    out = np.zeros((K, d))
    out[:, : K - 1] = coords
    return out * (side / math.sqrt(2.0))


def dumps(obj):
    return json.dumps(obj.to_dict(), indent=2)


def loads_model(text):
    try:
        return MixtureModel.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc


def loads_estimate(text):
    try:
        return MeansEstimate.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
