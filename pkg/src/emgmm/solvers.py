"""Full-batch sample EM and gradient EM for known-weight spherical mixtures."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    MeansEstimate,
    as_means,
    log_responsibilities,
    per_component_errors,
    separation_stats,
)
from .errors import ConfigError, DegenerateComponent, NonFiniteInput, ShapeMismatch

DEGENERATE_MASS = 1e-300

ALGORITHMS = ("em", "gradient_em")


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "em"
    step_size: float = 1.0
    max_iters: int = 30
    seed: int = 0
    record_means: bool = False
    # stop once |E(mu^t) - E(mu^{t-1})| < stop_tol; needs a reference model
    stop_tol: Optional[float] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.algorithm == "gradient_em" and not self.step_size > 0:
            raise ConfigError("gradient_em needs step_size > 0")


@dataclass
class EmTrajectory:
    config: SolverConfig
    final: MeansEstimate
    iterations_run: int
    errors: list = field(default_factory=list)
    per_component_errors: list = field(default_factory=list)
    in_region_flags: list = field(default_factory=list)
    means: list = field(default_factory=list)

    @property
    def initial_error(self):
        return self.errors[0]

    @property
    def final_error(self):
        return self.errors[-1]


class _Batch:
    """Samples plus their cached squared row norms.

    Every weighted sum is a single matrix product ``W^T X``, so the result is
    fixed by the inputs and the BLAS build, independent of call order.
    """

    def __init__(self, samples):
        x = np.asarray(getattr(samples, "points", samples), dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < 1:
            raise ShapeMismatch("need at least one sample")
        if not np.all(np.isfinite(x)):
            raise NonFiniteInput("samples contain non-finite values")
        self.x = np.ascontiguousarray(x)
        self.x_sq = np.einsum("ij,ij->i", self.x, self.x)
        self.n = x.shape[0]

    def weights_t(self, means, weights):
        """``(K, n)`` responsibilities."""
        w = np.exp(log_responsibilities(self.x, means, weights, self.x_sq))
        w /= w.sum(axis=1, keepdims=True)
        return np.ascontiguousarray(w.T)


def _as_batch(samples):
    return samples if isinstance(samples, _Batch) else _Batch(samples)


def _check(batch, means, weights):
    weights = np.asarray(weights, dtype=np.float64)
    if means.shape[1] != batch.x.shape[1] or weights.shape[0] != means.shape[0]:
        raise ShapeMismatch("samples, estimate and weights disagree in shape")
    return weights


def em_step(samples, estimate, weights):
    """One sample EM update: responsibility-weighted averages of the samples."""
    batch = _as_batch(samples)
    means = as_means(estimate)
    weights = _check(batch, means, weights)
    wt = batch.weights_t(means, weights)
    mass = wt.sum(axis=1)
    bad = np.flatnonzero(~(mass >= DEGENERATE_MASS))
    if bad.size:
        k = int(bad[0])
        raise DegenerateComponent(k, detail=f"total weight {mass[k]:.3g}")
    return MeansEstimate((wt @ batch.x) / mass[:, None])


def gradient_em_step(samples, estimate, weights, step_size):
    """One sample gradient EM update with step size ``step_size``."""
    if step_size < 0 or not np.isfinite(step_size):
        raise NonFiniteInput("step size must be finite and non-negative")
    batch = _as_batch(samples)
    means = as_means(estimate)
    weights = _check(batch, means, weights)
    wt = batch.weights_t(means, weights)
    resid = wt @ batch.x - wt.sum(axis=1)[:, None] * means
    return MeansEstimate(means + step_size * (resid / batch.n))


def run(samples, init, weights, config, reference=None, region_lambda=None):
    """Apply ``config.max_iters`` updates from ``init``.

    With a ``reference`` model the trajectory records ``E(mu^t)`` and the
    per-component errors for ``t = 0..iterations_run``; with
    ``region_lambda`` it also records membership in the region at that
    ``lambda``.  Step-size admissibility ``s < 1/pi_min`` is only enforced
    when a reference model is supplied.
    """
    batch = _as_batch(samples)
    weights = np.asarray(weights, dtype=np.float64)
    means = MeansEstimate(as_means(init))
    stats = None
    if reference is not None:
        stats = separation_stats(reference)
        if config.algorithm == "gradient_em" and not config.step_size < 1.0 / stats.pi_min:
            raise ConfigError(
                f"step size {config.step_size} outside (0, 1/pi_min = {1.0 / stats.pi_min:g})"
            )
    if config.stop_tol is not None and reference is None:
        raise ConfigError("early stopping needs a reference model")

    traj = EmTrajectory(config=config, final=means, iterations_run=0)

    def record(est):
        if config.record_means:
            traj.means.append(est.means)
        if reference is not None:
            errs = per_component_errors(est, reference)
            traj.per_component_errors.append(errs)
            traj.errors.append(float(errs.max()))
            if region_lambda is not None:
                traj.in_region_flags.append(
                    bool(np.all(errs <= region_lambda * stats.per_component))
                )

    record(means)
    for t in range(1, config.max_iters + 1):
        try:
            if config.algorithm == "em":
                means = em_step(batch, means, weights)
            else:
                means = gradient_em_step(batch, means, weights, config.step_size)
        except DegenerateComponent as exc:
            raise DegenerateComponent(exc.component, iteration=t) from exc
        traj.iterations_run = t
        record(means)
        if (
            config.stop_tol is not None
            and abs(traj.errors[-1] - traj.errors[-2]) < config.stop_tol
        ):
            break
    traj.final = means
    return traj
