"""Monte Carlo checks that the closed-form bounds dominate oracle estimates.

Each check returns a list of :class:`CheckRow`.  A row passes when the oracle
value sits on the right side of the bound once the Monte Carlo slack is added.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from . import bounds, oracle
from .core import build_model, per_component_errors, separation_stats

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


@dataclass(frozen=True)
class CheckRow:
    check: str
    i: int
    j: int
    k: int
    variant: str
    value: float
    std_error: float
    bound: float
    slack: float
    status: str

    @property
    def margin(self):
        """Distance to the bound after slack; negative on failure."""
        if self.check in ("denominator",):
            return self.value + self.slack - self.bound
        return self.bound + self.slack - self.value

    def to_dict(self):
        out = asdict(self)
        out["margin"] = self.margin
        return out


def _row(check, value, se, bound, slack, ok, i=-1, j=-1, k=-1, variant=""):
    return CheckRow(check, i, j, k, variant, float(value), float(se), float(bound),
                    float(slack), PASS if ok else FAIL)


def check_fixed_point(model, mc, k_se=5.0):
    """The population EM update leaves the true means in place."""
    new, se = oracle.population_em_step(model, model.means, mc)
    errs = per_component_errors(new, model)
    return [
        _row("fixed_point", errs[i], se[i], 0.0, k_se * se[i], errs[i] <= k_se * se[i], i=i)
        for i in range(model.K)
    ]


def check_cross_responsibility(model, lam, mc, k_se=3.0):
    """Cross responsibility bound at the adversarial estimate of every ordered pair."""
    stats = separation_stats(model)
    rows = []
    for i in range(model.K):
        for j in range(model.K):
            if i == j:
                continue
            est = oracle.adversarial_estimate(model, i, j, lam, seed=mc.seed)
            val = oracle.expected_responsibility(model, est, i, j, mc)
            bound = bounds.cross_responsibility_bound(
                lam, model.weights[i], model.weights[j], stats.pairwise[i, j]
            )
            slack = k_se * val.std_error
            rows.append(_row("cross_responsibility", val.value, val.std_error, bound,
                             slack, val.value <= bound + slack, i=i, j=j,
                             variant="adversarial"))
    return rows


def check_denominator(model, estimate, mc, k_se=3.0):
    """Expected responsibilities stay above three quarters of the weights."""
    est = oracle.expected_weights(model, estimate, mc)
    rows = []
    for i in range(model.K):
        bound = 0.75 * model.weights[i]
        slack = k_se * est.std_error[i]
        rows.append(_row("denominator", est.value[i], est.std_error[i], bound, slack,
                         est.value[i] + slack >= bound, i=i))
    return rows


def check_moments(model, estimate, lam, mc, k_se=3.0, const=14.0):
    """Operator norms of the weighted second moments against their bounds."""
    stats = separation_stats(model)
    rows = []
    for v_choice in ("estimate", "truth"):
        for i in range(model.K):
            for j in range(model.K):
                diag, off = bounds.moment_bounds(
                    lam, model.K, stats.theta, stats.d0,
                    stats.per_component[i], stats.per_component[j], const,
                )
                bound = diag if i == j else off
                val = oracle.v_matrix_norm(model, estimate, v_choice, i, j, mc)
                slack = k_se * val.std_error
                rows.append(_row("moment", val.value, val.std_error, bound, slack,
                                 val.value <= bound + slack, i=i, j=j, variant=v_choice))
    return rows


def check_cross_moments(model, estimate, mc, k_se=3.0, const=14.0, triples=None):
    """Fourth-moment bound for each ``(k, i, j)`` and both centerings."""
    stats = separation_stats(model)
    if triples is None:
        K = model.K
        triples = [(k, i, j) for k in range(K) for i in range(K) for j in range(K)]
    rows = []
    for v_choice in ("estimate", "truth"):
        for k, i, j in triples:
            bound = bounds.cross_moment_bound(stats, model.d, k, i, j, const)
            val = oracle.cross_moment(model, estimate, v_choice, k, i, j, mc)
            slack = k_se * val.std_error
            rows.append(_row("cross_moment", val.value, val.std_error, bound, slack,
                             val.value <= bound + slack, i=i, j=j, k=k, variant=v_choice))
    return rows


def check_single_component_moment(d, mc, k_se=5.0):
    """With one component at the truth the fourth moment is exactly ``d^2 + 2d``."""
    model = build_model(np.zeros((1, d)), [1.0])
    val = oracle.cross_moment(model, model.means, "truth", 0, 0, 0, mc)
    exact = d * d + 2 * d
    slack = k_se * val.std_error
    return [_row("single_component_moment", val.value, val.std_error, exact, slack,
                 abs(val.value - exact) <= slack, i=0, j=0, k=0, variant="exact")]


def check_subgaussian(model, estimate, lam, mc, n_directions=64, rel_slack=0.10):
    """Directional sub-Gaussian norms against both bounds.

    Rows are skipped when the model violates the separation precondition.
    """
    stats = separation_stats(model)
    need = bounds.subgaussian_min_separation(lam, stats.theta)
    rows = []
    for i in range(model.K):
        truth_bound, est_bound = bounds.subgaussian_bounds(lam, stats.per_component[i])
        for center, bound in (("truth", truth_bound), ("estimate", est_bound)):
            slack = rel_slack * bound
            if stats.r_min < need:
                rows.append(CheckRow("subgaussian", i, -1, -1, center, math.nan, math.nan,
                                     bound, slack, SKIP))
                continue
            val = oracle.subgaussian_norm(model, estimate, i, center, n_directions, mc)
            rows.append(_row("subgaussian", val, 0.0, bound, slack, val <= bound + slack,
                             i=i, variant=center))
    return rows


def all_passed(rows):
    return all(r.status != FAIL for r in rows)
