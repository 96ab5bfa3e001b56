"""Seeded experiment harness: convergence runs, scaling sweeps and bound checks.

Every replicate draws its randomness from ``derive_seed(master, experiment,
replicate)``, so a single row can be regenerated from its
``(experiment, replicate, seed)`` triple with :func:`run_replicate`.
Replicates may run in worker processes; rows are sorted before they are
returned, so the output never depends on scheduling.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math
import os
import time

import numpy as np

from . import bounds, oracle, verification
from .core import (
    build_model,
    equal_weights,
    init_line_pair,
    init_sphere,
    make_centers,
    per_component_errors,
    regular_simplex_centers,
    sample,
    separation_stats,
)
from .errors import ConfigError
from .io import write_csv, write_json
from .rng import derive_seed
from .solvers import SolverConfig, run

EXPERIMENTS = (
    "fig1a", "fig1b", "fig1c", "fig1d", "contraction", "verify_bounds", "rate",
)

OVERRIDE_KEYS = (
    "n", "K", "d", "iterations", "lambdas", "k_list", "d_list", "replicates",
    "step_size", "mc_samples", "stop_tol", "algorithm", "n_list", "directions",
)

# fmt: off
PRESETS = {
    "fig1a": {
        "paper": dict(K=64, d=64, n=500_000, replicates=12, iterations=30,
                      lambdas=[0.45], stop_tol=1e-8, algorithm="em"),
        "desk": dict(K=16, d=16, n=100_000, replicates=6, iterations=30,
                     lambdas=[0.45], stop_tol=1e-8, algorithm="em"),
    },
    "fig1b": {
        "paper": dict(K=5, d=10, n=500_000, replicates=1, iterations=30,
                      lambdas=[0.40, 0.45, 0.49, 0.5 - 1e-5], stop_tol=1e-8,
                      algorithm="em"),
        "desk": dict(K=5, d=10, n=200_000, replicates=1, iterations=30,
                     lambdas=[0.40, 0.45, 0.49, 0.5 - 1e-5], stop_tol=1e-8,
                     algorithm="em"),
    },
    "fig1c": {
        "paper": dict(d=1, n=500_000, replicates=25, iterations=20, lambdas=[0.45],
                      k_list=[2, 4, 8, 16, 32], algorithm="em"),
        "desk": dict(d=1, n=100_000, replicates=25, iterations=20, lambdas=[0.45],
                     k_list=[2, 4, 8, 16], algorithm="em"),
    },
    "fig1d": {
        "paper": dict(K=5, n=500_000, replicates=25, iterations=20, lambdas=[0.45],
                      d_list=[20, 40, 60, 80, 100, 130], algorithm="em"),
        "desk": dict(K=5, n=100_000, replicates=25, iterations=20, lambdas=[0.45],
                     d_list=[20, 40, 80], algorithm="em"),
    },
    "contraction": {
        "paper": dict(K=3, d=2, replicates=20, lambdas=[0.4], step_size=1.0,
                      mc_samples=1_000_000),
        "desk": dict(K=3, d=2, replicates=20, lambdas=[0.4], step_size=1.0,
                     mc_samples=1_000_000),
    },
    "verify_bounds": {
        "paper": dict(lambdas=[0.1, 0.25, 0.4], k_list=[2, 3], d_list=[2, 6],
                      mc_samples=1_000_000, directions=64),
        "desk": dict(lambdas=[0.1, 0.25, 0.4], k_list=[2, 3], d_list=[2, 6],
                     mc_samples=100_000, directions=16),
    },
    "rate": {
        "paper": dict(K=3, d=2, n_list=[10_000, 100_000, 1_000_000], replicates=10,
                      iterations=50, lambdas=[0.4], stop_tol=1e-10, algorithm="em"),
        "desk": dict(K=3, d=2, n_list=[10_000, 100_000, 1_000_000], replicates=10,
                     iterations=50, lambdas=[0.4], stop_tol=1e-10, algorithm="em"),
    },
}
# fmt: on

# separation multiples used by the bound-verification grid
R_FACTORS = (1.0, 1.5)
WEIGHT_SCHEMES = ("equal", "skewed")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    scale: str = "desk"
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    output_dir: str = "results"
    workers: int = 1
    timing: bool = False  # add a wall_time column (breaks bit-exact reruns)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.scale not in ("paper", "desk"):
            raise ConfigError("scale must be 'paper' or 'desk'")
        unknown = set(self.overrides) - set(OVERRIDE_KEYS)
        if unknown:
            raise ConfigError(f"unknown override(s): {sorted(unknown)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def params(self):
        p = dict(PRESETS[self.experiment][self.scale])
        p.update({k: v for k, v in self.overrides.items() if v is not None})
        return p


@dataclass
class ExperimentResult:
    name: str
    params: dict
    seed: int
    tables: dict  # file stem -> (columns, rows)
    summary: dict
    passed: object = None  # True / False for experiments with a verdict
    wall_time: float = 0.0

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for stem, (columns, rows) in self.tables.items():
            path = os.path.join(out_dir, f"{stem}.csv")
            write_csv(path, columns, rows)
            paths.append(path)
        path = os.path.join(out_dir, f"{self.name}_summary.json")
        write_json(path, {
            "experiment": self.name, "seed": self.seed, "params": self.params,
            "passed": self.passed, "wall_time": self.wall_time, **self.summary,
        })
        paths.append(path)
        return paths


# --------------------------------------------------------------------------
# model construction


def simplex_model(K, d):
    return build_model(make_centers("simplex", K, d), equal_weights(K))


def spaced_line_model(K, spacing=10.0):
    return build_model(make_centers("equispaced_1d", K, 1, spacing), equal_weights(K))


def scaled_basis_model(K, d, scale=10.0):
    return build_model(make_centers("scaled_basis", K, d, scale), equal_weights(K))


def contraction_model(K=3, d=2, lam=0.4):
    """Equal-weight regular simplex at the one-step halving separation."""
    r = bounds.contraction_min_separation(lam, K, 1.0, 1.0 / K)
    return build_model(regular_simplex_centers(K, d, r), equal_weights(K))


def grid_weights(K, scheme):
    if scheme == "equal":
        return equal_weights(K)
    w = np.ones(K)
    w[-1] = 4.0
    return w / w.sum()


def grid_model(lam, r_factor, K, d, scheme):
    """Regular simplex at ``r_factor`` times the denominator separation."""
    w = grid_weights(K, scheme)
    theta = float(w.max() / w.min())
    r = r_factor * bounds.denominator_min_separation(lam, K, theta)
    return build_model(regular_simplex_centers(K, d, r), w)


# --------------------------------------------------------------------------
# replicates


TRAJECTORY_BASE = ["experiment", "replicate", "seed", "iteration", "K", "d", "n", "lambda",
                   "error"]


def trajectory_columns(k_max, timing=False):
    cols = TRAJECTORY_BASE + [f"err_{i}" for i in range(k_max)]
    return cols + ["wall_time"] if timing else cols


def _replicate_plan(name, p):
    """List of ``(replicate, setting)``; ``setting`` fixes the swept value."""
    reps = p["replicates"]
    if name == "fig1a":
        return [(r, p["lambdas"][0]) for r in range(reps)]
    if name == "fig1b":
        return [(li * reps + r, lam) for li, lam in enumerate(p["lambdas"])
                for r in range(reps)]
    if name == "fig1c":
        return [(ki * reps + r, K) for ki, K in enumerate(p["k_list"]) for r in range(reps)]
    if name == "fig1d":
        return [(di * reps + r, d) for di, d in enumerate(p["d_list"]) for r in range(reps)]
    if name == "rate":
        return [(ni * reps + r, n) for ni, n in enumerate(p["n_list"]) for r in range(reps)]
    if name == "contraction":
        return [(r, None) for r in range(reps)]
    raise ConfigError(f"{name} has no replicates")


def _trajectory_rows(name, replicate, seed, model, n, lam, traj, elapsed):
    rows = []
    for t, (err, comp) in enumerate(zip(traj.errors, traj.per_component_errors)):
        row = {"experiment": name, "replicate": replicate, "seed": seed, "iteration": t,
               "K": model.K, "d": model.d, "n": n, "lambda": lam, "error": err,
               "wall_time": elapsed}
        row.update({f"err_{i}": float(e) for i, e in enumerate(comp)})
        rows.append(row)
    return rows


def _solve(name, p, seed, replicate, model, n, lam, init_fn, shared_data=False):
    data_seed = (derive_seed(seed, name + "/data") if shared_data
                 else derive_seed(seed, name + "/data", replicate))
    x = sample(model, n, data_seed).points
    init = init_fn(model, lam, derive_seed(seed, name + "/init", replicate))
    cfg = SolverConfig(algorithm=p["algorithm"], step_size=p.get("step_size", 1.0),
                       max_iters=p["iterations"], stop_tol=p.get("stop_tol"))
    return run(x, init, model.weights, cfg, reference=model)


def run_replicate(name, params, seed, replicate, setting=None):
    """Rows of one replicate; ``setting`` defaults to the planned value."""
    p = params
    if setting is None:
        setting = dict(_replicate_plan(name, p))[replicate]
    t0 = time.perf_counter()
    if name == "contraction":
        return _contraction_rows(p, seed, replicate)
    if name == "fig1a":
        model, n, lam, init_fn, shared = simplex_model(p["K"], p["d"]), p["n"], setting, \
            init_sphere, True
    elif name == "fig1b":
        model, n, lam, init_fn, shared = simplex_model(p["K"], p["d"]), p["n"], setting, \
            init_line_pair, True
    elif name == "fig1c":
        if p["d"] != 1:
            raise ConfigError("fig1c runs in one dimension")
        model, n, lam, init_fn, shared = spaced_line_model(setting), p["n"], \
            p["lambdas"][0], init_sphere, False
    elif name == "fig1d":
        model, n, lam, init_fn, shared = scaled_basis_model(p["K"], setting), p["n"], \
            p["lambdas"][0], init_sphere, False
    elif name == "rate":
        model, n, lam, init_fn, shared = contraction_model(p["K"], p["d"], p["lambdas"][0]), \
            setting, p["lambdas"][0], init_sphere, False
    else:
        raise ConfigError(f"{name} has no replicates")
    traj = _solve(name, p, seed, replicate, model, n, lam, init_fn, shared)
    return _trajectory_rows(name, replicate, seed, model, n, lam, traj,
                            time.perf_counter() - t0)


def replicate_columns(name, rows, timing=False):
    """CSV columns matching the full experiment file for these rows."""
    if name == "contraction":
        return CONTRACTION_COLUMNS
    return trajectory_columns(max(r["K"] for r in rows), timing)


def _replicate_task(args):
    return run_replicate(*args)


def _map_replicates(name, p, seed, workers):
    tasks = [(name, p, seed, r, s) for r, s in _replicate_plan(name, p)]
    if workers == 1 or len(tasks) == 1:
        chunks = [_replicate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate_task, tasks))
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r["replicate"], r.get("iteration", 0), r.get("algorithm", "")))
    return rows


def _finals(rows):
    """Last row of every replicate."""
    last = {}
    for row in rows:
        last[row["replicate"]] = row
    return [last[r] for r in sorted(last)]


def _initials(rows):
    return {row["replicate"]: row for row in rows if row["iteration"] == 0}


# --------------------------------------------------------------------------
# fits


def origin_fit(x, y):
    """Least squares ``y ~ C x`` through the origin.

    Returns ``(C, r2, r2_centered)``: ``r2`` is measured against the
    zero model (the usual no-intercept definition), ``r2_centered`` against
    the mean of ``y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c = float(x @ y / (x @ x))
    sse = float(np.sum((y - c * x) ** 2))
    r2 = 1.0 - sse / float(y @ y)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2_centered = 1.0 - sse / sst if sst > 0 else math.nan
    return c, r2, r2_centered


def k_log_k_predictor(K, n):
    return math.sqrt(K * math.log(K) / n)


# --------------------------------------------------------------------------
# experiments


def _convergence(name, cfg, p):
    rows = _map_replicates(name, p, cfg.seed, cfg.workers)
    k_max = max(r["K"] for r in rows)
    initials = _initials(rows)
    runs = []
    for last in _finals(rows):
        first = initials[last["replicate"]]
        ratio = last["error"] / first["error"]
        runs.append({"replicate": last["replicate"], "lambda": last["lambda"],
                     "initial_error": first["error"], "final_error": last["error"],
                     "ratio": ratio, "iterations": last["iteration"],
                     "decreased": last["error"] < first["error"],
                     "tenfold": ratio <= 0.1})
    summary = {"runs": runs, "all_decreased": all(r["decreased"] for r in runs),
               "all_tenfold": all(r["tenfold"] for r in runs)}
    tables = {name: (trajectory_columns(k_max, cfg.timing), rows)}
    return tables, summary, summary["all_tenfold"]


SCALING_COLUMNS = ["experiment", "seed", "K", "d", "n", "replicates", "predictor",
                   "mean_final_error", "std_final_error"]
FIT_COLUMNS = ["experiment", "seed", "predictor_name", "constant", "r2", "r2_centered"]


def _scaling(name, cfg, p):
    rows = _map_replicates(name, p, cfg.seed, cfg.workers)
    k_max = max(r["K"] for r in rows)
    key = "K" if name == "fig1c" else "d"
    groups = {}
    for last in _finals(rows):
        groups.setdefault(last[key], []).append(last)
    table = []
    for value in sorted(groups):
        finals = np.array([r["error"] for r in groups[value]])
        first = groups[value][0]
        pred = (k_log_k_predictor(first["K"], first["n"]) if name == "fig1c"
                else math.sqrt(first["d"]))
        table.append({"experiment": name, "seed": cfg.seed, "K": first["K"],
                      "d": first["d"], "n": first["n"], "replicates": finals.size,
                      "predictor": pred, "mean_final_error": float(finals.mean()),
                      "std_final_error": float(finals.std(ddof=1)) if finals.size > 1
                      else 0.0})
    c, r2, r2c = origin_fit([t["predictor"] for t in table],
                            [t["mean_final_error"] for t in table])
    pname = "sqrt(K log K / n)" if name == "fig1c" else "sqrt(d)"
    fit = {"experiment": name, "seed": cfg.seed, "predictor_name": pname, "constant": c,
           "r2": r2, "r2_centered": r2c}
    tables = {
        name: (trajectory_columns(k_max, cfg.timing), rows),
        f"{name}_scaling": (SCALING_COLUMNS, table),
        f"{name}_fit": (FIT_COLUMNS, [fit]),
    }
    return tables, {"fit": fit, "scaling": table}, r2 >= 0.9


CONTRACTION_COLUMNS = ["experiment", "replicate", "seed", "algorithm", "K", "d", "lambda",
                       "step_size", "error_before", "error_after", "std_error", "factor",
                       "bound", "in_region", "passed"]


def _contraction_rows(p, seed, replicate):
    lam = p["lambdas"][0]
    model = contraction_model(p["K"], p["d"], lam)
    stats = separation_stats(model)
    init = init_sphere(model, lam, derive_seed(seed, "contraction/init", replicate))
    before = float(per_component_errors(init, model).max())
    mc = oracle.McConfig(n_mc=p["mc_samples"],
                         seed=derive_seed(seed, "contraction/mc", replicate))
    s = p["step_size"]
    rows = []
    steps = (
        ("em", 0.5, lambda: oracle.population_em_step(model, init, mc)),
        ("gradient_em", bounds.gradient_contraction_factor(s, stats.pi_min),
         lambda: oracle.population_gradient_em_step(model, init, s, mc)),
    )
    for algorithm, factor, step in steps:
        new, se = step()
        errs = per_component_errors(new, model)
        top = int(np.argmax(errs))
        after = float(errs[top])
        bound = factor * before + 3.0 * se[top]
        region = bool(np.all(errs <= lam * stats.per_component + 3.0 * se))
        rows.append({"experiment": "contraction", "replicate": replicate, "seed": seed,
                     "algorithm": algorithm, "K": model.K, "d": model.d, "lambda": lam,
                     "step_size": s if algorithm == "gradient_em" else 1.0,
                     "error_before": before, "error_after": after,
                     "std_error": float(se[top]), "factor": factor, "bound": bound,
                     "in_region": region, "passed": after <= bound and region})
    return rows


def _contraction(name, cfg, p):
    rows = _map_replicates(name, p, cfg.seed, cfg.workers)
    by_alg = {}
    for r in rows:
        by_alg.setdefault(r["algorithm"], []).append(r["passed"])
    summary = {"passed_by_algorithm": {a: all(v) for a, v in by_alg.items()},
               "worst_ratio": {a: max(r["error_after"] / r["error_before"]
                                      for r in rows if r["algorithm"] == a)
                               for a in by_alg}}
    return {name: (CONTRACTION_COLUMNS, rows)}, summary, all(r["passed"] for r in rows)


RATE_COLUMNS = ["experiment", "seed", "n", "replicates", "median_final_error"]


def _rate(name, cfg, p):
    rows = _map_replicates(name, p, cfg.seed, cfg.workers)
    groups = {}
    for last in _finals(rows):
        groups.setdefault(last["n"], []).append(last["error"])
    table = [{"experiment": name, "seed": cfg.seed, "n": n, "replicates": len(v),
              "median_final_error": float(np.median(v))} for n, v in sorted(groups.items())]
    ratio = table[0]["median_final_error"] / table[-1]["median_final_error"]
    k_max = max(r["K"] for r in rows)
    tables = {name: (trajectory_columns(k_max, cfg.timing), rows),
              f"{name}_medians": (RATE_COLUMNS, table)}
    passed = 6.0 <= ratio <= 16.0 if len(table) == 3 else None
    return tables, {"medians": table, "smallest_to_largest_ratio": ratio}, passed


VERIFY_COLUMNS = ["experiment", "seed", "lambda", "r_factor", "K", "d", "weights", "check",
                  "i", "j", "k", "variant", "value", "std_error", "bound", "slack", "margin",
                  "status"]


def verify_grid(p):
    return [(lam, rf, K, d, ws) for lam in p["lambdas"] for rf in R_FACTORS
            for K in p["k_list"] for d in p["d_list"] for ws in WEIGHT_SCHEMES]


def verify_point(p, seed, index, point):
    """Every bound check on one grid model; returns CSV rows."""
    lam, rf, K, d, ws = point
    model = grid_model(lam, rf, K, d, ws)
    mc = oracle.McConfig(n_mc=p["mc_samples"], seed=derive_seed(seed, "verify/mc", index))
    est = init_sphere(model, lam, derive_seed(seed, "verify/init", index))
    checks = (
        verification.check_fixed_point(model, mc)
        + verification.check_cross_responsibility(model, lam, mc)
        + verification.check_denominator(model, est, mc)
        + verification.check_moments(model, est, lam, mc)
        + verification.check_cross_moments(model, est, mc)
        + verification.check_subgaussian(model, est, lam, mc, p["directions"])
    )
    rows = []
    for c in checks:
        row = {"experiment": "verify_bounds", "seed": seed, "lambda": lam, "r_factor": rf,
               "K": K, "d": d, "weights": ws}
        row.update(c.to_dict())
        rows.append(row)
    return rows


def _verify_task(args):
    return verify_point(*args)


def _verify(name, cfg, p):
    tasks = [(p, cfg.seed, idx, pt) for idx, pt in enumerate(verify_grid(p))]
    if cfg.workers == 1:
        chunks = [_verify_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_verify_task, tasks))
    rows = [r for chunk in chunks for r in chunk]
    counts = {s: sum(r["status"] == s for r in rows)
              for s in (verification.PASS, verification.FAIL, verification.SKIP)}
    failed = [r for r in rows if r["status"] == verification.FAIL]
    return ({name: (VERIFY_COLUMNS, rows)}, {"counts": counts, "failures": failed},
            not failed)


_RUNNERS = {
    "fig1a": _convergence,
    "fig1b": _convergence,
    "fig1c": _scaling,
    "fig1d": _scaling,
    "contraction": _contraction,
    "rate": _rate,
    "verify_bounds": _verify,
}


def run_experiment(cfg):
    """Run ``cfg.experiment`` and return an :class:`ExperimentResult`."""
    p = cfg.params()
    t0 = time.perf_counter()
    tables, summary, passed = _RUNNERS[cfg.experiment](cfg.experiment, cfg, p)
    return ExperimentResult(name=cfg.experiment, params=p, seed=cfg.seed, tables=tables,
                            summary=summary, passed=passed,
                            wall_time=time.perf_counter() - t0)
