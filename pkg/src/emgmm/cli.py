"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 verification failure,
3 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bounds
from .core import (
    MeansEstimate,
    build_model,
    init_sphere,
    loads_estimate,
    loads_model,
    per_component_errors,
    sample,
)
from .errors import ConfigError, GmmError, GmmInputError, GmmNumericalError
from .experiments import (
    ExperimentConfig,
    contraction_model,
    replicate_columns,
    run_experiment,
    run_replicate,
)
from .io import read_json, read_samples, write_csv, write_json, write_samples
from .solvers import SolverConfig, run

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3

# experiments whose verdict decides the exit code
VERDICT_EXPERIMENTS = ("contraction", "verify_bounds")

CONFIG_KEYS = {
    "seed", "scale", "out", "n", "iters", "replicates", "lambda", "step_size",
    "mc_samples", "k_list", "d_list", "workers", "timing", "delta", "algorithm",
    "stop_tol",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="JSON file with defaults for these flags")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", choices=("paper", "desk"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--lambda", dest="lam", type=_floats, help="one value or a comma list")
    p.add_argument("--step-size", type=float)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--workers", type=int)


def build_parser():
    parser = _Parser(prog="emgmm", description="EM for known-weight spherical mixtures")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("fig1a", "fig1b", "fig1c", "fig1d", "contraction", "verify-bounds", "rate"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--k-list", type=_ints)
        p.add_argument("--d-list", type=_ints)
        p.add_argument("--K", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--replicate", type=int,
                       help="regenerate the rows of one replicate only")
        p.add_argument("--timing", action="store_true", default=None,
                       help="add a wall_time column to trajectory files")

    p = sub.add_parser("report")
    _common(p)
    p.add_argument("--model", help="model JSON (default: the contraction test model)")
    p.add_argument("--delta", type=float)

    p = sub.add_parser("fit")
    _common(p)
    p.add_argument("data", help="sample file")
    p.add_argument("--model", help="model JSON; supplies weights and a reference")
    p.add_argument("--weights", type=_floats, help="comma-separated mixing weights")
    p.add_argument("--init", help="estimate JSON with the starting means")
    p.add_argument("--algorithm", choices=("em", "gradient_em"))
    p.add_argument("--stop-tol", type=float)

    p = sub.add_parser("sample")
    _common(p)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--labels", action="store_true", help="append the component label")
    p.add_argument("--file", help="output file (default OUT/samples.txt)")
    return parser


def _merge_config(args):
    """Fill unset flags from ``--config``; explicit flags win."""
    if not args.config:
        return args
    data = read_json(args.config)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    for key, value in data.items():
        attr = "lam" if key == "lambda" else key
        if key == "lambda" and not isinstance(value, list):
            value = [value]
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)
    return args


def _out_dir(args):
    return args.out or "results"


def _experiment_config(args):
    name = args.command.replace("-", "_")
    overrides = {
        "n": args.n, "iterations": args.iters, "replicates": args.replicates,
        "lambdas": args.lam, "step_size": args.step_size, "mc_samples": args.mc_samples,
        "k_list": args.k_list, "d_list": args.d_list, "K": args.K, "d": args.d,
    }
    return ExperimentConfig(
        experiment=name,
        scale=args.scale or "desk",
        seed=args.seed if args.seed is not None else 0,
        overrides={k: v for k, v in overrides.items() if v is not None},
        output_dir=_out_dir(args),
        workers=args.workers or 1,
        timing=bool(args.timing),
    )


def _cmd_experiment(args):
    cfg = _experiment_config(args)
    if args.replicate is not None:
        rows = run_replicate(cfg.experiment, cfg.params(), cfg.seed, args.replicate)
        path = os.path.join(cfg.output_dir, f"{cfg.experiment}_replicate_{args.replicate}.csv")
        write_csv(path, replicate_columns(cfg.experiment, rows, cfg.timing), rows)
        print(path)
        return EXIT_OK
    result = run_experiment(cfg)
    for path in result.write(cfg.output_dir):
        print(path)
    if result.passed is not None:
        print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'}")
    if cfg.experiment in VERDICT_EXPERIMENTS and not result.passed:
        return EXIT_VERIFY
    return EXIT_OK


def _load_model(path):
    with open(path) as fh:
        return loads_model(fh.read())


def _cmd_report(args):
    model = _load_model(args.model) if args.model else contraction_model()
    lam = args.lam[0] if args.lam else 0.4
    n = args.n or 100_000
    delta = args.delta if args.delta is not None else 0.05
    step = args.step_size if args.step_size is not None else 1.0
    report = bounds.build_report(model, lam, n, delta, step)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "report.json"), report.to_dict())
    row = report.flat_row()
    write_csv(os.path.join(out, "report.csv"), list(row), [row])
    for key in ("K", "d", "r_min", "decay_rate", "contraction_separation", "separation_ok",
                "min_n_em", "min_n_grad", "gradient_factor"):
        print(f"{key}: {row[key]}")
    return EXIT_OK


def _cmd_fit(args):
    points, file_weights, _ = read_samples(args.data)
    model = _load_model(args.model) if args.model else None
    if args.weights is not None:
        weights = np.asarray(args.weights)
    elif model is not None:
        weights = model.weights
    elif file_weights is not None:
        weights = file_weights
    else:
        raise ConfigError("fit needs known weights: pass --weights, --model or a weighted header")
    if args.init:
        with open(args.init) as fh:
            init = loads_estimate(fh.read())
    elif model is not None:
        lam = args.lam[0] if args.lam else 0.45
        init = init_sphere(model, lam, args.seed if args.seed is not None else 0)
    else:
        raise ConfigError("fit needs --init, or --model to draw a starting point")
    # validates the weights (normalization, positivity) against the estimate's shape
    build_model(np.asarray(init.means), weights)
    cfg = SolverConfig(
        algorithm=args.algorithm or "em",
        step_size=args.step_size if args.step_size is not None else 1.0,
        max_iters=args.iters if args.iters is not None else 30,
        seed=args.seed or 0,
        record_means=True,
        stop_tol=args.stop_tol if model is not None else None,
    )
    traj = run(points, init, weights, cfg, reference=model)
    K, d = init.means.shape
    cols = ["iteration", "error"] + [f"mu_{k}_{j}" for k in range(K) for j in range(d)]
    rows = []
    for t, means in enumerate(traj.means):
        row = {"iteration": t, "error": traj.errors[t] if model is not None else ""}
        row.update({f"mu_{k}_{j}": float(means[k, j]) for k in range(K) for j in range(d)})
        rows.append(row)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "fit_trajectory.csv"), cols, rows)
    final = traj.final.to_dict()
    if model is not None:
        final["error"] = float(per_component_errors(traj.final, model).max())
    write_json(os.path.join(out, "fit_final.json"), final)
    print(json.dumps(final))
    return EXIT_OK


def _cmd_sample(args):
    model = _load_model(args.model)
    n = args.n or 10_000
    s = sample(model, n, args.seed if args.seed is not None else 0)
    path = args.file or os.path.join(_out_dir(args), "samples.txt")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_samples(path, s.points, model.weights, s.labels if args.labels else None)
    print(path)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "sample":
            return _cmd_sample(args)
        return _cmd_experiment(args)
    except GmmNumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GmmInputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
