"""Command-line entry point: ``causalfit {estimate,simulate,truth,calibrate,benchmark}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 estimation failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import RngStream, ValidationError, load_dataset
from .estimators import EstimationError
from .learners import ContractError

EXIT_OK, EXIT_INVALID, EXIT_ESTIMATION = 0, 2, 3


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def cmd_estimate(args) -> int:
    from .crossfit import EstimatorConfig, estimate_effect

    data = load_dataset(args.data, args.schema)
    config = EstimatorConfig.from_json(args.config) if args.config else EstimatorConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    est = estimate_effect(data, config)
    _print_json(est.to_dict(diagnostics=args.diagnostics))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .dgm import generate, load_spec, true_ace

    spec = load_spec(args.config)
    data = generate(spec, args.n, RngStream(args.seed), beta=args.beta)
    frame = data.to_frame()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, float_format="%.10g")
    truth = true_ace(spec, args.truth_n, beta=spec.beta(args.n) if args.beta is None else args.beta)
    sidecar = out.with_suffix(".truth.json")
    schema = {"outcome": data.outcome_name, "exposure": data.exposure_name, "confounders": list(data.w_names),
              "categorical": []}
    sidecar.write_text(json.dumps({**truth.to_dict(), "n": args.n, "seed": args.seed, "schema": schema}, indent=1))
    out.with_suffix(".schema.json").write_text(json.dumps(schema, indent=1))
    _print_json({"data": str(out), "truth": str(sidecar), "psi": truth.psi})
    return EXIT_OK


def cmd_truth(args) -> int:
    from .dgm import load_spec, true_ace

    rec = true_ace(load_spec(args.config), args.N, RngStream(args.seed), beta=args.beta, n=args.n)
    _print_json(rec.to_dict())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .dgm import calibrate_effect, load_spec

    spec = load_spec(args.config)
    res = calibrate_effect(spec, args.n, args.target_power, args.reps, RngStream(args.seed))
    if args.out:
        table = {int(k): v for k, v in spec.doc.get("effect", {}).items()}
        table[args.n] = res.beta
        Path(args.out).write_text(json.dumps(spec.with_beta_table(table).to_dict(), indent=1) + "\n")
    _print_json(res.to_dict())
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .benchmark import BenchmarkConfig, run_benchmark

    config = BenchmarkConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.exclude_flagged:
        config.exclude_flagged = True

    def progress(i, total):
        if args.verbose:
            sys.stderr.write(f"\r{i}/{total} replications")
            sys.stderr.flush()

    manifest = run_benchmark(config, args.out, workers=args.workers, progress=progress)
    if args.verbose:
        sys.stderr.write("\n")
    _print_json({"out": str(args.out), "records": manifest["records"], "failed": manifest["failed"],
                 "flagged": manifest["flagged"], "config_hash": manifest["config_hash"]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalfit",
                                description="Doubly robust average causal effect estimation and simulation benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate the average causal effect in a CSV dataset")
    e.add_argument("data", help="CSV file with a header row")
    e.add_argument("--schema", required=True, help="JSON column roles")
    e.add_argument("--config", help="JSON estimator configuration")
    e.add_argument("--seed", type=int)
    e.add_argument("--diagnostics", action="store_true", help="include estimator diagnostics")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="draw one dataset from a mechanism")
    s.add_argument("--config", required=True, help="mechanism name or JSON path")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--beta", type=float)
    s.add_argument("--truth-n", type=int, default=5_000_000)
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("truth", help="true average causal effect of a mechanism")
    t.add_argument("--config", required=True)
    t.add_argument("--N", type=int, default=5_000_000)
    t.add_argument("--n", type=int, help="sample size selecting the calibrated effect")
    t.add_argument("--beta", type=float)
    t.add_argument("--seed", type=int, default=20240601)
    t.set_defaults(func=cmd_truth)

    c = sub.add_parser("calibrate", help="effect size giving the target power")
    c.add_argument("--config", required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--reps", type=int, default=200)
    c.add_argument("--target-power", type=float, default=0.8)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--out", help="write the mechanism with the updated effect table here")
    c.set_defaults(func=cmd_calibrate)

    b = sub.add_parser("benchmark", help="run a simulation grid")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True, help="results directory")
    b.add_argument("--seed", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--exclude-flagged", action="store_true")
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ContractError, FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except EstimationError as exc:
        sys.stderr.write(f"estimation failed: {exc}\n")
        return EXIT_ESTIMATION
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        sys.stderr.write(f"estimation failed: {type(exc).__name__}: {exc}\n")
        return EXIT_ESTIMATION


if __name__ == "__main__":
    raise SystemExit(main())
