"""Command-line harness.

Subcommands:

    validate <config>      run every model/design validator, report pass or violations
    run <config>           execute the Monte Carlo experiment and write results
    analyze <config>       observability, optimal gain, asymptotic covariance,
                           and the consensus/innovation positivity sweep
    lemma-oracle           scalar-recursion decay oracle sweeps
    plot <results-dir>     re-render figures from a written aggregate_curves.csv

Exit codes: 0 success, 1 validation failure, 2 usage or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, harness
from .config import load_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ERROR = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gossipest",
        description="Distributed gossip estimation simulator and analysis harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against all model assumptions")
    p.add_argument("config", type=Path)

    p = sub.add_parser("run", help="run the configured Monte Carlo experiment")
    p.add_argument("config", type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--allow-invalid", action="store_true", default=False)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("analyze", help="closed-form analysis of the configured model")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("lemma-oracle", help="scalar recursion decay-rate oracles")
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("plot", help="render figures from written results")
    p.add_argument("results", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _cmd_validate(args):
    config = load_config(args.config)
    checks = harness.validate_config(config)
    bad = False
    for name, msgs in checks.items():
        if msgs:
            bad = True
            for msg in msgs:
                print(f"FAIL {name}: {msg}")
        else:
            print(f"ok   {name}")
    if bad:
        return EXIT_VALIDATION
    print("all assumptions satisfied")
    return EXIT_OK


def _cmd_run(args):
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.allow_invalid:
        overrides["allow_invalid"] = True
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = replace(config, **overrides)
    try:
        result = harness.run_experiment(config, output_dir=args.out)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    if result.output_dir is None:
        print("no output directory configured; results not written", file=sys.stderr)
        return EXIT_ERROR
    term = result.summary["terminal"]
    print(f"ran {config.trials} trials x {config.iterations} iterations "
          f"(hash {result.summary['config_hash']})")
    print(f"median terminal sensor error: {term['sensor_err_median']:.6g} "
          f"(initial {term['initial_sensor_err_median']:.6g})")
    if "central_err_median" in term:
        print(f"median terminal centralized error: {term['central_err_median']:.6g}")
    if result.summary.get("stopped_trials"):
        print(f"warning: {result.summary['stopped_trials']} trials hit the norm guard")
    print(f"results written to {result.output_dir}")
    return EXIT_OK


def _cmd_analyze(args):
    from .sensing import check_global_observability, grammian
    from .graphs import check_mean_connectivity, mean_laplacian

    config = load_config(args.config)
    model = config.sensing
    report = {}
    ok, smin = check_global_observability(model)
    report["observable"] = bool(ok)
    report["grammian_smallest_singular_value"] = smin
    connected, lam2 = check_mean_connectivity(config.topology)
    report["mean_connected"] = bool(connected)
    report["mean_laplacian_fiedler_value"] = lam2
    print(f"global observability: {'ok' if ok else 'FAIL'} (sigma_min(G) = {smin:.6g})")
    print(f"mean connectivity:    {'ok' if connected else 'FAIL'} (lambda_2 = {lam2:.6g})")

    if ok:
        kstar = analysis.optimal_gain(model)
        report["optimal_gain"] = kstar.tolist()
        print("optimal gain (Grammian inverse):")
        print(np.array_str(kstar, precision=6))
        try:
            cov = analysis.asymptotic_covariance(model, config.distributed.a,
                                                 config.distributed.gain)
            report["asymptotic_covariance"] = cov.matrix.tolist()
            report["hurwitz_margin"] = cov.hurwitz_margin
            print("asymptotic covariance of the sqrt(i+1)-scaled error:")
            print(np.array_str(cov.matrix, precision=6))
        except (ValueError, RuntimeError) as exc:
            report["asymptotic_covariance_error"] = str(exc)
            print(f"asymptotic covariance unavailable: {exc}")

    sweep = analysis.quadratic_form_bound(mean_laplacian(config.topology), model,
                                          config.distributed.gain)
    report["positivity_threshold_ratio"] = sweep.threshold_ratio
    report["c4_estimate"] = sweep.c4_estimate
    if sweep.ok:
        print(f"combined potential positive for ratio >= {sweep.threshold_ratio:.6g} "
              f"(contraction constant ~ {sweep.c4_estimate:.6g})")
    else:
        print("combined potential never positive over the swept ratios "
              "(check observability/connectivity)")

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analyze.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        from . import plots

        plots.render_quadratic_sweep(out / "quadratic_sweep.png", sweep.ratios,
                                     sweep.min_eigenvalues, sweep.threshold_ratio)
        print(f"analysis written to {out}")
    return EXIT_OK if ok and connected else EXIT_VALIDATION


LEMMA_SETTINGS = (
    (0.5, 1.0, 1.0),   # (delta1, delta2, a1)
    (0.6, 1.2, 1.0),
    (1.0, 1.5, 1.0),
)


def _cmd_lemma_oracle(args):
    rows = []
    curves = {}
    for d1, d2, a1 in LEMMA_SETTINGS:
        d0 = 0.8 * (d2 - d1)
        traj = analysis.scalar_recursion(1.0, (a1, d1), (1.0, d2), args.steps)
        iters = np.arange(traj.size, dtype=np.float64)
        scaled = (iters + 1.0) ** d0 * traj
        stride = max(1, traj.size // 512)
        curves[f"d1={d1} d2={d2}"] = (iters[::stride], scaled[::stride])
        rng = np.random.default_rng(args.seed)
        finals = np.array([
            analysis.scalar_recursion(1.0, (a1, d1), (1.0, d2), args.steps, rng=rng)[-1]
            for _ in range(args.runs)])
        t = args.steps
        rows.append({
            "delta1": d1, "delta2": d2, "a1": a1, "d0": d0,
            "final": float(traj[-1]),
            "scaled_final": float(scaled[-1]),
            "random_scaled_final_max": float(((t + 1.0) ** d0) * finals.max()),
        })
        print(f"d1={d1:<4} d2={d2:<4} d0={d0:.2f}: y(T)={traj[-1]:.4e}  "
              f"(T+1)^d0 y(T)={scaled[-1]:.4e}  "
              f"random max (T+1)^d0 y(T)={rows[-1]['random_scaled_final_max']:.4e}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "lemma_oracle.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        from . import plots

        plots.render_scaled_recursions(out / "lemma_oracle.png", curves)
        print(f"oracle results written to {out}")
    return EXIT_OK


def _cmd_plot(args):
    from . import plots

    curves_path = Path(args.results) / "aggregate_curves.csv"
    if not curves_path.exists():
        print(f"no aggregate_curves.csv under {args.results}", file=sys.stderr)
        return EXIT_ERROR
    curves = plots.read_curves_csv(curves_path)
    summary_path = Path(args.results) / "summary.json"
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    out = Path(args.out) if args.out is not None else Path(args.results) / "figures"
    written = plots.render_report(out, curves, summary)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "analyze": _cmd_analyze,
    "lemma-oracle": _cmd_lemma_oracle,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
