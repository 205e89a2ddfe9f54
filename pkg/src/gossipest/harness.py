"""Monte Carlo experiment orchestration.

A trial advances the distributed estimator and (when configured) the
centralized baseline in lockstep on the *same* observation draws, so their
trajectories are directly comparable pathwise.  Trials are fully
reproducible: trial k of an experiment with base seed s draws from Philox
streams keyed by (s, k, purpose), with separate streams for topology and
observation noise, so trials can run in any order or in parallel without
contention and always produce identical records.

Result layout under the output directory:

    trials/trial_00000.csv ...   per-trial curves (one header line with the
                                 config hash and column names, then numeric rows)
    aggregate_curves.csv         across-trial mean/median curves
    terminal_scaled.csv          sqrt(T+1)-scaled terminal errors, one row per trial
    summary.json                 terminal statistics, rate fits, normality checks
    figures/*.png                rendered report charts
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import InsufficientDataError, asymptotic_covariance, normality_check, rate_fit
from .errors import ConfigError
from .estimators import (CentralizedParams, DistributedParams,
                         validate_centralized_params, validate_distributed_params)
from .graphs import BernoulliLinkFailure, FixedTopology, PairwiseGossip, TopologyModel, check_mean_connectivity
from .sensing import SensingModel, check_global_observability

#: trajectories whose norm exceeds this are stopped early and flagged
NORM_GUARD = 1e12

#: environment variable that overrides the configured output directory
OUTPUT_ENV_VAR = "GOSSIPEST_OUT"


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    sensing: SensingModel
    topology: TopologyModel
    distributed: DistributedParams
    centralized: CentralizedParams | None
    theta_star: np.ndarray
    iterations: int
    trials: int
    seed: int
    record_every: int = 1
    outputs: str | None = None
    allow_invalid: bool = False
    initial_estimate: np.ndarray | None = None
    workers: int = 1

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=np.float64)
        if theta.shape != (self.sensing.field_dim,):
            raise ConfigError(f"theta_star must have shape ({self.sensing.field_dim},), got {theta.shape}")
        object.__setattr__(self, "theta_star", theta)
        if self.topology.n_vertices != self.sensing.n_sensors:
            raise ConfigError(
                f"topology has {self.topology.n_vertices} vertices but the sensing model "
                f"has {self.sensing.n_sensors} sensors")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.initial_estimate is not None:
            n, m = self.sensing.n_sensors, self.sensing.field_dim
            x0 = np.broadcast_to(np.asarray(self.initial_estimate, dtype=np.float64), (n, m)).copy()
            object.__setattr__(self, "initial_estimate", x0)

    def initial_by_sensor(self) -> np.ndarray:
        n, m = self.sensing.n_sensors, self.sensing.field_dim
        if self.initial_estimate is None:
            return np.zeros((n, m))
        return self.initial_estimate.copy()

    def config_hash(self) -> str:
        return hashlib.sha256(_canonical_json(self).encode()).hexdigest()[:16]


def _canonical_json(config: ExperimentConfig) -> str:
    topo = config.topology
    if isinstance(topo, FixedTopology):
        tdesc = {"kind": "fixed", "laplacian": topo.laplacian.matrix.tolist()}
    elif isinstance(topo, BernoulliLinkFailure):
        tdesc = {"kind": "bernoulli", "n": topo.base.n_vertices,
                 "edges": list(topo.base.edges), "p": topo.p}
    else:
        tdesc = {"kind": "gossip", "n": topo.base.n_vertices,
                 "edges": list(topo.base.edges), "weights": topo.weights.tolist()}
    d = config.distributed
    desc = {
        "sensing": {
            "field_dim": config.sensing.field_dim,
            "matrices": [h.tolist() for h in config.sensing.matrices],
            "noise_cov": config.sensing.noise_cov.tolist(),
            "gamma0": config.sensing.gamma0,
            "noise_dist": config.sensing.noise_dist,
        },
        "topology": tdesc,
        "distributed": {"tau1": d.tau1, "a": d.a, "tau2": d.tau2, "b": d.b,
                        "gain": d.gain.tolist(), "epsilon1": d.epsilon1},
        "centralized": None if config.centralized is None else {
            "tau_c": config.centralized.tau_c, "a_c": config.centralized.a_c,
            "gain": config.centralized.gain.tolist()},
        "theta_star": config.theta_star.tolist(),
        "iterations": config.iterations,
        "trials": config.trials,
        "seed": config.seed,
        "record_every": config.record_every,
        "initial_estimate": None if config.initial_estimate is None else config.initial_estimate.tolist(),
    }
    return json.dumps(desc, sort_keys=True)


def validate_config(config: ExperimentConfig) -> dict:
    """Run every model and design validator; maps check name -> violations."""
    checks = {}
    g0 = config.sensing.gamma0
    checks["noise-fading"] = (
        [] if 0.0 <= g0 < 0.5 else
        [f"gamma0 must lie in [0, 0.5) for any consistent estimator, got {g0}"])
    ok, smin = check_global_observability(config.sensing)
    checks["global-observability"] = (
        [] if ok else [f"pooled Grammian is rank deficient (smallest singular value {smin:.3e})"])
    connected, lam2 = check_mean_connectivity(config.topology)
    checks["mean-connectivity"] = (
        [] if connected else [f"mean Laplacian is disconnected (lambda_2 = {lam2:.3e})"])
    checks["noise-moments"] = (
        [] if config.sensing.moment_margin > 0.0 else
        ["noise must have a finite (2+epsilon)-th moment for some epsilon > 0"])
    checks["distributed-weights"] = validate_distributed_params(config.distributed, config.sensing)
    if config.centralized is not None:
        checks["centralized-good"] = validate_centralized_params(config.centralized, config.sensing)
    return checks


def violations(checks: dict) -> list:
    return [f"{name}: {msg}" for name, msgs in checks.items() for msg in msgs]


@dataclass(frozen=True)
class TrialRecord:
    """Recorded trajectory of one trial."""

    trial_index: int
    iterations: np.ndarray
    sensor_err: np.ndarray
    avg_err: np.ndarray
    disagreement: np.ndarray
    central_err: np.ndarray | None
    gap: np.ndarray | None
    final_x: np.ndarray
    final_u: np.ndarray | None
    final_iteration: int
    stopped_at: int | None
    sup_norm: float
    final_scaled: np.ndarray
    final_scaled_central: np.ndarray | None

    @property
    def has_central(self):
        return self.central_err is not None


def _record_grid(iterations: int, stride: int) -> np.ndarray:
    grid = np.arange(0, iterations + 1, stride, dtype=np.int64)
    if grid[-1] != iterations:
        grid = np.append(grid, iterations)
    return grid


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialRecord:
    """Execute one seeded trial; deterministic given (config, trial_index)."""
    from . import kernels

    model = config.sensing
    topo = config.topology
    n, m = model.n_sensors, model.field_dim
    total = config.iterations

    rng_topo = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(config.seed, spawn_key=(trial_index, 0))))
    rng_noise = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(config.seed, spawn_key=(trial_index, 1))))

    if isinstance(topo, FixedTopology):
        mode = kernels.TOPOLOGY_FIXED
        mat = topo.laplacian.matrix
        iu, iv = np.triu_indices(n, k=1)
        sel = mat[iu, iv] < -0.5
        edges = np.column_stack([iu[sel], iv[sel]]).astype(np.int64)
        edge_mask = np.zeros((0, 0), dtype=np.uint8)
        edge_idx = np.zeros(0, dtype=np.int64)
    elif isinstance(topo, BernoulliLinkFailure):
        mode = kernels.TOPOLOGY_BERNOULLI
        edges = topo.base.edge_array()
        edge_mask = topo.sample_masks(rng_topo, total)
        edge_idx = np.zeros(0, dtype=np.int64)
    else:
        mode = kernels.TOPOLOGY_GOSSIP
        edges = topo.base.edge_array()
        edge_mask = np.zeros((0, 0), dtype=np.uint8)
        edge_idx = topo.sample_edge_indices(rng_topo, total).astype(np.int64)

    idx = np.arange(total, dtype=np.float64)
    gamma = (idx + 1.0) ** model.gamma0
    noise = model.draw_noise(rng_noise, total)
    z = model.stacked_matrix() @ config.theta_star + gamma[:, None] * noise

    d = config.distributed
    alpha = d.a / (idx + 1.0) ** d.tau1
    beta = d.b / (idx + 1.0) ** d.tau2
    central_on = config.centralized is not None
    if central_on:
        c = config.centralized
        alpha_c = c.a_c / (idx + 1.0) ** c.tau_c
        cgain_ht = np.ascontiguousarray(c.gain @ model.stacked_matrix().T)
        cgain_g = np.ascontiguousarray(c.gain @ (model.stacked_matrix().T @ model.stacked_matrix()))
    else:
        alpha_c = np.zeros(0)
        cgain_ht = np.zeros((m, model.total_obs_dim))
        cgain_g = np.zeros((m, m))

    x0 = config.initial_by_sensor()
    u0 = x0.mean(axis=0) if central_on else np.zeros(m)
    gain_ht = np.ascontiguousarray(d.gain @ model.stacked_matrix().T)

    grid = _record_grid(total, config.record_every)
    n_rec = grid.size
    rec_sensor_err = np.zeros((n_rec, n))
    rec_avg_err = np.zeros(n_rec)
    rec_disagree = np.zeros(n_rec)
    rec_central_err = np.zeros(n_rec if central_on else 0)
    rec_gap = np.zeros((n_rec, n) if central_on else (0, 0))

    filled, stopped, x, u, sup = kernels.run_trial_kernel(
        np.ascontiguousarray(x0), np.ascontiguousarray(u0), central_on,
        np.ascontiguousarray(z), alpha, beta, alpha_c,
        np.ascontiguousarray(edges), mode, np.ascontiguousarray(edge_mask), edge_idx,
        np.ascontiguousarray(model.stacked_matrix()), model.offsets(), gain_ht,
        cgain_ht, cgain_g,
        config.theta_star, grid, NORM_GUARD,
        rec_sensor_err, rec_avg_err, rec_disagree, rec_central_err, rec_gap)

    final_iter = total if stopped < 0 else int(stopped)
    scale = np.sqrt(final_iter + 1.0)
    final_scaled = scale * (x - config.theta_star[None, :])
    return TrialRecord(
        trial_index=trial_index,
        iterations=grid[:filled].copy(),
        sensor_err=rec_sensor_err[:filled],
        avg_err=rec_avg_err[:filled],
        disagreement=rec_disagree[:filled],
        central_err=rec_central_err[:filled] if central_on else None,
        gap=rec_gap[:filled] if central_on else None,
        final_x=x,
        final_u=u if central_on else None,
        final_iteration=final_iter,
        stopped_at=None if stopped < 0 else int(stopped),
        sup_norm=float(sup),
        final_scaled=final_scaled,
        final_scaled_central=scale * (u - config.theta_star) if central_on else None,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    curves: dict | None
    summary: dict
    output_dir: Path | None


def aggregate(records: list, config: ExperimentConfig) -> tuple:
    """Order-free reduction of trial records into curves and a summary dict.

    Refuses mixed schemas (some trials with a baseline, some without).
    Curves require every trial to share the record grid; trials cut short by
    the norm guard disable curve aggregation but not terminal statistics.
    """
    if not records:
        raise ValueError("no trial records to aggregate")
    records = sorted(records, key=lambda r: r.trial_index)  # order-free reduction
    has_central = records[0].has_central
    if any(r.has_central != has_central for r in records):
        raise ValueError("mismatched trial schemas: baseline columns differ across trials")

    grids_match = all(np.array_equal(r.iterations, records[0].iterations) for r in records)
    curves = None
    if grids_match:
        it = records[0].iterations
        sensor = np.stack([r.sensor_err for r in records])        # (R, n_rec, N)
        pooled = sensor.transpose(1, 0, 2).reshape(it.size, -1)   # (n_rec, R*N)
        curves = {
            "i": it.astype(np.float64),
            "err_median": np.median(pooled, axis=1),
            "err_mean": pooled.mean(axis=1),
            "avg_err_median": np.median([r.avg_err for r in records], axis=0),
            "avg_err_mean": np.mean([r.avg_err for r in records], axis=0),
            "disagreement_median": np.median([r.disagreement for r in records], axis=0),
            "disagreement_mean": np.mean([r.disagreement for r in records], axis=0),
        }
        if has_central:
            gap = np.stack([r.gap for r in records]).transpose(1, 0, 2).reshape(it.size, -1)
            curves["gap_median"] = np.median(gap, axis=1)
            curves["gap_mean"] = gap.mean(axis=1)
            curves["central_err_median"] = np.median([r.central_err for r in records], axis=0)
            curves["central_err_mean"] = np.mean([r.central_err for r in records], axis=0)

    summary = {
        "config_hash": config.config_hash(),
        "trials": len(records),
        "iterations": config.iterations,
        "stopped_trials": sum(1 for r in records if r.stopped_at is not None),
        "terminal": _terminal_stats(records, has_central),
    }
    if curves is not None:
        summary["rate_fits"] = _curve_fits(curves, has_central)
    summary["normality"] = _normality_stats(records, config, has_central)
    return curves, summary


def _terminal_stats(records, has_central):
    first = np.concatenate([r.sensor_err[0] for r in records])
    last = np.concatenate([r.sensor_err[-1] for r in records])
    out = {
        "initial_sensor_err_median": float(np.median(first)),
        "sensor_err_median": float(np.median(last)),
        "avg_err_median": float(np.median([r.avg_err[-1] for r in records])),
    }
    if has_central:
        cterm = np.array([r.central_err[-1] for r in records])
        cinit = np.array([r.central_err[0] for r in records])
        out["central_err_median"] = float(np.median(cterm))
        out["central_terminal_ge_initial_fraction"] = float(np.mean(cterm >= cinit))
    return out


def _curve_fits(curves, has_central):
    fits = {}
    for name in ("disagreement_median",) + (("gap_median",) if has_central else ()):
        try:
            f = rate_fit(curves["i"], curves[name])
        except InsufficientDataError as exc:
            fits[name] = {"error": str(exc)}
            continue
        fits[name] = {"exponent": f.exponent, "intercept": f.intercept,
                      "r_squared": f.r_squared, "window": list(f.window),
                      "n_dropped": f.n_dropped}
    return fits


def _reference_covariance(config: ExperimentConfig):
    """Asymptotic covariance of the configured baseline, when it is defined."""
    if config.centralized is None or config.sensing.gamma0 != 0.0:
        return None
    c = config.centralized
    if c.tau_c != 1.0:
        return None
    try:
        return asymptotic_covariance(config.sensing, c.a_c, c.gain)
    except (ValueError, RuntimeError):
        return None


def _normality_stats(records, config, has_central):
    ref = _reference_covariance(config)
    if ref is None or len(records) < 200:
        return None
    scaled = np.stack([r.final_scaled for r in records])  # (R, N, M)
    per_sensor = []
    for q in range(scaled.shape[1]):
        rep = normality_check(scaled[:, q, :], ref.matrix)
        per_sensor.append({
            "cov_rel_error": rep.cov_rel_error,
            "max_abs_skewness": float(np.abs(rep.skewness).max()),
            "max_abs_excess_kurtosis": float(np.abs(rep.excess_kurtosis).max()),
        })
    out = {
        "reference_covariance": ref.matrix.tolist(),
        "per_sensor": per_sensor,
        "max_cov_rel_error": max(p["cov_rel_error"] for p in per_sensor),
    }
    if has_central:
        cscaled = np.stack([r.final_scaled_central for r in records])  # (R, M)
        crep = normality_check(cscaled, ref.matrix)
        out["central_cov_rel_error"] = crep.cov_rel_error
        ccov = np.atleast_2d(np.cov(cscaled.T, ddof=1))
        rel = []
        for q in range(scaled.shape[1]):
            scov = np.atleast_2d(np.cov(scaled[:, q, :].T, ddof=1))
            rel.append(float(np.linalg.norm(scov - ccov) / np.linalg.norm(ccov)))
        out["dist_vs_central_rel"] = rel
        out["max_dist_vs_central_rel"] = max(rel)
    return out


def resolve_output_dir(config: ExperimentConfig, override=None):
    """CLI flag beats the environment variable beats the config file."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV_VAR)
    if env:
        return Path(env)
    return Path(config.outputs) if config.outputs else None


def run_experiment(config: ExperimentConfig, output_dir=None, workers=None) -> ExperimentResult:
    """Run all trials, aggregate, and (when an output directory resolves) write results."""
    checks = validate_config(config)
    bad = violations(checks)
    if bad and not config.allow_invalid:
        raise ConfigError("configuration violates model assumptions:\n  " + "\n  ".join(bad))

    n_workers = workers if workers is not None else config.workers
    indices = list(range(config.trials))
    if n_workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(run_trial, [config] * len(indices), indices,
                                    chunksize=max(1, len(indices) // (4 * n_workers))))
    else:
        records = [run_trial(config, k) for k in indices]

    curves, summary = aggregate(records, config)
    out = resolve_output_dir(config, output_dir)
    if out is not None:
        write_results(out, config, records, curves, summary)
    return ExperimentResult(config=config, records=records, curves=curves,
                            summary=summary, output_dir=out)


def _format_row(values):
    return ",".join(f"{v:.17g}" for v in values)


def _write_table(path: Path, config_hash: str, columns: list, rows: np.ndarray):
    lines = [f"# hash={config_hash} columns={','.join(columns)}"]
    lines += [_format_row(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def trial_table(record: TrialRecord):
    """(columns, rows) for a per-trial CSV."""
    n = record.sensor_err.shape[1]
    cols = ["i"] + [f"err_{q + 1}" for q in range(n)] + ["avg_err", "disagreement"]
    parts = [record.iterations[:, None].astype(np.float64), record.sensor_err,
             record.avg_err[:, None], record.disagreement[:, None]]
    if record.has_central:
        cols += ["central_err"] + [f"gap_{q + 1}" for q in range(n)]
        parts += [record.central_err[:, None], record.gap]
    return cols, np.hstack(parts)


def write_results(out_dir, config, records, curves, summary):
    out = Path(out_dir)
    trials_dir = out / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    h = summary["config_hash"]
    for r in records:
        cols, rows = trial_table(r)
        _write_table(trials_dir / f"trial_{r.trial_index:05d}.csv", h, cols, rows)

    if curves is not None:
        cols = list(curves.keys())
        rows = np.column_stack([curves[c] for c in cols])
        _write_table(out / "aggregate_curves.csv", h, cols, rows)

    n, m = config.sensing.n_sensors, config.sensing.field_dim
    cols = ["trial", "final_iteration"]
    cols += [f"scaled_s{q + 1}_c{c + 1}" for q in range(n) for c in range(m)]
    if records[0].has_central:
        cols += [f"scaled_central_c{c + 1}" for c in range(m)]
    rows = []
    for r in records:
        row = [float(r.trial_index), float(r.final_iteration)]
        row += list(r.final_scaled.reshape(-1))
        if r.has_central:
            row += list(r.final_scaled_central)
        rows.append(row)
    _write_table(out / "terminal_scaled.csv", h, cols, np.asarray(rows))

    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    from . import plots

    plots.render_report(out / "figures", curves, summary)


def rescaled_error_curve(record: TrialRecord, exponent: float = 0.5) -> np.ndarray:
    """(i+1)^exponent times each recorded per-sensor error; diagnostic helper."""
    return (record.iterations[:, None] + 1.0) ** exponent * record.sensor_err


def fading_profile(iterations: int, gamma0: float) -> np.ndarray:
    """Noise amplitude schedule over a run; convenience for reports."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    return (np.arange(iterations + 1, dtype=np.float64) + 1.0) ** gamma0
