import json

import numpy as np
import pytest

from gossipest.errors import ConfigError
from gossipest.estimators import (CentralState, CentralizedParams, DistributedParams,
                                  NetworkState, centralized_step, distributed_step)
from gossipest.graphs import (BernoulliLinkFailure, FixedTopology, Graph, Laplacian,
                              PairwiseGossip, complete_graph, laplacian, ring_graph)
from gossipest.harness import (ExperimentConfig, aggregate, run_experiment, run_trial,
                               validate_config, violations)
from gossipest.sensing import SensingModel, StackedObservation


def selector_model(m, assignment, gamma0=0.0, noise_scale=1.0):
    mats = []
    for comp in assignment:
        row = np.zeros((1, m))
        row[0, comp] = 1.0
        mats.append(row)
    return SensingModel(field_dim=m, matrices=tuple(mats),
                        noise_cov=noise_scale * np.eye(len(assignment)), gamma0=gamma0)


def small_config(**overrides):
    model = selector_model(2, [0, 1, 0])
    defaults = dict(
        sensing=model,
        topology=BernoulliLinkFailure(complete_graph(3), 0.6),
        distributed=DistributedParams(tau1=1.0, a=2.5, tau2=0.1, b=0.3,
                                      gain=np.linalg.inv([[2.0, 0.0], [0.0, 1.0]])),
        centralized=CentralizedParams(tau_c=1.0, a_c=2.5,
                                      gain=np.linalg.inv([[2.0, 0.0], [0.0, 1.0]])),
        theta_star=np.array([1.0, -0.5]),
        iterations=500,
        trials=4,
        seed=99,
        record_every=50,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def slow_trial_reference(config, trial_index):
    """Pure-Python re-execution of a trial through the step API, same draws."""
    model = config.sensing
    topo = config.topology
    n, m = model.n_sensors, model.field_dim
    total = config.iterations
    rng_topo = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(config.seed, spawn_key=(trial_index, 0))))
    rng_noise = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(config.seed, spawn_key=(trial_index, 1))))

    if isinstance(topo, BernoulliLinkFailure):
        masks = topo.sample_masks(rng_topo, total)
        edge_arr = topo.base.edge_array()

        def lap_at(i):
            mat = np.zeros((n, n))
            for keep, (u, v) in zip(masks[i], edge_arr):
                if keep:
                    mat[u, u] += 1.0
                    mat[v, v] += 1.0
                    mat[u, v] -= 1.0
                    mat[v, u] -= 1.0
            return Laplacian(mat)
    elif isinstance(topo, PairwiseGossip):
        idx = topo.sample_edge_indices(rng_topo, total)
        edge_arr = topo.base.edge_array()

        def lap_at(i):
            u, v = edge_arr[idx[i]]
            mat = np.zeros((n, n))
            mat[u, u] = mat[v, v] = 1.0
            mat[u, v] = mat[v, u] = -1.0
            return Laplacian(mat)
    else:
        def lap_at(i):
            return topo.laplacian

    gamma = (np.arange(total, dtype=np.float64) + 1.0) ** model.gamma0
    noise = model.draw_noise(rng_noise, total)
    z = model.stacked_matrix() @ config.theta_star + gamma[:, None] * noise

    state = NetworkState(x=config.initial_by_sensor().reshape(-1), iteration=0,
                         n_sensors=n, field_dim=m)
    central = CentralState(u=config.initial_by_sensor().mean(axis=0), iteration=0)
    for i in range(total):
        obs = StackedObservation(i, tuple(np.asarray(b) for b in model.split(z[i])))
        new_state = distributed_step(state, lap_at(i), obs, config.distributed, model)
        if config.centralized is not None:
            central = centralized_step(central, obs, config.centralized, model)
        state = new_state
    return state, central


class TestTrialExecution:
    def test_deterministic_given_seed_and_index(self):
        config = small_config()
        r1 = run_trial(config, 2)
        r2 = run_trial(config, 2)
        assert np.array_equal(r1.sensor_err, r2.sensor_err)
        assert np.array_equal(r1.final_x, r2.final_x)
        assert np.array_equal(r1.final_scaled, r2.final_scaled)

    def test_different_trials_differ(self):
        config = small_config()
        assert not np.array_equal(run_trial(config, 0).final_x, run_trial(config, 1).final_x)

    @pytest.mark.parametrize("topology", [
        FixedTopology(laplacian(ring_graph(3))),
        BernoulliLinkFailure(complete_graph(3), 0.6),
        PairwiseGossip.uniform(complete_graph(3)),
    ])
    def test_kernel_matches_step_api(self, topology):
        config = small_config(topology=topology, iterations=300, record_every=300)
        rec = run_trial(config, 1)
        state, central = slow_trial_reference(config, 1)
        assert np.linalg.norm(rec.final_x.reshape(-1) - state.x) <= 1e-10
        assert np.linalg.norm(rec.final_u - central.u) <= 1e-10

    def test_noiseless_start_at_truth_is_exact_fixed_point(self):
        model = SensingModel(field_dim=2,
                             matrices=tuple(np.eye(2)[k % 2:k % 2 + 1] for k in range(3)),
                             noise_cov=np.zeros((3, 3)))
        config = small_config(sensing=model, initial_estimate=np.array([1.0, -0.5]),
                              iterations=200, record_every=20)
        rec = run_trial(config, 0)
        assert np.all(rec.sensor_err == 0.0)
        assert np.all(rec.avg_err == 0.0)
        assert np.all(rec.disagreement == 0.0)
        assert np.all(rec.central_err == 0.0)

    def test_zero_iterations_records_initial_snapshot(self):
        config = small_config(iterations=0)
        rec = run_trial(config, 0)
        assert np.array_equal(rec.iterations, [0])
        assert rec.final_iteration == 0
        assert np.allclose(rec.sensor_err[0], np.linalg.norm(config.theta_star))

    def test_record_grid_includes_endpoint(self):
        config = small_config(iterations=130, record_every=50)
        rec = run_trial(config, 0)
        assert np.array_equal(rec.iterations, [0, 50, 100, 130])

    def test_scaled_terminal_errors(self):
        config = small_config(iterations=100, record_every=100)
        rec = run_trial(config, 0)
        expected = np.sqrt(101.0) * (rec.final_x - config.theta_star[None, :])
        assert np.allclose(rec.final_scaled, expected, atol=1e-14)

    def test_norm_guard_stops_divergent_run(self):
        # alpha stuck at 3 makes the innovation map expansive: |1 - 3| = 2 per step
        model = selector_model(1, [0])
        config = ExperimentConfig(
            sensing=model,
            topology=FixedTopology(laplacian(Graph(1, ()))),
            distributed=DistributedParams(tau1=0.0, a=3.0, tau2=0.0, b=0.0, gain=np.eye(1)),
            centralized=None,
            theta_star=np.array([1.0]),
            iterations=500,
            trials=1,
            seed=1,
            record_every=10,
            allow_invalid=True,
        )
        rec = run_trial(config, 0)
        assert rec.stopped_at is not None
        assert rec.final_iteration == rec.stopped_at < 500
        assert rec.iterations[-1] <= rec.stopped_at
        assert rec.sup_norm > 1e12

    def test_boundedness_over_long_valid_run(self):
        config = small_config(iterations=1_000_000, record_every=100_000, trials=1)
        rec = run_trial(config, 0)
        assert rec.stopped_at is None
        assert rec.sup_norm < 1e3


class TestValidation:
    def test_valid_config_passes_all_checks(self):
        checks = validate_config(small_config())
        assert violations(checks) == []

    def test_invalid_weights_reported(self):
        config = small_config(
            distributed=DistributedParams(tau1=0.4, a=1.0, tau2=0.1, b=0.3,
                                          gain=np.diag([0.5, 1.0])))
        msgs = violations(validate_config(config))
        assert any("tau1" in m for m in msgs)

    def test_run_experiment_refuses_invalid(self):
        config = small_config(
            distributed=DistributedParams(tau1=0.4, a=1.0, tau2=0.1, b=0.3,
                                          gain=np.diag([0.5, 1.0])))
        with pytest.raises(ConfigError, match="tau1"):
            run_experiment(config)

    def test_allow_invalid_bypasses(self):
        config = small_config(
            iterations=50,
            allow_invalid=True,
            distributed=DistributedParams(tau1=0.4, a=1.0, tau2=0.1, b=0.3,
                                          gain=np.diag([0.5, 1.0])))
        result = run_experiment(config)
        assert result.summary["trials"] == 4

    def test_topology_sensor_count_mismatch(self):
        with pytest.raises(ConfigError, match="vertices"):
            small_config(topology=FixedTopology(laplacian(ring_graph(4))))


class TestAggregation:
    def test_trial_order_does_not_change_aggregates(self):
        config = small_config()
        records = [run_trial(config, k) for k in range(config.trials)]
        curves_a, summary_a = aggregate(records, config)
        curves_b, summary_b = aggregate(records[::-1], config)
        assert json.dumps(summary_a, sort_keys=True) == json.dumps(summary_b, sort_keys=True)
        for key in curves_a:
            assert np.array_equal(curves_a[key], curves_b[key])

    def test_single_trial_aggregate_equals_trial(self):
        config = small_config(trials=1)
        rec = run_trial(config, 0)
        curves, summary = aggregate([rec], config)
        assert np.array_equal(curves["avg_err_median"], rec.avg_err)
        assert summary["terminal"]["sensor_err_median"] == pytest.approx(
            float(np.median(rec.sensor_err[-1])))

    def test_mismatched_schema_refused(self):
        config = small_config()
        with_central = run_trial(config, 0)
        without = run_trial(small_config(centralized=None), 1)
        with pytest.raises(ValueError, match="schema"):
            aggregate([with_central, without], config)

    def test_early_stop_disables_curves_keeps_terminal(self):
        model = selector_model(1, [0])
        config = ExperimentConfig(
            sensing=model,
            topology=FixedTopology(laplacian(Graph(1, ()))),
            distributed=DistributedParams(tau1=0.0, a=3.0, tau2=0.0, b=0.0, gain=np.eye(1)),
            centralized=None,
            theta_star=np.array([1.0]),
            iterations=500, trials=2, seed=5, record_every=10, allow_invalid=True)
        result = run_experiment(config)
        assert result.summary["stopped_trials"] >= 1
        assert result.curves is None or result.summary["stopped_trials"] == 0


class TestExperimentOutputs:
    def test_runs_are_reproducible(self):
        config = small_config()
        r1 = run_experiment(config)
        r2 = run_experiment(config)
        assert json.dumps(r1.summary, sort_keys=True) == json.dumps(r2.summary, sort_keys=True)

    def test_workers_do_not_change_results(self):
        config = small_config(iterations=200)
        seq = run_experiment(config, workers=1)
        par = run_experiment(config, workers=2)
        assert json.dumps(seq.summary, sort_keys=True) == json.dumps(par.summary, sort_keys=True)
        for a, b in zip(seq.records, par.records):
            assert np.array_equal(a.final_x, b.final_x)

    def test_written_files_and_byte_reproducibility(self, tmp_path):
        config = small_config(iterations=200)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        run_experiment(config, output_dir=out1)
        run_experiment(config, output_dir=out2)
        names = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
        assert (out1 / "aggregate_curves.csv").exists()
        assert (out1 / "summary.json").exists()
        assert (out1 / "terminal_scaled.csv").exists()
        assert (out1 / "trials" / "trial_00000.csv").exists()
        assert (out1 / "figures" / "errors.png").exists()
        assert names == sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
        for rel in names:
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel

    def test_header_carries_hash_and_columns(self, tmp_path):
        config = small_config(iterations=100)
        run_experiment(config, output_dir=tmp_path / "out")
        first = (tmp_path / "out" / "trials" / "trial_00000.csv").read_text().splitlines()[0]
        assert first.startswith(f"# hash={config.config_hash()} columns=i,err_1,")

    def test_env_var_overrides_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GOSSIPEST_OUT", str(tmp_path / "envout"))
        config = small_config(iterations=100)
        result = run_experiment(config)
        assert result.output_dir == tmp_path / "envout"
        assert (tmp_path / "envout" / "summary.json").exists()

    def test_no_output_dir_skips_writing(self):
        result = run_experiment(small_config(iterations=100))
        assert result.output_dir is None
