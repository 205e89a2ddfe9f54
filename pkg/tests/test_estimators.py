import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipest.estimators import (CentralState, CentralizedParams, DistributedParams,
                                  centralized_step, consensus_weight, distributed_step,
                                  initial_network_state, innovation_weight, network_average,
                                  validate_centralized_params, validate_distributed_params,
                                  NetworkState)
from gossipest.graphs import Graph, complete_graph, laplacian
from gossipest.sensing import SensingModel, StackedObservation


def rng(seed=0):
    return np.random.default_rng(seed)


def scalar_pair_model(noise_cov=None):
    return SensingModel(field_dim=1, matrices=(np.ones((1, 1)), np.ones((1, 1))),
                        noise_cov=np.eye(2) if noise_cov is None else noise_cov)


def random_model(r, n, m):
    mats = []
    for k in range(n):
        rows = int(r.integers(1, 3))
        h = r.standard_normal((rows, m))
        h[0, k % m] += 2.0  # keep the Grammian comfortably full rank
        mats.append(h)
    total = sum(h.shape[0] for h in mats)
    return SensingModel(field_dim=m, matrices=tuple(mats), noise_cov=np.eye(total))


def random_obs(r, model, i=0):
    return StackedObservation(i, tuple(r.standard_normal(h.shape[0]) for h in model.matrices))


class TestWeights:
    def test_innovation_at_zero_is_scale(self):
        p = DistributedParams(tau1=0.8, a=2.5, tau2=0.3, b=1.0, gain=np.eye(1))
        assert innovation_weight(p, 0) == 2.5

    def test_innovation_harmonic(self):
        p = DistributedParams(tau1=1.0, a=2.0, tau2=0.3, b=1.0, gain=np.eye(1))
        assert innovation_weight(p, 3) == pytest.approx(0.5, abs=1e-15)

    def test_innovation_fractional_exponent(self):
        p = DistributedParams(tau1=0.8, a=1.0, tau2=0.3, b=1.0, gain=np.eye(1))
        assert innovation_weight(p, 9) == pytest.approx(10 ** -0.8, rel=1e-12)

    def test_consensus_at_zero_is_scale(self):
        p = DistributedParams(tau1=1.0, a=1.0, tau2=0.3, b=0.7, gain=np.eye(1))
        assert consensus_weight(p, 0) == 0.7

    def test_centralized_weight(self):
        c = CentralizedParams(tau_c=1.0, a_c=4.0, gain=np.eye(1))
        assert innovation_weight(c, 7) == pytest.approx(0.5, abs=1e-15)

    def test_ratio_grows_monotonically(self):
        p = DistributedParams(tau1=1.0, a=1.0, tau2=0.2, b=1.0, gain=np.eye(1))
        ratios = [consensus_weight(p, i) / innovation_weight(p, i) for i in range(0, 2000, 97)]
        assert all(r2 > r1 for r1, r2 in zip(ratios, ratios[1:]))


class TestValidators:
    def test_accepts_standard_design(self):
        model = scalar_pair_model()
        p = DistributedParams(tau1=1.0, a=1.0, tau2=0.1, b=1.0, gain=0.5 * np.eye(1))
        assert validate_distributed_params(p, model) == []

    def test_rejects_mixed_exponent_window(self):
        model = scalar_pair_model()
        model = SensingModel(field_dim=1, matrices=model.matrices, noise_cov=np.eye(2),
                             gamma0=0.4)
        p = DistributedParams(tau1=0.85, a=1.0, tau2=0.2, b=1.0, gain=np.eye(1), epsilon1=1.0)
        msgs = validate_distributed_params(p, model)
        assert any("tau2 + gamma0 + 1/(2+epsilon1)" in m and "0.9333" in m for m in msgs)

    def test_rejects_tau1_above_one(self):
        p = DistributedParams(tau1=1.2, a=1.0, tau2=0.1, b=1.0, gain=np.eye(1))
        msgs = validate_distributed_params(p, scalar_pair_model())
        assert any("tau1 must be <= 1" in m for m in msgs)

    def test_rejects_gain_not_commuting(self):
        model = SensingModel(field_dim=2,
                             matrices=(np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]])),
                             noise_cov=np.eye(2))
        gain = np.diag([1.0, 3.0])
        p = DistributedParams(tau1=1.0, a=1.0, tau2=0.1, b=1.0, gain=gain)
        msgs = validate_distributed_params(p, model)
        assert any("commute" in m for m in msgs)

    def test_rejects_indefinite_gain(self):
        p = DistributedParams(tau1=1.0, a=1.0, tau2=0.1, b=1.0, gain=-np.eye(1))
        msgs = validate_distributed_params(p, scalar_pair_model())
        assert any("positive definite" in m for m in msgs)

    def test_central_good_window(self):
        model = scalar_pair_model()
        assert validate_centralized_params(
            CentralizedParams(tau_c=1.0, a_c=1.0, gain=np.eye(1)), model) == []

    def test_central_rejects_boundary(self):
        model = scalar_pair_model()
        msgs = validate_centralized_params(
            CentralizedParams(tau_c=0.5, a_c=1.0, gain=np.eye(1)), model)
        assert any("tau_c must exceed 0.5" in m for m in msgs)

    def test_central_rejects_for_fast_fading(self):
        model = SensingModel(field_dim=1, matrices=(np.ones((1, 1)), np.ones((1, 1))),
                             noise_cov=np.eye(2), gamma0=0.4)
        msgs = validate_centralized_params(
            CentralizedParams(tau_c=0.9, a_c=1.0, gain=np.eye(1)), model)
        assert any("0.9" in m for m in msgs) and msgs

    def test_monotone_in_gamma0(self):
        r = rng(17)
        mats = (np.ones((1, 1)), np.ones((1, 1)))
        for _ in range(50):
            tau1 = r.uniform(0.5, 1.0)
            tau2 = r.uniform(0.01, tau1)
            g_hi = r.uniform(0.0, 0.49)
            g_lo = r.uniform(0.0, g_hi)
            p = DistributedParams(tau1=tau1, a=1.0, tau2=tau2, b=1.0, gain=np.eye(1))
            hi = SensingModel(field_dim=1, matrices=mats, noise_cov=np.eye(2), gamma0=g_hi)
            lo = SensingModel(field_dim=1, matrices=mats, noise_cov=np.eye(2), gamma0=g_lo)
            if not validate_distributed_params(p, hi):
                assert not validate_distributed_params(p, lo)


class TestDistributedStep:
    def test_noiseless_consensus_state_is_fixed_point(self):
        r = rng(1)
        model = random_model(r, 4, 3)
        theta = r.standard_normal(3)
        state = initial_network_state(model, theta)
        obs = StackedObservation(0, tuple(h @ theta for h in model.matrices))
        p = DistributedParams(tau1=1.0, a=0.7, tau2=0.2, b=0.4, gain=np.eye(3))
        lap = laplacian(complete_graph(4))
        new = distributed_step(state, lap, obs, p, model)
        assert np.allclose(new.by_sensor(), state.by_sensor(), atol=1e-14)

    def test_single_sensor_scalar_relaxation(self):
        model = SensingModel(field_dim=1, matrices=(np.ones((1, 1)),), noise_cov=np.eye(1))
        state = initial_network_state(model)
        p = DistributedParams(tau1=1.0, a=0.5, tau2=0.5, b=1.0, gain=np.eye(1))
        obs = StackedObservation(0, (np.array([1.0]),))
        new = distributed_step(state, laplacian(Graph(1, ())), obs, p, model)
        assert new.x[0] == pytest.approx(0.5, abs=1e-15)
        assert new.iteration == 1

    def test_two_sensor_hand_recursion(self):
        model = scalar_pair_model()
        state = NetworkState(x=np.array([0.0, 2.0]), iteration=0, n_sensors=2, field_dim=1)
        p = DistributedParams(tau1=1.0, a=0.5, tau2=1.0, b=0.25, gain=np.eye(1))
        obs = StackedObservation(0, (np.array([1.0]), np.array([1.0])))
        new = distributed_step(state, laplacian(Graph(2, ((1, 2),))), obs, p, model)
        assert np.allclose(new.x, [1.0, 1.0], atol=1e-15)

    def test_dimension_mismatch_rejected(self):
        model = scalar_pair_model()
        state = initial_network_state(model)
        p = DistributedParams(tau1=1.0, a=0.5, tau2=1.0, b=0.25, gain=np.eye(1))
        obs = StackedObservation(0, (np.array([1.0]), np.array([1.0])))
        with pytest.raises(ValueError, match="Laplacian"):
            distributed_step(state, laplacian(complete_graph(3)), obs, p, model)
        bad_obs = StackedObservation(0, (np.array([1.0, 2.0]), np.array([1.0])))
        with pytest.raises(ValueError):
            distributed_step(state, laplacian(Graph(2, ((1, 2),))), bad_obs, p, model)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=4),
           st.integers(min_value=0, max_value=10**6))
    def test_matches_kronecker_stacked_form(self, n, m, seed):
        r = rng(seed)
        model = random_model(r, n, m)
        pairs = [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)]
        edges = tuple(e for e in pairs if r.random() < 0.6)
        lap = laplacian(Graph(n, edges))
        p = DistributedParams(tau1=1.0, a=r.uniform(0.1, 2.0), tau2=0.2,
                              b=r.uniform(0.1, 1.0), gain=np.eye(m) * r.uniform(0.5, 2.0))
        state = NetworkState(x=r.standard_normal(n * m), iteration=int(r.integers(0, 50)),
                             n_sensors=n, field_dim=m)
        obs = random_obs(r, model, state.iteration)

        # independent stacked route: Kronecker consensus + block-diagonal innovation maps
        alpha = innovation_weight(p, state.iteration)
        beta = consensus_weight(p, state.iteration)
        d_bar = scipy.linalg.block_diag(*(h.T for h in model.matrices))
        d_sq = scipy.linalg.block_diag(*(h.T @ h for h in model.matrices))
        ik = np.kron(np.eye(n), p.gain)
        stacked = (state.x - beta * np.kron(lap.matrix, np.eye(m)) @ state.x
                   + alpha * ik @ (d_bar @ obs.stacked() - d_sq @ state.x))

        new = distributed_step(state, lap, obs, p, model)
        assert np.linalg.norm(new.x - stacked) <= 1e-12 * max(1.0, np.linalg.norm(stacked))

    def test_consensus_only_update_preserves_average(self):
        r = rng(23)
        model = random_model(r, 5, 2)
        p = DistributedParams(tau1=1.0, a=0.0, tau2=0.2, b=0.7, gain=np.eye(2))
        state = NetworkState(x=r.standard_normal(10), iteration=3, n_sensors=5, field_dim=2)
        obs = random_obs(r, model, 3)
        new = distributed_step(state, laplacian(complete_graph(5)), obs, p, model)
        assert np.allclose(network_average(new), network_average(state), atol=1e-14)

    def test_averaged_update_identity(self):
        # the network average moves like one centralized step plus a correction
        # proportional to the per-sensor deviations from the average
        r = rng(29)
        for _ in range(10):
            n, m = int(r.integers(2, 6)), int(r.integers(1, 4))
            model = random_model(r, n, m)
            p = DistributedParams(tau1=1.0, a=r.uniform(0.2, 2.0), tau2=0.2, b=0.5,
                                  gain=np.eye(m))
            c = CentralizedParams(tau_c=p.tau1, a_c=p.a, gain=p.gain)
            state = NetworkState(x=r.standard_normal(n * m), iteration=int(r.integers(0, 9)),
                                 n_sensors=n, field_dim=m)
            obs = random_obs(r, model, state.iteration)
            pairs = [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)]
            lap = laplacian(Graph(n, tuple(e for e in pairs if r.random() < 0.5)))

            after = network_average(distributed_step(state, lap, obs, p, model))
            cstep = centralized_step(
                CentralState(u=network_average(state), iteration=state.iteration),
                obs, c, model).u
            alpha = innovation_weight(p, state.iteration)
            avg = network_average(state)
            x = state.by_sensor()
            corr = np.zeros(m)
            for j, h in enumerate(model.matrices):
                corr += h.T @ (h @ (x[j] - avg))
            expected = cstep - (alpha / n) * (p.gain @ corr)
            assert np.linalg.norm(after - expected) <= 1e-12 * max(1.0, np.linalg.norm(expected))


class TestCentralizedStep:
    def test_fixed_point_at_truth(self):
        r = rng(2)
        model = random_model(r, 3, 2)
        theta = r.standard_normal(2)
        obs = StackedObservation(0, tuple(h @ theta for h in model.matrices))
        c = CentralizedParams(tau_c=1.0, a_c=1.0, gain=np.eye(2))
        new = centralized_step(CentralState(u=theta, iteration=0), obs, c, model)
        assert np.allclose(new.u, theta, atol=1e-14)

    def test_two_sensor_average(self):
        model = scalar_pair_model()
        c = CentralizedParams(tau_c=1.0, a_c=1.0, gain=np.eye(1))
        obs = StackedObservation(0, (np.array([1.0]), np.array([1.0])))
        new = centralized_step(CentralState(u=np.zeros(1), iteration=0), obs, c, model)
        assert new.u[0] == pytest.approx(1.0, abs=1e-15)

    def test_zero_weight_freezes_state(self):
        model = scalar_pair_model()
        c = CentralizedParams(tau_c=1.0, a_c=0.0, gain=np.eye(1))
        obs = StackedObservation(0, (np.array([5.0]), np.array([-3.0])))
        state = CentralState(u=np.array([0.25]), iteration=0)
        assert centralized_step(state, obs, c, model).u[0] == 0.25


class TestNetworkAverage:
    def test_consensus_subspace(self):
        theta = np.array([2.0, -1.0])
        state = NetworkState(x=np.tile(theta, 3), iteration=0, n_sensors=3, field_dim=2)
        assert np.array_equal(network_average(state), theta)

    def test_two_scalar_sensors(self):
        state = NetworkState(x=np.array([0.0, 2.0]), iteration=0, n_sensors=2, field_dim=1)
        assert network_average(state)[0] == 1.0

    def test_state_length_validated(self):
        with pytest.raises(ValueError):
            NetworkState(x=np.zeros(5), iteration=0, n_sensors=2, field_dim=2)
