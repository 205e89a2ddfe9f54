"""Distributed gossip estimator, centralized baseline, and their design validators.

The distributed recursion at sensor n blends two potentials with separately
decaying weights:

    x_n(i+1) = x_n(i)
               - beta(i)  * sum over current neighbors l of (x_n(i) - x_l(i))
               + alpha(i) * K H_n^T (z_n(i) - H_n x_n(i))

with alpha(i) = a/(i+1)^tau1 (innovation) and beta(i) = b/(i+1)^tau2
(consensus).  Making consensus decay strictly slower than innovation
(tau2 < tau1) is what lets information dissemination outrun noise
injection; the validators encode the exact exponent window that the
convergence theory requires.

The centralized baseline sees every sensor's observation each iteration:

    u(i+1) = u(i) + (alpha_c(i)/N) K_c sum_n (H_n^T z_n(i) - H_n^T H_n u(i))

and is "good" (universally consistent) exactly when 0.5 + gamma0 < tau_c <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Laplacian
from .sensing import SensingModel, StackedObservation, grammian

#: relative Frobenius tolerance for requiring gain @ G == G @ gain
COMMUTATOR_TOL = 1e-10


def _as_gain(gain, field_dim):
    k = np.atleast_2d(np.asarray(gain, dtype=np.float64))
    if k.shape != (field_dim, field_dim):
        raise ValueError(f"gain must be {field_dim}x{field_dim}, got {k.shape}")
    k = k.copy()
    k.flags.writeable = False
    return k


@dataclass(frozen=True)
class DistributedParams:
    """Design tuple (tau1, a, tau2, b, gain) plus the noise moment margin."""

    tau1: float
    a: float
    tau2: float
    b: float
    gain: np.ndarray
    epsilon1: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gain", np.atleast_2d(np.asarray(self.gain, dtype=np.float64)))

    @property
    def innovation_exponent(self):
        return self.tau1

    @property
    def innovation_scale(self):
        return self.a


@dataclass(frozen=True)
class CentralizedParams:
    """Design tuple (tau_c, a_c, gain) of the centralized baseline."""

    tau_c: float
    a_c: float
    gain: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gain", np.atleast_2d(np.asarray(self.gain, dtype=np.float64)))

    @property
    def innovation_exponent(self):
        return self.tau_c

    @property
    def innovation_scale(self):
        return self.a_c


def innovation_weight(params, i: int) -> float:
    """alpha(i) = a/(i+1)^tau1, or alpha_c(i) for centralized params."""
    if i < 0:
        raise ValueError("iteration index must be >= 0")
    return params.innovation_scale / (i + 1) ** params.innovation_exponent


def consensus_weight(params: DistributedParams, i: int) -> float:
    """beta(i) = b/(i+1)^tau2."""
    if i < 0:
        raise ValueError("iteration index must be >= 0")
    return params.b / (i + 1) ** params.tau2


def _gain_violations(gain, g, label):
    out = []
    gain = np.asarray(gain, dtype=np.float64)
    m = g.shape[0]
    if gain.shape != (m, m):
        return [f"{label} must be {m}x{m}, got {gain.shape}"]
    if np.abs(gain - gain.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(gain).max(initial=0.0)):
        out.append(f"{label} must be symmetric")
    else:
        eig = np.linalg.eigvalsh(0.5 * (gain + gain.T))
        if eig.min() <= 1e-12 * max(1.0, eig.max(initial=0.0)):
            out.append(f"{label} must be positive definite (min eigenvalue {eig.min():.3e})")
    comm = np.linalg.norm(gain @ g - g @ gain)
    bound = COMMUTATOR_TOL * np.linalg.norm(gain) * np.linalg.norm(g)
    if comm > bound:
        out.append(f"{label} must commute with the Grammian (||KG-GK||_F = {comm:.3e} > {bound:.3e})")
    return out


def validate_distributed_params(p: DistributedParams, model: SensingModel) -> list:
    """Empty list iff the design tuple satisfies every weight and gain condition."""
    v = []
    if not p.tau1 <= 1.0:
        v.append(f"tau1 must be <= 1, got {p.tau1}")
    if not 0.0 < p.tau2:
        v.append(f"tau2 must be > 0, got {p.tau2}")
    if not p.tau2 <= p.tau1:
        v.append(f"tau2 must be <= tau1, got tau2={p.tau2} > tau1={p.tau1}")
    if not p.a > 0.0:
        v.append(f"innovation scale a must be > 0, got {p.a}")
    if not p.b > 0.0:
        v.append(f"consensus scale b must be > 0, got {p.b}")
    if not p.epsilon1 > 0.0:
        v.append(f"moment margin epsilon1 must be > 0, got {p.epsilon1}")
    g0 = model.gamma0
    if not p.tau1 > 0.5 + g0:
        v.append(f"tau1 must exceed 0.5 + gamma0 = {0.5 + g0:.6g}, got {p.tau1}")
    if p.epsilon1 > 0.0:
        bound = p.tau2 + g0 + 1.0 / (2.0 + p.epsilon1)
        if not p.tau1 > bound:
            v.append(
                f"tau1 must exceed tau2 + gamma0 + 1/(2+epsilon1) = {bound:.6g}, got {p.tau1}")
    v += _gain_violations(p.gain, grammian(model), "gain")
    return v


def validate_centralized_params(p: CentralizedParams, model: SensingModel) -> list:
    """Empty list iff the baseline is "good": 0.5 + gamma0 < tau_c <= 1, valid gain."""
    v = []
    g0 = model.gamma0
    if not p.tau_c > 0.5 + g0:
        v.append(f"tau_c must exceed 0.5 + gamma0 = {0.5 + g0:.6g}, got {p.tau_c}")
    if not p.tau_c <= 1.0:
        v.append(f"tau_c must be <= 1, got {p.tau_c}")
    if not p.a_c > 0.0:
        v.append(f"innovation scale a_c must be > 0, got {p.a_c}")
    v += _gain_violations(p.gain, grammian(model), "gain")
    return v


@dataclass(frozen=True)
class NetworkState:
    """Stacked per-sensor estimates (length N*M) plus the iteration counter."""

    x: np.ndarray
    iteration: int
    n_sensors: int
    field_dim: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.shape != (self.n_sensors * self.field_dim,):
            raise ValueError(f"state must have length {self.n_sensors * self.field_dim}, got {x.shape}")
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "x", x)

    def by_sensor(self) -> np.ndarray:
        """View of the stacked state as an (N, M) array."""
        return self.x.reshape(self.n_sensors, self.field_dim)


@dataclass(frozen=True)
class CentralState:
    u: np.ndarray
    iteration: int

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).copy()
        u.flags.writeable = False
        object.__setattr__(self, "u", u)


def initial_network_state(model: SensingModel, value=None) -> NetworkState:
    """All-sensor initial state; value broadcasts a scalar, M-vector, or (N, M) array."""
    n, m = model.n_sensors, model.field_dim
    if value is None:
        x = np.zeros((n, m))
    else:
        x = np.broadcast_to(np.asarray(value, dtype=np.float64), (n, m)).copy()
    return NetworkState(x=x.reshape(-1), iteration=0, n_sensors=n, field_dim=m)


def network_average(state: NetworkState) -> np.ndarray:
    """Arithmetic mean of the N sensor estimates."""
    return state.by_sensor().mean(axis=0)


def distributed_step(state: NetworkState, l_i: Laplacian, obs: StackedObservation,
                     p: DistributedParams, model: SensingModel) -> NetworkState:
    """One synchronous update of every sensor from the *old* state.

    Consensus and innovation terms both read x(i); the consensus sum over the
    iteration's neighbors is exactly the Laplacian row action.
    """
    n, m = model.n_sensors, model.field_dim
    if l_i.n_vertices != n:
        raise ValueError(f"Laplacian is {l_i.n_vertices}x{l_i.n_vertices}, expected {n}x{n}")
    if len(obs.per_sensor) != n:
        raise ValueError("observation does not match the sensor count")
    x = state.by_sensor()
    alpha = innovation_weight(p, state.iteration)
    beta = consensus_weight(p, state.iteration)
    cons = l_i.matrix @ x
    innov = np.empty_like(x)
    for j, (h, z) in enumerate(zip(model.matrices, obs.per_sensor)):
        if z.shape != (h.shape[0],):
            raise ValueError(f"sensor {j + 1} observation has shape {z.shape}, expected ({h.shape[0]},)")
        innov[j] = p.gain @ (h.T @ (z - h @ x[j]))
    new = x - beta * cons + alpha * innov
    return NetworkState(x=new.reshape(-1), iteration=state.iteration + 1,
                        n_sensors=n, field_dim=m)


def centralized_step(state: CentralState, obs: StackedObservation,
                     p: CentralizedParams, model: SensingModel) -> CentralState:
    """One update of the baseline that pools every sensor's innovation."""
    if state.u.shape != (model.field_dim,):
        raise ValueError(f"central state must have shape ({model.field_dim},)")
    alpha_c = innovation_weight(p, state.iteration)
    pooled = np.zeros(model.field_dim)
    for h, z in zip(model.matrices, obs.per_sensor):
        pooled += h.T @ z - h.T @ (h @ state.u)
    new = state.u + (alpha_c / model.n_sensors) * (p.gain @ pooled)
    return CentralState(u=new, iteration=state.iteration + 1)
