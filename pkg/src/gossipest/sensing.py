"""Linear observation model with optionally fading noise.

Sensor n sees z_n(i) = H_n theta + gamma(i) * zeta_n(i), where H_n is a
fixed M_n x M observation matrix, theta is the unknown M-vector, and the
stacked noise zeta(i) is zero mean with covariance S_zeta, independent
across iterations but possibly correlated across sensors.  The gain
gamma(i) = (i+1)^gamma0 lets the noise variance grow sublinearly; gamma0=0
is the constant-SNR case.

No single sensor needs to be observable.  The pooled Grammian
G = sum_n H_n^T H_n being full rank ("global observability") is what the
estimators require.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

NOISE_DISTS = ("gaussian", "uniform", "laplace")

#: eigenvalues of the noise covariance below this are rejected as indefinite
PSD_CLAMP_TOL = -1e-10

#: relative singular-value cutoff for the numerical rank of the Grammian
RANK_TOL = 1e-10


def fading_gain(i: int, gamma0: float) -> float:
    """Noise amplitude at iteration i: (i+1)**gamma0.

    Exposed unvalidated (any gamma0 >= 0) so divergence experiments can probe
    the regime where no estimator is consistent.
    """
    if i < 0:
        raise ValueError("iteration index must be >= 0")
    return float((i + 1) ** gamma0)


def _psd_sqrt(s: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root, tolerant of round-off in user-supplied covariances."""
    vals, vecs = np.linalg.eigh(s)
    if vals.min(initial=0.0) < PSD_CLAMP_TOL * max(1.0, vals.max(initial=0.0)):
        raise ModelError(f"noise covariance is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class SensingModel:
    """Per-sensor observation matrices plus the stacked-noise law.

    moment_margin records the epsilon such that the noise has a finite
    (2+epsilon)-th absolute moment; all three supported distributions have
    every moment, so the default 1.0 is safe.  It only feeds the weight
    validators in the estimators module.
    """

    field_dim: int
    matrices: tuple
    noise_cov: np.ndarray
    gamma0: float = 0.0
    noise_dist: str = "gaussian"
    moment_margin: float = 1.0
    _sqrt_cov: np.ndarray = field(init=False, repr=False, compare=False)
    _stacked: np.ndarray = field(init=False, repr=False, compare=False)
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.field_dim < 1:
            raise ModelError("field dimension must be >= 1")
        if not self.matrices:
            raise ModelError("need at least one sensor")
        mats = []
        for n, h in enumerate(self.matrices):
            h = np.atleast_2d(np.asarray(h, dtype=np.float64))
            if h.shape[1] != self.field_dim:
                raise ModelError(f"sensor {n + 1} matrix has {h.shape[1]} columns, expected {self.field_dim}")
            h = h.copy()
            h.flags.writeable = False
            mats.append(h)
        object.__setattr__(self, "matrices", tuple(mats))

        dims = [h.shape[0] for h in mats]
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)
        total = int(offsets[-1])
        s = np.asarray(self.noise_cov, dtype=np.float64)
        if s.shape != (total, total):
            raise ModelError(f"noise covariance must be {total}x{total}, got {s.shape}")
        if np.abs(s - s.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(s).max(initial=0.0)):
            raise ModelError("noise covariance must be symmetric")
        s = 0.5 * (s + s.T)
        root = _psd_sqrt(s)
        if self.gamma0 < 0.0:
            raise ModelError("gamma0 must be >= 0")
        if self.noise_dist not in NOISE_DISTS:
            raise ModelError(f"unknown noise distribution {self.noise_dist!r}, expected one of {NOISE_DISTS}")
        s.flags.writeable = False
        root.flags.writeable = False
        offsets.flags.writeable = False
        stacked = np.vstack(mats)
        stacked.flags.writeable = False
        object.__setattr__(self, "noise_cov", s)
        object.__setattr__(self, "_sqrt_cov", root)
        object.__setattr__(self, "_stacked", stacked)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_sensors(self):
        return len(self.matrices)

    @property
    def obs_dims(self):
        return tuple(h.shape[0] for h in self.matrices)

    @property
    def total_obs_dim(self):
        return int(self._offsets[-1])

    def stacked_matrix(self):
        """All H_n stacked row-wise: (sum M_n, M)."""
        return self._stacked

    def offsets(self):
        """Row offsets of each sensor's block in the stacked observation vector."""
        return self._offsets

    def split(self, stacked: np.ndarray):
        """Split a stacked observation-space vector into per-sensor blocks."""
        o = self._offsets
        return [stacked[o[n]:o[n + 1]] for n in range(self.n_sensors)]

    def draw_base_noise(self, rng: np.random.Generator, size):
        """i.i.d. unit-variance draws of the configured distribution."""
        if self.noise_dist == "gaussian":
            return rng.standard_normal(size)
        if self.noise_dist == "uniform":
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), size)

    def draw_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size, total_obs_dim) stacked draws with covariance noise_cov."""
        base = self.draw_base_noise(rng, (size, self.total_obs_dim))
        return base @ self._sqrt_cov.T


def grammian(model: SensingModel) -> np.ndarray:
    """Pooled observability Grammian G = sum_n H_n^T H_n (symmetric PSD)."""
    h = model.stacked_matrix()
    g = h.T @ h
    return 0.5 * (g + g.T)


def check_global_observability(model: SensingModel, rank_tol: float = RANK_TOL):
    """(is G full rank?, smallest singular value of G)."""
    svals = np.linalg.svd(grammian(model), compute_uv=False)
    smin = float(svals[-1])
    smax = float(svals[0]) if svals.size else 0.0
    return smin > rank_tol * smax and smax > 0.0, smin


@dataclass(frozen=True)
class StackedObservation:
    """One iteration's observations from all sensors."""

    iteration: int
    per_sensor: tuple

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.per_sensor)


def sample_observation(model: SensingModel, theta_star: np.ndarray, i: int,
                       rng: np.random.Generator) -> StackedObservation:
    """Draw z_n(i) = H_n theta_star + gamma(i) zeta_n(i) for all sensors."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_star.shape != (model.field_dim,):
        raise ValueError(f"theta_star must have shape ({model.field_dim},)")
    noise = model.draw_noise(rng, 1)[0]
    z = model.stacked_matrix() @ theta_star + fading_gain(i, model.gamma0) * noise
    return StackedObservation(iteration=i, per_sensor=tuple(b.copy() for b in model.split(z)))


def innovation_dispersion(model: SensingModel, obs: StackedObservation, gain: np.ndarray) -> float:
    """Norm of the stacked gap between per-sensor gained innovations and their average.

    The gained innovation of sensor n is gain @ H_n^T @ z_n: the stacked map
    acts block-diagonally, each sensor applying its own H_n^T to its own
    observation block.  The returned quantity vanishes when all gained
    innovations coincide, and its growth rate controls how fast the network
    averaged estimate tracks the centralized recursion.
    """
    gain = np.asarray(gain, dtype=np.float64)
    if gain.shape != (model.field_dim, model.field_dim):
        raise ValueError("gain must be field_dim x field_dim")
    per = [gain @ h.T @ z for h, z in zip(model.matrices, obs.per_sensor)]
    avg = np.mean(per, axis=0)
    return float(np.linalg.norm(np.concatenate([v - avg for v in per])))
