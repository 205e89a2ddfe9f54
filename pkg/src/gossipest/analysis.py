"""Closed-form and numerical convergence analysis.

The centerpiece is the asymptotic covariance of a consistent estimator run
with tau1 = 1: the scaled error sqrt(i+1) * (estimate - theta) converges in
law to a normal with covariance S solving the continuous Lyapunov equation

    Sigma1 S + S Sigma1^T + (a^2/N^2) S1 = 0,
    Sigma1 = -(a/N) K G + I/2,
    S1 = K (sum over sensor pairs n,l of H_n^T Cov[zeta_n, zeta_l] H_l) K^T,

valid whenever Sigma1 is Hurwitz, i.e. a > N / (2 lambda_min(KG)).  The same
matrix is the covariance of the best *centralized* recursion with gain K, so
it doubles as the reference that distributed runs are checked against.

Also here: the scalar recursion y(i+1) = (1 - r1(i)) y(i) + r2(i) used as an
executable oracle for the decay rates the convergence proofs lean on, a
positivity sweep of the combined consensus+innovation quadratic form, a
log-log slope fitter, and moment-based normality diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InsufficientDataError, NumericalError, ObservabilityError, StabilityError
from .graphs import Laplacian
from .sensing import SensingModel, check_global_observability, grammian

#: lambda_min of the symmetrized quadratic form must exceed this to count as positive
POSITIVITY_TOL = 1e-10


def optimal_gain(model: SensingModel) -> np.ndarray:
    """Inverse of the pooled Grammian, the variance-minimizing innovation gain."""
    ok, smin = check_global_observability(model)
    if not ok:
        raise ObservabilityError(
            f"Grammian is singular (smallest singular value {smin:.3e}); no optimal gain exists")
    g = grammian(model)
    try:
        inv = np.linalg.solve(g, np.eye(model.field_dim))
    except np.linalg.LinAlgError as exc:
        raise ObservabilityError("Grammian solve failed") from exc
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class AsymptoticCovariance:
    """Limiting covariance of the sqrt(i+1)-scaled estimation error."""

    matrix: np.ndarray
    sigma1: np.ndarray
    s1: np.ndarray
    hurwitz_margin: float


def _solve_lyapunov_symmetric(sigma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve sigma X + X sigma^T = -q for symmetric Hurwitz sigma, diagonal in its eigenbasis."""
    vals, vecs = np.linalg.eigh(sigma)
    qt = vecs.T @ q @ vecs
    denom = vals[:, None] + vals[None, :]
    xt = -qt / denom
    x = vecs @ xt @ vecs.T
    return 0.5 * (x + x.T)


def _solve_lyapunov_doubling(sigma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Integral-doubling fallback for a non-symmetric Hurwitz sigma.

    Starts from a high-order quadrature of the integral over a short
    interval [0, h], then repeatedly doubles the covered horizon via
    X <- X + E X E^T, E <- E^2.
    """
    h = 0.5 / max(1.0, np.linalg.norm(sigma, 2))
    nodes, weights = np.polynomial.legendre.leggauss(12)
    x = np.zeros_like(q)
    for t, w in zip(0.5 * h * (nodes + 1.0), 0.5 * h * weights):
        e = scipy.linalg.expm(sigma * t)
        x += w * (e @ q @ e.T)
    e = scipy.linalg.expm(sigma * h)
    for _ in range(200):
        inc = e @ x @ e.T
        x = x + inc
        if np.linalg.norm(inc) <= 1e-16 * max(1.0, np.linalg.norm(x)):
            return 0.5 * (x + x.T)
        e = e @ e
    raise NumericalError("Lyapunov doubling iteration did not converge")


def solve_lyapunov(sigma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve sigma X + X sigma^T = -q, requiring sigma Hurwitz."""
    margin = -float(np.max(np.linalg.eigvals(sigma).real))
    if margin <= 0.0:
        raise StabilityError(f"matrix is not Hurwitz (max eigenvalue real part {-margin:.3e})")
    if np.abs(sigma - sigma.T).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(sigma).max()):
        return _solve_lyapunov_symmetric(0.5 * (sigma + sigma.T), q)
    return _solve_lyapunov_doubling(sigma, q)


def asymptotic_covariance(model: SensingModel, a: float, gain: np.ndarray) -> AsymptoticCovariance:
    """Limiting covariance for innovation weight a/(i+1) and the given gain.

    Only defined for the constant-SNR observation model; with growing noise
    the scaled error has no stationary limit, so gamma0 > 0 is rejected
    rather than silently approximated.
    """
    if model.gamma0 != 0.0:
        raise ValueError(f"asymptotic covariance requires gamma0 = 0, got {model.gamma0}")
    from .estimators import _gain_violations  # shared gain checks

    g = grammian(model)
    bad = _gain_violations(gain, g, "gain")
    if bad:
        raise ValueError("; ".join(bad))
    gain = np.asarray(gain, dtype=np.float64)
    n = model.n_sensors
    m = model.field_dim

    kg = gain @ g
    lam_min = float(np.linalg.eigvalsh(0.5 * (kg + kg.T)).min())
    bound = n / (2.0 * lam_min) if lam_min > 0 else np.inf
    sigma1 = -(a / n) * kg + 0.5 * np.eye(m)
    margin = -float(np.max(np.linalg.eigvals(sigma1).real))
    if margin <= 0.0:
        raise StabilityError(
            f"innovation scale a = {a:.6g} is too small for a stationary scaled error; "
            f"need a > N/(2 lambda_min(KG)) = {bound:.6g}")

    h = model.stacked_matrix()
    s1 = gain @ (h.T @ model.noise_cov @ h) @ gain.T
    s1 = 0.5 * (s1 + s1.T)
    q = (a * a) / (n * n) * s1
    x = solve_lyapunov(sigma1, q)
    return AsymptoticCovariance(matrix=x, sigma1=sigma1, s1=s1, hurwitz_margin=margin)


def covariance_by_quadrature(sigma1: np.ndarray, s1_scaled: np.ndarray,
                             truncation_tol: float = 1e-12,
                             panels: int | None = None, order: int = 10) -> np.ndarray:
    """Independent cross-check: integrate exp(sigma1 v) Q exp(sigma1^T v) dv directly.

    Uses matrix exponentials and composite Gauss-Legendre quadrature,
    truncated where ||exp(sigma1 v)|| falls below truncation_tol; deliberately
    shares no code path with the Lyapunov solver.
    """
    margin = -float(np.max(np.linalg.eigvals(sigma1).real))
    if margin <= 0.0:
        raise StabilityError("integral diverges: matrix is not Hurwitz")
    v_max = -np.log(truncation_tol) / margin
    if panels is None:
        # resolve the fastest mode: keep panel width below ~1.5 / ||sigma1||
        panels = int(min(4000, max(48, np.ceil(v_max * np.linalg.norm(sigma1, 2) / 1.5))))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, v_max, panels + 1)
    total = np.zeros_like(s1_scaled)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for t, w in zip(mid + half * nodes, half * weights):
            e = scipy.linalg.expm(sigma1 * t)
            total += w * (e @ s1_scaled @ e.T)
    return total


def scalar_recursion(y0: float, r1, r2, steps: int,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Iterate y(i+1) = (1 - r1(i)) y(i) + r2(i) and return the full trajectory.

    r1 = (a1, delta1) gives r1(i) = a1/(i+1)^delta1, optionally damped by an
    independent uniform [0, 1] multiplier per step when rng is provided;
    r2 = (a2, delta2) likewise (always deterministic).  Serves as the
    executable oracle for the decay claims: y(i) -> 0 whenever
    delta1 < delta2, and (i+1)^d0 y(i) -> 0 for d0 < delta2 - delta1
    (requiring a1 > d0 in the boundary case delta1 = 1).
    """
    a1, d1 = float(r1[0]), float(r1[1])
    a2, d2 = float(r2[0]), float(r2[1])
    if y0 < 0.0:
        raise ValueError("y0 must be >= 0")
    if a1 <= 0.0 or a2 < 0.0:
        raise ValueError("need a1 > 0 and a2 >= 0")
    if not 0.0 <= d1 <= 1.0:
        raise ValueError("delta1 must lie in [0, 1]")
    if d2 < 0.0 or d1 >= d2:
        raise ValueError("need 0 <= delta1 < delta2")
    idx = np.arange(steps, dtype=np.float64)
    r1_vals = a1 / (idx + 1.0) ** d1
    if rng is not None:
        r1_vals = r1_vals * rng.random(steps)
    if r1_vals.size and (r1_vals.max() > 1.0 or r1_vals.min() < 0.0):
        raise ValueError(
            f"realized contraction weights must lie in [0, 1]; max was {r1_vals.max():.6g}")
    r2_vals = a2 / (idx + 1.0) ** d2
    from .kernels import scalar_recursion_kernel

    return scalar_recursion_kernel(float(y0), r1_vals, r2_vals)


@dataclass(frozen=True)
class QuadraticFormBound:
    """Positivity sweep of ratio * (mean Laplacian) + symmetrized innovation map."""

    threshold_ratio: float | None
    c4_estimate: float
    ratios: np.ndarray
    min_eigenvalues: np.ndarray

    @property
    def ok(self):
        return self.threshold_ratio is not None


def quadratic_form_bound(l_bar: Laplacian, model: SensingModel, gain: np.ndarray,
                         ratios: np.ndarray | None = None) -> QuadraticFormBound:
    """Sweep rho = beta/alpha and certify the combined potential is positive definite.

    For each rho, computes lambda_min of the symmetric part of
    rho * (L_bar kron I_M) + (I_N kron K) blockdiag(H_n^T H_n).  Because the
    consensus-to-innovation ratio grows without bound under the mixed decay
    schedule, positivity at large rho certifies that the combined potential
    eventually contracts in every direction; the value at the largest swept
    rho estimates the contraction constant.
    """
    if ratios is None:
        ratios = np.logspace(-2.0, 4.0, 61)
    ratios = np.asarray(ratios, dtype=np.float64)
    n, m = model.n_sensors, model.field_dim
    if l_bar.n_vertices != n:
        raise ValueError("mean Laplacian size does not match the sensor count")
    gain = np.asarray(gain, dtype=np.float64)
    lkron = np.kron(l_bar.matrix, np.eye(m))
    d_blocks = np.zeros((n * m, n * m))
    for j, h in enumerate(model.matrices):
        d_blocks[j * m:(j + 1) * m, j * m:(j + 1) * m] = gain @ (h.T @ h)
    mins = np.empty(ratios.size)
    for k, rho in enumerate(ratios):
        a = rho * lkron + d_blocks
        mins[k] = np.linalg.eigvalsh(0.5 * (a + a.T)).min()
    positive = mins > POSITIVITY_TOL
    threshold = float(ratios[np.argmax(positive)]) if positive.any() else None
    return QuadraticFormBound(threshold_ratio=threshold, c4_estimate=float(mins[-1]),
                              ratios=ratios, min_eigenvalues=mins)


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit value ~ exp(intercept) * (i+1)^exponent."""

    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    n_dropped: int


def rate_fit(iterations, values, window: tuple | None = None,
             burn_in: float = 0.1) -> RateFit:
    """Fit a line to (log(i+1), log value) over the window.

    Default window drops the leading burn_in fraction of the iteration range
    as transient.  Non-positive values inside the window are dropped and
    counted; fewer than 8 usable points is an error.
    """
    it = np.asarray(iterations, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if it.shape != vals.shape:
        raise ValueError("iterations and values must have matching shapes")
    if window is None:
        window = (float(it.max(initial=0.0)) * burn_in, float(it.max(initial=0.0)))
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"window start must precede window end, got {window}")
    mask = (it >= lo) & (it <= hi)
    sel_it, sel_vals = it[mask], vals[mask]
    usable = sel_vals > 0.0
    n_dropped = int((~usable).sum())
    sel_it, sel_vals = sel_it[usable], sel_vals[usable]
    if sel_it.size < 8:
        raise InsufficientDataError(
            f"need at least 8 positive points in the window, have {sel_it.size} "
            f"({n_dropped} non-positive dropped)")
    lx = np.log(sel_it + 1.0)
    ly = np.log(sel_vals)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-30 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(exponent=float(slope), intercept=float(intercept),
                   r_squared=r2, window=(lo, hi), n_dropped=n_dropped)


@dataclass(frozen=True)
class NormalityReport:
    """Empirical covariance distance plus marginal shape diagnostics."""

    cov_rel_error: float
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    n_samples: int


def normality_check(samples: np.ndarray, s_ref: np.ndarray) -> NormalityReport:
    """Compare sample covariance against a reference and summarize marginal shape.

    cov_rel_error is the Frobenius distance between the empirical covariance
    and s_ref, relative to ||s_ref||_F.  Skewness and excess kurtosis are per
    coordinate, standardized; both vanish for a Gaussian limit.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] < 200:
        raise ValueError(f"need at least 200 samples, got {samples.shape[0]}")
    s_ref = np.atleast_2d(np.asarray(s_ref, dtype=np.float64))
    cov = np.atleast_2d(np.cov(samples.T, ddof=1))
    denom = np.linalg.norm(s_ref)
    if denom == 0.0:
        raise ValueError("reference covariance must be nonzero")
    centered = samples - samples.mean(axis=0)
    std = centered.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    z = centered / std
    skew = (z ** 3).mean(axis=0)
    exkurt = (z ** 4).mean(axis=0) - 3.0
    return NormalityReport(cov_rel_error=float(np.linalg.norm(cov - s_ref) / denom),
                           skewness=skew, excess_kurtosis=exkurt,
                           n_samples=samples.shape[0])
