"""Noise-driven runs, the stationary covariance oracle and early-warning estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ModelParams, ReducedState, Trajectory, _linear_map, simulate
from .errors import (
    InsufficientSamplesError,
    NoStationarySolutionError,
    NumericalError,
    PreconditionError,
    UndefinedAutocorrelationError,
)
from .noise import PRNG_NAME, NoiseSpec, draw_noise, make_rng, truncated_variance
from .spectral import (
    critical_beta,
    recovery_time_theory,
    reduced_jacobian,
    rotation_angle,
    spectral_radius,
    stability_criterion,
)

__all__ = [
    "NoiseSpec", "draw_noise", "make_rng", "truncated_variance", "EwsRecord", "EwsReport",
    "noisy_simulate", "stationary_cov_oracle", "stationary_cov_kron", "long_run_covariance",
    "noise_covariance", "variance_estimator", "lag1_autocorr", "measure_recovery_time",
    "ews_sweep", "predicted_indicators",
]

RECOVERY_MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class EwsRecord:
    beta: float
    variance: float
    lag1_ac: float
    tau_theory: float
    tau_measured: int
    sample_count: int
    burn_in: int


@dataclass
class EwsReport:
    records: list = field(default_factory=list)
    seed: int = 0
    prng: str = PRNG_NAME

    @property
    def betas(self):
        return [r.beta for r in self.records]

    @property
    def variances(self):
        return [r.variance for r in self.records]

    @property
    def autocorrelations(self):
        return [r.lag1_ac for r in self.records]


def noisy_simulate(p: ModelParams, spec: NoiseSpec, init: ReducedState, t_max: int) -> Trajectory:
    """Reduced linear run with bounded noise added to ``d`` after every update."""
    q = replace(p, noise_sigma=spec.sigma, noise_bound=spec.bound)
    return simulate("reduced", init, q, t_max, seed=spec.seed)


def noise_covariance(spec: NoiseSpec) -> np.ndarray:
    """Per-step covariance of the additive disagreement noise in (S, d) coordinates."""
    return np.diag([0.0, truncated_variance(spec.sigma, spec.bound)])


def _require_stable(j):
    rho = spectral_radius(j)
    if rho >= 1.0:
        raise NoStationarySolutionError(f"spectral radius {rho} >= 1, no stationary covariance")


def stationary_cov_oracle(j, q, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Solve ``P = J P J^T + Q`` by doubled fixed-point iteration.

    Each pass folds in twice as many terms of the series
    ``sum_k J^k Q (J^k)^T``; a few plain fixed-point sweeps polish the
    result until the residual meets ``tol * max|Q|``.
    """
    j = np.asarray(j, dtype=float)
    q = np.asarray(q, dtype=float)
    _require_stable(j)
    qmax = np.max(np.abs(q))
    if qmax == 0.0:
        return np.zeros_like(q)
    p = q.copy()
    a = j.copy()
    for _ in range(max_iter):
        term = a @ p @ a.T
        p = p + term
        a = a @ a
        if np.max(np.abs(term)) <= 1e-17 * np.max(np.abs(p)):
            break
    for _ in range(max_iter):
        resid = p - j @ p @ j.T - q
        if np.max(np.abs(resid)) <= tol * qmax:
            return 0.5 * (p + p.T)
        p = j @ p @ j.T + q
    raise NumericalError(f"stationary covariance residual {np.max(np.abs(resid)):.3e} above tolerance")


def stationary_cov_kron(j, q) -> np.ndarray:
    """Same solution via the vectorized system ``(I - J kron J) vec P = vec Q``."""
    j = np.asarray(j, dtype=float)
    q = np.asarray(q, dtype=float)
    _require_stable(j)
    n = j.shape[0]
    vec = np.linalg.solve(np.eye(n * n) - np.kron(j, j), q.reshape(-1))
    p = vec.reshape(n, n)
    return 0.5 * (p + p.T)


def long_run_covariance(j, q) -> np.ndarray:
    """Zero-frequency covariance ``(I-J)^-1 Q (I-J)^-T``; sets the standard error of a sample mean."""
    j = np.asarray(j, dtype=float)
    inv = np.linalg.inv(np.eye(j.shape[0]) - j)
    return inv @ np.asarray(q, dtype=float) @ inv.T


def _tail(series, burn_in):
    z = np.asarray(series, dtype=float)
    if z.size <= burn_in + 2:
        raise InsufficientSamplesError(
            f"need more than {burn_in + 2} samples, got {z.size}")
    return z[burn_in:]


def variance_estimator(series, burn_in: int = 0) -> float:
    """Unbiased sample variance after discarding ``burn_in`` samples."""
    return float(np.var(_tail(series, burn_in), ddof=1))


def lag1_autocorr(series, burn_in: int = 0) -> float:
    z = _tail(series, burn_in)
    a = z[:-1] - z[:-1].mean()
    b = z[1:] - z[1:].mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        raise UndefinedAutocorrelationError("series is constant after burn-in")
    return float(np.dot(a, b)) / denom


def measure_recovery_time(p: ModelParams, d0: float = 1.0, eps_rec: float = math.exp(-1.0),
                          max_steps: int = RECOVERY_MAX_STEPS) -> int:
    """Steps until ``|d|`` falls below ``eps_rec * |d0|`` and stays there.

    "Stays there" means for one full rotation period ``ceil(2 pi / theta)``
    of the dominant eigenvalue pair, so a zero crossing of the spiral does
    not count as recovery.
    """
    if not stability_criterion(p):
        raise PreconditionError(f"beta={p.beta} violates 4 eta beta^2 < gamma")
    if d0 == 0 or not math.isfinite(d0):
        raise PreconditionError(f"d0 must be finite and nonzero, got {d0}")
    if not 0.0 < eps_rec < 1.0:
        raise PreconditionError(f"eps_rec must lie in (0, 1), got {eps_rec}")
    theta = rotation_angle(p)
    window = math.ceil(2.0 * math.pi / theta) if theta > 0 else 1
    threshold = eps_rec * abs(d0)
    beta, gamma, eta, alpha = p.beta, p.gamma, p.eta, p.homogeneous_alpha()
    s, d = 0.0, float(d0)
    start = None
    for t in range(max_steps + 1):
        if abs(d) < threshold:
            if start is None:
                start = t
            if t - start >= window:
                return start
        else:
            start = None
        s, d = _linear_map(s, d, beta, gamma, eta, alpha)
    raise NumericalError(f"no sustained recovery within {max_steps} steps at beta={p.beta}")


def ews_sweep(p: ModelParams, betas, spec: NoiseSpec, t_max: int, burn_in: int,
              d0: float = 1.0) -> EwsReport:
    """Variance and lag-1 autocorrelation of ``d`` along a subcritical ``betas`` grid.

    Every grid point reuses ``spec.seed`` (common random numbers), so the
    indicator differences between points reflect the dynamics rather than
    the noise draw.
    """
    betas = [float(b) for b in betas]
    if not betas:
        raise PreconditionError("beta grid is empty")
    if t_max <= burn_in + 2:
        raise PreconditionError(f"t_max={t_max} leaves no samples after burn_in={burn_in}")
    bc = critical_beta(p)
    offenders = [b for b in betas if b >= bc]
    if offenders:
        raise PreconditionError(f"betas {offenders} are not below beta_c={bc:.6f}")
    report = EwsReport(seed=spec.seed)
    for b in betas:
        q = replace(p, beta=b)
        traj = noisy_simulate(q, spec, ReducedState(0.0, 0.0), t_max)
        report.records.append(EwsRecord(
            beta=b,
            variance=variance_estimator(traj.d, burn_in),
            lag1_ac=lag1_autocorr(traj.d, burn_in),
            tau_theory=recovery_time_theory(q),
            tau_measured=measure_recovery_time(q, d0),
            sample_count=len(traj),
            burn_in=burn_in,
        ))
    return report


def predicted_indicators(p: ModelParams, spec: NoiseSpec) -> tuple[float, float]:
    """Stationary variance and lag-1 autocorrelation of ``d`` implied by the oracle."""
    j = reduced_jacobian(p)
    cov = stationary_cov_oracle(j, noise_covariance(spec))
    return float(cov[1, 1]), float((j @ cov)[1, 1] / cov[1, 1])
