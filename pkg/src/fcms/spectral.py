"""Jacobians, small eigenproblems and the stability threshold."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams
from .errors import NumericalError, UndefinedRecoveryError

EIG_MAX_ITER = 100


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: tuple
    rho: float
    stable: bool
    criterion_satisfied: bool
    beta_c: float
    tau_theory: float | None

    def to_dict(self) -> dict:
        return {
            "beta_c": self.beta_c,
            "criterion_satisfied": self.criterion_satisfied,
            "eigenvalues": [
                {"re": z.real, "im": z.imag, "abs": abs(z), "arg": cmath.phase(z)}
                for z in self.eigenvalues
            ],
            "rho": self.rho,
            "stable": self.stable,
            "tau_theory": self.tau_theory,
        }


def jacobian_2x2(beta: float, gamma: float, eta: float, alpha: float = 0.0) -> np.ndarray:
    """Linearization of the (S, d) map for raw, unvalidated parameters."""
    return np.array([[1.0 - gamma, beta], [-4.0 * eta * beta, 1.0 - eta * alpha]])


def reduced_jacobian(p: ModelParams) -> np.ndarray:
    return jacobian_2x2(p.beta, p.gamma, p.eta, p.homogeneous_alpha())


def full_jacobian(p: ModelParams) -> np.ndarray:
    """Linearization in (x1, x2, S) coordinates, allowing per-agent damping."""
    a1, a2 = p.damping(2)
    b, e = p.beta, p.eta
    return np.array([
        [1.0 - e * a1, 0.0, -2.0 * e * b],
        [0.0, 1.0 - e * a2, 2.0 * e * b],
        [b, -b, 1.0 - p.gamma],
    ])


def _sort_eigs(roots):
    return tuple(sorted(roots, key=lambda z: (-abs(z), cmath.phase(z))))


def _quadratic_roots(b: complex | float, c: complex | float):
    """Roots of ``z^2 + b z + c`` without catastrophic cancellation."""
    if isinstance(b, complex) or isinstance(c, complex):
        disc = cmath.sqrt(b * b - 4.0 * c)
        q = -0.5 * (b + disc if (b.conjugate() * disc).real >= 0 else b - disc)
        if q == 0:
            return 0j, 0j
        return q, c / q
    disc = b * b - 4.0 * c
    if disc >= 0:
        q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
        if q == 0.0:
            return complex(0.0), complex(0.0)
        return complex(q), complex(c / q)
    re = -0.5 * b
    im = 0.5 * math.sqrt(-disc)
    return complex(re, im), complex(re, -im)


def eig2(m) -> tuple:
    """Eigenvalues of a 2x2 matrix from its characteristic polynomial.

    Ordered by decreasing magnitude, then increasing phase.
    """
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return _sort_eigs(_quadratic_roots(-tr, det))


def charpoly3(m) -> tuple:
    """Monic characteristic polynomial coefficients (a2, a1, a0) of a 3x3 matrix."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    minors = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
              + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
              + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
    det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
           - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
           + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    return float(-tr), float(minors), float(-det)


def _cubic(z, a2, a1, a0):
    return ((z + a2) * z + a1) * z + a0


def _cubic_prime(z, a2, a1):
    return (3.0 * z + 2.0 * a2) * z + a1


def _real_cubic_root(a2, a1, a0, m):
    """Safeguarded Newton (bisection fallback) for one real root."""
    bound = 1.0 + max(abs(a2), abs(a1), abs(a0))
    lo, hi = -bound, bound
    x = 0.5 * (lo + hi)
    dx_old = hi - lo
    dx = dx_old
    for _ in range(EIG_MAX_ITER):
        f = _cubic(x, a2, a1, a0)
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        df = _cubic_prime(x, a2, a1)
        newton_ok = df != 0.0 and lo < x - f / df < hi and abs(2.0 * f) <= abs(dx_old * df)
        dx_old = dx
        if newton_ok:
            dx = f / df
            x_new = x - dx
        else:
            dx = 0.5 * (hi - lo)
            x_new = lo + dx
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(x_new)) or x_new == x:
            return x_new
        x = x_new
    raise NumericalError(f"cubic root search did not converge in {EIG_MAX_ITER} iterations; matrix={m.tolist()}")


def eig_small(m) -> tuple:
    """Eigenvalues of a 3x3 matrix.

    One real root of the characteristic cubic is isolated by safeguarded
    Newton, the cubic is deflated to a quadratic, and every root gets one
    Newton polish against the undeflated cubic.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise NumericalError(f"eig_small needs a finite 3x3 matrix; matrix={m.tolist()}")
    a2, a1, a0 = charpoly3(m)
    r = _real_cubic_root(a2, a1, a0, m)
    b = a2 + r
    c = a1 + r * b
    roots = [complex(r), *_quadratic_roots(b, c)]
    polished = []
    for z in roots:
        f = _cubic(z, a2, a1, a0)
        df = _cubic_prime(z, a2, a1)
        if df != 0:
            z2 = z - f / df
            if abs(_cubic(z2, a2, a1, a0)) < abs(f):
                z = z2
        polished.append(z)
    scale = max(1.0, abs(a2), abs(a1), abs(a0))
    for z in polished:
        if abs(_cubic(z, a2, a1, a0)) > 1e-8 * scale:
            raise NumericalError(f"eigenvalue residual too large for {z}; matrix={m.tolist()}")
    return _sort_eigs(polished)


def spectral_radius(m) -> float:
    m = np.asarray(m, dtype=float)
    eigs = eig2(m) if m.shape == (2, 2) else eig_small(m)
    return max(abs(z) for z in eigs)


def stability_criterion(p: ModelParams) -> bool:
    return 4.0 * p.eta * p.beta ** 2 < p.gamma


def critical_beta(p: ModelParams) -> float:
    return math.sqrt(p.gamma / (4.0 * p.eta))


def lambda_curve(p: ModelParams, betas) -> list[tuple[float, float]]:
    """Dominant eigenvalue magnitude of the reduced Jacobian along ``betas``."""
    alpha = p.homogeneous_alpha()
    return [(float(b), spectral_radius(jacobian_2x2(b, p.gamma, p.eta, alpha))) for b in betas]


def recovery_time_theory(p: ModelParams) -> float:
    rho = spectral_radius(reduced_jacobian(p))
    if rho >= 1.0:
        raise UndefinedRecoveryError(f"spectral radius {rho} >= 1 at beta={p.beta}")
    return -1.0 / math.log(rho)


def rotation_angle(p: ModelParams) -> float:
    """Phase of the dominant eigenvalue pair (0 for a positive real spectrum)."""
    return abs(cmath.phase(eig2(reduced_jacobian(p))[0]))


def spectral_report(p: ModelParams) -> SpectralReport:
    """Report for the reduced Jacobian, or the (x1, x2, S) one under heterogeneous damping."""
    alpha = p.damping(2)
    if alpha[0] == alpha[1]:
        eigs = eig2(reduced_jacobian(p))
    else:
        eigs = eig_small(full_jacobian(p))
    rho = max(abs(z) for z in eigs)
    tau = -1.0 / math.log(rho) if rho < 1.0 else None
    return SpectralReport(
        eigenvalues=eigs, rho=rho, stable=rho < 1.0,
        criterion_satisfied=stability_criterion(p), beta_c=critical_beta(p), tau_theory=tau,
    )
