"""Scripted experiments: bifurcation sweep, ablations, necessity and history
checks, forward-invariance probe, phase portraits and population scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.stats import qmc

from .core import (
    DIVERGENCE_BOUND,
    ModelParams,
    PairState,
    PopulationState,
    ReducedState,
    Trajectory,
    _linear_map,
    _saturated_map,
    iterate,
    simulate,
)
from .errors import InvariantViolation, ParameterError, PreconditionError
from .noise import PRNG_NAME, make_rng
from .spectral import (
    eig2,
    jacobian_2x2,
    reduced_jacobian,
    spectral_radius,
    stability_criterion,
)
from .stochastic import variance_estimator

CRITICAL_BAND = 0.99
CONVERGENCE_TOL = 1e-6


class RegimeLabel(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL_BAND = "critical_band"
    SUPERCRITICAL = "supercritical"


def classify_regime(rho: float) -> RegimeLabel:
    if rho < CRITICAL_BAND:
        return RegimeLabel.SUBCRITICAL
    if rho < 1.0:
        return RegimeLabel.CRITICAL_BAND
    return RegimeLabel.SUPERCRITICAL


@dataclass(frozen=True)
class SweepRecord:
    beta: float
    regime: RegimeLabel
    rho: float
    final_abs_d: float | None
    diverged_at: int | None
    converged: bool
    tau_theory: float | None


@dataclass
class SweepResult:
    records: list = field(default_factory=list)

    def by_beta(self, beta: float) -> SweepRecord:
        for r in self.records:
            if r.beta == beta:
                return r
        raise KeyError(beta)


def _converged(traj: Trajectory, d0: float, window: int) -> bool:
    if traj.diverged:
        return False
    tail = traj.states[-window:]
    return bool(np.max(np.abs(tail)) <= CONVERGENCE_TOL * max(abs(d0), 1.0))


def bifurcation_sweep(p: ModelParams, betas, t_max: int = 10_000, d0: float = 2.0) -> SweepResult:
    """Deterministic reduced runs from ``(0, d0)`` along ``betas``.

    A run counts as converged when ``|S|`` and ``|d|`` stay below
    ``1e-6 * max(|d0|, 1)`` over the last 100 recorded steps.
    """
    betas = sorted(float(b) for b in betas)
    if not betas:
        raise PreconditionError("beta grid is empty")
    result = SweepResult()
    for b in betas:
        q = replace(p, beta=b)
        rho = spectral_radius(reduced_jacobian(q))
        traj = simulate("reduced", ReducedState(0.0, d0), q, t_max)
        result.records.append(SweepRecord(
            beta=b,
            regime=classify_regime(rho),
            rho=rho,
            final_abs_d=None if traj.diverged else abs(float(traj.d[-1])),
            diverged_at=traj.diverged_at,
            converged=_converged(traj, d0, min(100, len(traj))),
            tau_theory=-1.0 / math.log(rho) if rho < 1.0 else None,
        ))
    return result


# -- ablations ------------------------------------------------------------------

def _memoryless_map(s, d, beta, gamma, eta, alpha=0.0):
    return beta * d, (1.0 - eta * alpha) * d - 4.0 * eta * beta * s


def _as_reduced(init) -> ReducedState:
    if isinstance(init, ReducedState):
        return init
    if isinstance(init, PairState):
        return init.reduce()
    s, d = init
    return ReducedState(float(s), float(d))


def ablate_coupling(p: ModelParams, init, t_max: int) -> Trajectory:
    """Reduced model with beta = 0: d frozen, S decaying by (1 - gamma) per step."""
    init = _as_reduced(init)
    traj = iterate(_linear_map, init, p, t_max, beta=0.0, kind="ablate_coupling")
    if np.any(traj.d != init.d):
        raise InvariantViolation("d changed with coupling removed")
    expected = init.s * (1.0 - p.gamma) ** traj.t
    if not np.allclose(traj.s, expected, rtol=1e-12, atol=0.0):
        raise InvariantViolation("S does not decay geometrically at rate 1 - gamma")
    return traj


def ablate_persistence(p: ModelParams, init, t_max: int) -> Trajectory:
    """Memoryless environment ``S' = beta d``."""
    return iterate(_memoryless_map, _as_reduced(init), p, t_max, kind="ablate_persistence")


def persistence_washout(p: ModelParams, d0: float, s0_a: float, s0_b: float, t_max: int = 50) -> int:
    """First step from which two memoryless environments differing only in S0 agree bitwise.

    Both environments are driven by the same agent history (the closed-loop
    memoryless run from ``s0_a``), and the agents' one-step response to each
    environment is recorded. S loses S0 after one step and the response
    after two. In closed loop the runs never coincide, since d1 already
    depends on S0. Returns -1 if no agreement within ``t_max``.
    """
    ref = ablate_persistence(p, ReducedState(s0_a, d0), t_max)
    a = _replay_memoryless(p, ref.d, s0_a)
    b = _replay_memoryless(p, ref.d, s0_b)
    same = np.all(a == b, axis=1)
    for t in range(same.size):
        if same[t:].all():
            return t
    return -1


def _replay_memoryless(p: ModelParams, d_history, s0: float) -> np.ndarray:
    d_history = np.asarray(d_history, dtype=float)
    alpha = p.homogeneous_alpha()
    out = np.empty((d_history.size, 2))
    out[0] = s0, d_history[0]
    for t in range(1, d_history.size):
        out[t] = _memoryless_map(out[t - 1, 0], d_history[t - 1], p.beta, p.gamma, p.eta, alpha)
    return out


def ablate_dissipation(p: ModelParams, init, t_max: int) -> Trajectory:
    """Reduced model with gamma = 0; the spectral radius is then sqrt(1 + 4 eta beta^2)."""
    init = _as_reduced(init)
    rho = max(abs(z) for z in eig2(jacobian_2x2(p.beta, 0.0, p.eta, p.homogeneous_alpha())))
    if rho < 1.0:
        raise InvariantViolation(f"spectral radius {rho} < 1 without dissipation")
    traj = iterate(_linear_map, init, p, t_max, gamma=0.0, kind="ablate_dissipation",
                   divergence_bound=math.inf)
    traj.extra["rho"] = rho
    return traj


def dissipation_envelope(traj: Trajectory, window: int) -> np.ndarray:
    """Running max of ``|d|`` over consecutive non-overlapping windows."""
    d = np.abs(traj.d)
    n = d.size // window
    return d[: n * window].reshape(n, window).max(axis=1)


# -- necessity -------------------------------------------------------------------

NECESSITY_VARIANTS = ("unresponsive_agents", "memory_blind_incentives")


@dataclass
class NecessityResult:
    trajectory: Trajectory
    verdict: str
    s_mediated: bool


def _necessity_run(variant, p, init: PairState, t_max, c):
    eta = 0.0 if variant == "unresponsive_agents" else p.eta
    a1, a2 = p.damping(2)
    out = np.empty((t_max + 1, 3))
    x1, x2, s = float(init.x1), float(init.x2), float(init.s)
    out[0] = x1, x2, s
    for t in range(1, t_max + 1):
        if variant == "unresponsive_agents":
            g1, g2 = (-2.0 * p.beta) * s, (2.0 * p.beta) * s
        else:
            g1, g2 = c, -c
        s_new = (1.0 - p.gamma) * s + p.beta * (x1 - x2)
        x1 = (1.0 - eta * a1) * x1 + eta * g1
        x2 = (1.0 - eta * a2) * x2 + eta * g2
        s = s_new
        out[t] = x1, x2, s
    return out


def necessity_check(variant: str, p: ModelParams, init: PairState, t_max: int,
                    c: float = 0.0) -> NecessityResult:
    """Run a trivially coupled variant and decide whether S steers the agents.

    ``unresponsive_agents`` sets eta = 0. ``memory_blind_incentives``
    replaces the incentives by the constant pair ``(c, -c)``. The verdict
    compares against a second run whose environment starts elsewhere: if
    the disagreement paths agree bitwise, S has no route to the agents.
    """
    if variant not in NECESSITY_VARIANTS:
        raise ParameterError("variant", f"must be one of {NECESSITY_VARIANTS}, got {variant!r}")
    out = _necessity_run(variant, p, init, t_max, c)
    shifted = PairState(init.x1, init.x2, init.s + 1.0)
    probe = _necessity_run(variant, p, shifted, t_max, c)
    d = out[:, 0] - out[:, 1]
    s_free = bool(np.array_equal(d, probe[:, 0] - probe[:, 1]))
    ss = out[:, 2]
    if variant == "unresponsive_agents":
        g1, g2 = (-2.0 * p.beta) * ss, (2.0 * p.beta) * ss
    else:
        g1, g2 = np.full(t_max + 1, float(c)), np.full(t_max + 1, -float(c))
    traj = Trajectory(
        kind=variant, params=p, t=np.arange(t_max + 1), s=ss, d=d, g1=g1, g2=g2,
        l_global=ss * ss, states=out, final_state=PairState(*map(float, out[-1])),
    )
    verdict = "no incentive-mediated coordination" if s_free else "incentive-mediated coordination"
    return NecessityResult(traj, verdict, not s_free)


# -- history sensitivity -----------------------------------------------------------

@dataclass
class HistoryProfile:
    state_gap: np.ndarray
    incentive_gap: np.ndarray
    run_a: Trajectory
    run_b: Trajectory


def history_sensitivity(p: ModelParams, x0, s0_a: float, s0_b: float, t_max: int) -> HistoryProfile:
    """Two pair runs from the same agent actions but different environment histories."""
    if s0_a == s0_b:
        raise PreconditionError("history sensitivity needs s0_a != s0_b")
    x1, x2 = x0
    a = simulate("pair", PairState(x1, x2, s0_a), p, t_max)
    b = simulate("pair", PairState(x1, x2, s0_b), p, t_max)
    n = min(len(a), len(b))
    gap = np.max(np.abs(a.states[:n] - b.states[:n]), axis=1)
    g_gap = np.abs(a.g1[:n] - b.g1[:n])
    if g_gap[0] == 0.0:
        raise InvariantViolation("identical agent states produced identical incentives")
    return HistoryProfile(gap, g_gap, a, b)


# -- forward invariance ----------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    samples: int
    radius: float
    bound_ratio: float
    absorbed_fraction: float
    t_max: int

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.bound_ratio)


def low_discrepancy_box(radius: float, samples: int) -> np.ndarray:
    """Unscrambled Sobol points mapped onto ``[-radius, radius]^2``."""
    m = max(0, math.ceil(math.log2(samples)))
    pts = qmc.Sobol(d=2, scramble=False).random_base2(m)[:samples]
    return radius * (2.0 * pts - 1.0)


def forward_invariance_probe(p: ModelParams, radius: float = 1.0, samples: int = 256,
                             t_max: int = 5000) -> ProbeReport:
    """Sup-norm excursion ratio and absorption into the radius/10 box."""
    if not stability_criterion(p):
        raise PreconditionError(f"beta={p.beta} violates 4 eta beta^2 < gamma")
    pts = low_discrepancy_box(radius, samples)
    s, d = pts[:, 0].copy(), pts[:, 1].copy()
    alpha = p.homogeneous_alpha()
    peak = np.maximum(np.abs(s), np.abs(d))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(t_max):
            s, d = _linear_map(s, d, p.beta, p.gamma, p.eta, alpha)
            np.maximum(peak, np.maximum(np.abs(s), np.abs(d)), out=peak)
    inner = radius / 10.0
    absorbed = (np.abs(s) <= inner) & (np.abs(d) <= inner)
    ratio = float(np.max(peak)) / radius if np.all(np.isfinite(peak)) else math.inf
    return ProbeReport(samples, radius, ratio, float(np.mean(absorbed)), t_max)


# -- phase portrait ----------------------------------------------------------------

@dataclass
class PhaseField:
    s: np.ndarray
    d: np.ndarray
    ds: np.ndarray
    dd: np.ndarray
    overlay: np.ndarray

    def rows(self):
        for i in range(self.s.size):
            yield {"S": float(self.s.flat[i]), "d": float(self.d.flat[i]),
                   "dS": float(self.ds.flat[i]), "dd": float(self.dd.flat[i])}


_PHASE_MAPS = {"reduced": _linear_map, "saturated": _saturated_map}


def phase_portrait(kind: str, p: ModelParams, grid_extent: float = 2.0, grid_n: int = 21,
                   overlay_start=(0.0, 2.0), overlay_steps: int = 600) -> PhaseField:
    if kind not in _PHASE_MAPS:
        raise ParameterError("kind", f"phase portraits support {tuple(_PHASE_MAPS)}, got {kind!r}")
    if grid_n < 2:
        raise ParameterError("grid_n", f"must be >= 2, got {grid_n}")
    step = _PHASE_MAPS[kind]
    axis = np.linspace(-grid_extent, grid_extent, grid_n)
    ss, dd = np.meshgrid(axis, axis, indexing="xy")
    alpha = p.homogeneous_alpha()
    s1, d1 = step(ss, dd, p.beta, p.gamma, p.eta, alpha)
    overlay = simulate(kind, ReducedState(*map(float, overlay_start)), p, overlay_steps).states
    return PhaseField(ss, dd, s1 - ss, d1 - dd, overlay)


def d_extrema(d) -> np.ndarray:
    """Magnitudes of the local maxima of ``|d|`` along a trajectory."""
    a = np.abs(np.asarray(d, dtype=float))
    inner = (a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:])
    peaks = np.flatnonzero(inner) + 1
    if a.size > 1 and a[0] > a[1]:
        peaks = np.concatenate(([0], peaks))
    return a[peaks]


def nonlinear_convergence(p: ModelParams, init, t_max: int = 100_000) -> float:
    if not stability_criterion(p):
        raise PreconditionError(f"beta={p.beta} violates 4 eta beta^2 < gamma")
    traj = simulate("saturated", _as_reduced(init), p, t_max)
    return abs(float(traj.d[-1]))


# -- scalability -------------------------------------------------------------------

@dataclass
class ScaleResult:
    mode: str
    n_values: list
    variances: list
    seed: int
    slope: float | None = None
    prng: str = PRNG_NAME
    final_states: dict = field(default_factory=dict, repr=False)

    def rows(self):
        for n, v in zip(self.n_values, self.variances):
            yield {"N": n, "variance": v}


def random_population(n: int, seed: int) -> PopulationState:
    """Agents uniform in [-1, 1], environment traces zero."""
    rng = make_rng(seed)
    return PopulationState(rng.uniform(-1.0, 1.0, n), np.zeros(n))


def loglog_slope(n_values, variances) -> float:
    return float(np.polyfit(np.log(n_values), np.log(variances), 1)[0])


def scalability_sweep(p: ModelParams, n_values, mode: str = "deterministic", t_max: int = 2000,
                      seed: int = 0, sigma: float = 0.01, burn_in: int = 100) -> ScaleResult:
    """Variance per population size.

    ``deterministic`` reports the final cross-sectional variance of the
    agent actions. ``noisy`` adds bounded noise of size ``sigma`` to every
    agent each step and reports the variance of the one-step change of the
    population mean after ``burn_in``.
    """
    n_values = [int(n) for n in n_values]
    if any(n < 2 for n in n_values) or n_values != sorted(n_values):
        raise PreconditionError(f"population sizes must be ascending and >= 2, got {n_values}")
    if mode not in ("deterministic", "noisy"):
        raise ParameterError("mode", f"must be 'deterministic' or 'noisy', got {mode!r}")
    q = replace(p, noise_sigma=sigma if mode == "noisy" else 0.0)
    result = ScaleResult(mode=mode, n_values=n_values, variances=[], seed=seed)
    for i, n in enumerate(n_values):
        init = random_population(n, seed + i)
        traj = simulate("meanfield", init, q, t_max, seed=seed + i, keep_states=False,
                        divergence_bound=DIVERGENCE_BOUND)
        if mode == "deterministic":
            result.variances.append(float(traj.extra["x_var"][-1]))
        else:
            result.variances.append(variance_estimator(np.diff(traj.extra["x_mean"]), burn_in))
        result.final_states[n] = traj.final_state
    if len(n_values) >= 2 and all(v > 0 for v in result.variances):
        result.slope = loglog_slope(n_values, result.variances)
    return result
