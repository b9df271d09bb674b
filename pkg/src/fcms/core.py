"""State types and steppers for feedback-coupled memory systems.

Every stepper is a pure function of ``(state, params)``. The arithmetic
lives in small ``_*_map`` helpers that accept floats or numpy arrays, so
scalar steppers, the trajectory loop and the batched experiments all
evaluate exactly the same expressions in the same order.

Update convention (simultaneous): the environment sees the pre-update
agent actions and the agents see the pre-update environment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import DimensionError, DivergenceError, ParameterError
from .noise import NoiseSpec, draw_noise, make_rng

KINDS = ("reduced", "pair", "saturated", "perturbed", "meanfield")

# Trajectories stop once any tracked magnitude exceeds this.
DIVERGENCE_BOUND = 1e6

# Meanfield trajectories keep full snapshots only below this many values.
_SNAPSHOT_LIMIT = 2_000_000


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the closed loop.

    ``alpha`` holds per-agent damping; an empty tuple means no damping for
    any number of agents and a single value is shared by all agents.
    """

    beta: float = 0.5
    gamma: float = 0.1
    eta: float = 0.01
    alpha: tuple = ()
    noise_sigma: float = 0.0
    noise_bound: float = 3.0
    epsilon: float = 0.0

    def __post_init__(self):
        alpha = self.alpha
        if np.isscalar(alpha):
            alpha = (alpha,)
        object.__setattr__(self, "alpha", tuple(float(a) for a in alpha))
        for name in ("beta", "gamma", "eta", "noise_sigma", "noise_bound", "epsilon"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(name, f"must be a finite real, got {value!r}")
        if not self.beta > 0:
            raise ParameterError("beta", f"must satisfy beta > 0, got {self.beta}")
        if not self.eta > 0:
            raise ParameterError("eta", f"must satisfy eta > 0, got {self.eta}")
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma", f"must satisfy 0 < gamma < 1, got {self.gamma}")
        if any(not (a >= 0 and math.isfinite(a)) for a in self.alpha):
            raise ParameterError("alpha", f"entries must be finite and >= 0, got {self.alpha}")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma", f"must be >= 0, got {self.noise_sigma}")
        if not self.noise_bound > 0:
            raise ParameterError("noise_bound", f"must be > 0, got {self.noise_bound}")
        if self.epsilon < 0:
            raise ParameterError("epsilon", f"must be >= 0, got {self.epsilon}")

    def damping(self, n: int) -> tuple:
        """Damping coefficients for ``n`` agents."""
        if not self.alpha:
            return (0.0,) * n
        if len(self.alpha) == 1:
            return self.alpha * n
        if len(self.alpha) != n:
            raise ParameterError("alpha", f"has {len(self.alpha)} entries for {n} agents")
        return self.alpha

    def homogeneous_alpha(self) -> float:
        """The shared damping value; heterogeneous damping is an error."""
        if not self.alpha:
            return 0.0
        if any(a != self.alpha[0] for a in self.alpha):
            raise ParameterError("alpha", f"heterogeneous damping {self.alpha} has no reduced form")
        return self.alpha[0]

    @property
    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(sigma=self.noise_sigma, bound=self.noise_bound)


@dataclass(frozen=True)
class ReducedState:
    s: float
    d: float

    def as_tuple(self):
        return (self.s, self.d)


@dataclass(frozen=True)
class PairState:
    x1: float
    x2: float
    s: float

    @property
    def d(self) -> float:
        return self.x1 - self.x2

    def reduce(self) -> ReducedState:
        return ReducedState(self.s, self.x1 - self.x2)


@dataclass(frozen=True, eq=False)
class PopulationState:
    """N agent values ``x`` and their per-agent environment traces ``s``."""

    x: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if x.ndim != 1 or s.shape != x.shape:
            raise DimensionError(f"x and s must be 1-D of equal length, got {x.shape} and {s.shape}")
        if x.size < 2:
            raise DimensionError(f"population needs N >= 2 agents, got {x.size}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.x.size

    @classmethod
    def from_pair(cls, pair: PairState) -> "PopulationState":
        """Embed a pair with the antisymmetric trace ``(S, -S)``."""
        return cls(np.array([pair.x1, pair.x2]), np.array([pair.s, -pair.s]))


@dataclass
class Trajectory:
    """Per-step record of a run.

    Columns ``s``, ``d``, ``g1``, ``g2`` and ``l_global`` are aligned with
    ``t``. For meanfield runs they hold population summaries: ``s`` is the
    RMS environment trace, ``d`` the RMS deviation from the agent mean,
    ``g1`` the mean incentive and ``g2`` the RMS incentive.
    """

    kind: str
    params: ModelParams
    t: np.ndarray
    s: np.ndarray
    d: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    l_global: np.ndarray
    states: np.ndarray | None = None
    final_state: object = None
    seed: int | None = None
    diverged_at: int | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def records(self) -> Iterator[dict]:
        for i in range(self.t.size):
            yield {
                "t": int(self.t[i]),
                "S": float(self.s[i]),
                "d": float(self.d[i]),
                "G1": float(self.g1[i]),
                "G2": float(self.g2[i]),
                "L_global": float(self.l_global[i]),
            }


# -- arithmetic kernels -----------------------------------------------------

def _linear_map(s, d, beta, gamma, eta, alpha=0.0):
    return (1.0 - gamma) * s + beta * d, (1.0 - eta * alpha) * d - 4.0 * eta * beta * s


def _saturated_map(s, d, beta, gamma, eta, alpha=0.0):
    return (1.0 - gamma) * np.tanh(s) + beta * d, (1.0 - eta * alpha) * d - 4.0 * eta * beta * s


def _pair_map(x1, x2, s, beta, gamma, eta, alpha1=0.0, alpha2=0.0):
    g1 = (-2.0 * beta) * s
    g2 = (2.0 * beta) * s
    s_new = (1.0 - gamma) * s + beta * (x1 - x2)
    return (1.0 - eta * alpha1) * x1 + eta * g1, (1.0 - eta * alpha2) * x2 + eta * g2, s_new


def _deviation(x):
    # Shift by the first agent before averaging: at N=2 this makes the
    # deviations exactly +-(x1 - x2)/2, so the meanfield update matches the
    # pair update bit for bit.
    y = x - x[0]
    return y - y.mean()


def _meanfield_map(x, s, e, beta, gamma, eta, damp=None):
    g = (-2.0 * beta) * s
    s_new = (1.0 - gamma) * s + (2.0 * beta) * e
    if damp is None:
        x_new = x + eta * g
    else:
        x_new = damp * x + eta * g
    return x_new, s_new


def _finite(value) -> bool:
    return math.isfinite(value)


def _check_reduced(state: ReducedState):
    if not _finite(state.s):
        raise DivergenceError("s", state.s)
    if not _finite(state.d):
        raise DivergenceError("d", state.d)


# -- public steppers ----------------------------------------------------------

def incentive_field(s: float, p: ModelParams) -> tuple[float, float]:
    if not _finite(s):
        raise DivergenceError("s", s)
    return (-2.0 * p.beta) * s, (2.0 * p.beta) * s


def global_signal(s: float) -> float:
    if not _finite(s):
        raise DivergenceError("s", s)
    return s * s


def reduced_step(state: ReducedState, p: ModelParams) -> ReducedState:
    _check_reduced(state)
    return ReducedState(*_linear_map(state.s, state.d, p.beta, p.gamma, p.eta, p.homogeneous_alpha()))


def pair_step(state: PairState, p: ModelParams) -> PairState:
    for name in ("x1", "x2", "s"):
        if not _finite(getattr(state, name)):
            raise DivergenceError(name, getattr(state, name))
    a1, a2 = p.damping(2)
    return PairState(*_pair_map(state.x1, state.x2, state.s, p.beta, p.gamma, p.eta, a1, a2))


def saturated_step(state: ReducedState, p: ModelParams) -> ReducedState:
    _check_reduced(state)
    s, d = _saturated_map(state.s, state.d, p.beta, p.gamma, p.eta, p.homogeneous_alpha())
    return ReducedState(float(s), d)


def cubic_damping(s: float, d: float) -> float:
    return -s ** 3


def transcendental_coupling(s: float, d: float) -> float:
    return math.sin(d)


PERTURBATIONS = {"cubic": cubic_damping, "sin": transcendental_coupling}


def _perturbed_map(sigma_fn, epsilon):
    def step(s, d, beta, gamma, eta, alpha=0.0):
        s_new, d_new = _linear_map(s, d, beta, gamma, eta, alpha)
        if epsilon == 0.0:
            return s_new, d_new
        kick = sigma_fn(s, d)
        if not _finite(kick):
            raise DivergenceError("perturbation", kick)
        return s_new + epsilon * kick, d_new

    return step


def perturbed_step(state: ReducedState, p: ModelParams,
                   sigma_fn: Callable[[float, float], float] = cubic_damping) -> ReducedState:
    _check_reduced(state)
    step = _perturbed_map(sigma_fn, p.epsilon)
    return ReducedState(*step(state.s, state.d, p.beta, p.gamma, p.eta, p.homogeneous_alpha()))


def _damping_array(p: ModelParams, n: int, eta: float):
    alpha = p.damping(n)
    if not any(alpha):
        return None
    return 1.0 - eta * np.asarray(alpha)


def _first_nonfinite(a: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(a))
    return int(bad[0]) if bad.size else None


def meanfield_step(state: PopulationState, p: ModelParams) -> PopulationState:
    """One synchronous update of the N-agent meanfield model.

    Each agent carries its own environment trace ``S_i`` that accumulates
    the agent's deviation from the population mean with gain ``2 beta``;
    the agent responds to the incentive ``-2 beta S_i``.
    """
    for name in ("x", "s"):
        i = _first_nonfinite(getattr(state, name))
        if i is not None:
            raise DivergenceError(name, getattr(state, name)[i], index=i)
    e = _deviation(state.x)
    x, s = _meanfield_map(state.x, state.s, e, p.beta, p.gamma, p.eta,
                          _damping_array(p, state.n, p.eta))
    return PopulationState(x, s)


# -- trajectories -------------------------------------------------------------

def iterate(step_map, init: ReducedState, p: ModelParams, t_max: int, *,
            beta=None, gamma=None, eta=None, alpha=None, noise=None,
            divergence_bound=DIVERGENCE_BOUND, kind="reduced", seed=None) -> Trajectory:
    """Iterate a raw ``(s, d)`` map and record every step.

    The keyword overrides let ablations run parameter values that
    ``ModelParams`` rejects (beta = 0, gamma = 0, eta = 0). ``noise`` is
    an optional array of length ``t_max`` added to ``d`` after each update.
    """
    if t_max < 1:
        raise ParameterError("t_max", f"must be >= 1, got {t_max}")
    beta = p.beta if beta is None else beta
    gamma = p.gamma if gamma is None else gamma
    eta = p.eta if eta is None else eta
    alpha = p.homogeneous_alpha() if alpha is None else alpha

    ss = np.empty(t_max + 1)
    ds = np.empty(t_max + 1)
    s, d = float(init.s), float(init.d)
    _check_reduced(init)
    ss[0], ds[0] = s, d
    diverged_at = None
    n = t_max + 1
    for t in range(1, t_max + 1):
        try:
            s, d = step_map(s, d, beta, gamma, eta, alpha)
        except DivergenceError:
            diverged_at, n = t, t
            break
        if noise is not None:
            d = d + noise[t - 1]
        if not (abs(s) <= divergence_bound and abs(d) <= divergence_bound):
            diverged_at, n = t, t
            break
        ss[t], ds[t] = s, d
    ss, ds = ss[:n], ds[:n]
    return Trajectory(
        kind=kind, params=p, t=np.arange(n), s=ss, d=ds,
        g1=(-2.0 * beta) * ss, g2=(2.0 * beta) * ss, l_global=ss * ss,
        states=np.column_stack([ss, ds]),
        final_state=ReducedState(float(ss[-1]), float(ds[-1])),
        seed=seed, diverged_at=diverged_at,
    )


def _simulate_pair(init: PairState, p: ModelParams, t_max: int, noise, seed, bound) -> Trajectory:
    a1, a2 = p.damping(2)
    out = np.empty((t_max + 1, 3))
    x1, x2, s = float(init.x1), float(init.x2), float(init.s)
    if not all(map(_finite, (x1, x2, s))):
        raise DivergenceError("init", (x1, x2, s))
    out[0] = x1, x2, s
    diverged_at = None
    n = t_max + 1
    for t in range(1, t_max + 1):
        x1, x2, s = _pair_map(x1, x2, s, p.beta, p.gamma, p.eta, a1, a2)
        if noise is not None:
            x1 = x1 + noise[t - 1, 0]
            x2 = x2 + noise[t - 1, 1]
        if not (abs(x1) <= bound and abs(x2) <= bound and abs(s) <= bound):
            diverged_at, n = t, t
            break
        out[t] = x1, x2, s
    out = out[:n]
    ss = out[:, 2]
    return Trajectory(
        kind="pair", params=p, t=np.arange(n), s=ss, d=out[:, 0] - out[:, 1],
        g1=(-2.0 * p.beta) * ss, g2=(2.0 * p.beta) * ss, l_global=ss * ss,
        states=out, final_state=PairState(*map(float, out[-1])),
        seed=seed, diverged_at=diverged_at,
    )


def _simulate_meanfield(init: PopulationState, p: ModelParams, t_max: int, seed,
                        bound, keep_states) -> Trajectory:
    n_agents = init.n
    if keep_states is None:
        keep_states = n_agents * (t_max + 1) <= _SNAPSHOT_LIMIT
    noise_on = p.noise_sigma > 0
    rng = make_rng(seed) if noise_on else None
    spec = NoiseSpec(sigma=p.noise_sigma, bound=p.noise_bound, target="per-agent", seed=seed or 0)
    damp = _damping_array(p, n_agents, p.eta)

    cols = {k: np.empty(t_max + 1) for k in ("s", "d", "g1", "g2", "l", "xm", "xv")}
    snaps = np.empty((t_max + 1, 2 * n_agents)) if keep_states else None
    x, s = init.x.copy(), init.s.copy()
    for name, arr in (("x", x), ("s", s)):
        i = _first_nonfinite(arr)
        if i is not None:
            raise DivergenceError(name, arr[i], index=i)

    two_beta = 2.0 * p.beta
    c_s, c_e, c_g = 1.0 - p.gamma, 2.0 * p.beta, -2.0 * p.beta
    diverged_at = None
    n = t_max + 1
    # Preallocated buffers; the in-place ops evaluate the same expressions
    # as _deviation/_meanfield_map, so results match meanfield_step bitwise.
    y, e, g, tmp = (np.empty(n_agents) for _ in range(4))
    for t in range(t_max + 1):
        np.subtract(x, x[0], out=y)
        y_mean = y.mean()
        np.subtract(y, y_mean, out=e)
        xv = float(np.dot(e, e)) / n_agents
        sm = float(s.sum()) / n_agents
        l_mean = float(np.dot(s, s)) / n_agents
        if not (math.isfinite(xv) and math.isfinite(l_mean)
                and xv <= bound * bound and l_mean <= bound * bound):
            diverged_at, n = t, t
            break
        cols["s"][t] = math.sqrt(l_mean)
        cols["d"][t] = math.sqrt(xv)
        cols["g1"][t] = -two_beta * sm
        cols["g2"][t] = two_beta * math.sqrt(l_mean)
        cols["l"][t] = l_mean
        cols["xm"][t] = x[0] + y_mean
        cols["xv"][t] = xv
        if keep_states:
            snaps[t, :n_agents] = x
            snaps[t, n_agents:] = s
        if t == t_max:
            break
        np.multiply(s, c_g, out=g)
        np.multiply(s, c_s, out=s)
        np.multiply(e, c_e, out=tmp)
        np.add(s, tmp, out=s)
        np.multiply(g, p.eta, out=g)
        if damp is not None:
            np.multiply(x, damp, out=x)
        np.add(x, g, out=x)
        if noise_on:
            x += draw_noise(spec, rng, size=n_agents)

    if diverged_at is not None:
        final = None
    else:
        final = PopulationState(x, s)
    return Trajectory(
        kind="meanfield", params=p, t=np.arange(n), s=cols["s"][:n], d=cols["d"][:n],
        g1=cols["g1"][:n], g2=cols["g2"][:n], l_global=cols["l"][:n],
        states=snaps[:n] if keep_states else None, final_state=final,
        seed=seed if noise_on else None, diverged_at=diverged_at,
        extra={"x_mean": cols["xm"][:n], "x_var": cols["xv"][:n]},
    )


_REDUCED_KINDS = {"reduced": _linear_map, "saturated": _saturated_map}


def simulate(kind: str, init, p: ModelParams, t_max: int, seed: int | None = None, *,
             sigma_fn: Callable[[float, float], float] = cubic_damping,
             divergence_bound: float = DIVERGENCE_BOUND,
             keep_states: bool | None = None) -> Trajectory:
    """Apply the ``kind`` stepper ``t_max`` times from ``init``.

    With ``p.noise_sigma > 0`` bounded Gaussian noise is added after each
    deterministic update: to ``d`` for the reduced kinds, to every agent
    for ``pair`` and ``meanfield``. Divergence (non-finite values or any
    magnitude above ``divergence_bound``) truncates the record and sets
    ``diverged_at`` instead of raising.
    """
    if kind not in KINDS:
        raise ParameterError("kind", f"must be one of {KINDS}, got {kind!r}")
    if t_max < 1:
        raise ParameterError("t_max", f"must be >= 1, got {t_max}")
    noise_on = p.noise_sigma > 0
    if noise_on and seed is None:
        seed = 0

    if kind in ("reduced", "saturated", "perturbed"):
        if not isinstance(init, ReducedState):
            raise DimensionError(f"kind {kind!r} needs a ReducedState, got {type(init).__name__}")
        step_map = _perturbed_map(sigma_fn, p.epsilon) if kind == "perturbed" else _REDUCED_KINDS[kind]
        noise = None
        if noise_on:
            spec = NoiseSpec(p.noise_sigma, p.noise_bound, "disagreement", seed)
            noise = draw_noise(spec, make_rng(seed), size=t_max)
        return iterate(step_map, init, p, t_max, noise=noise, kind=kind,
                       divergence_bound=divergence_bound, seed=seed if noise_on else None)

    if kind == "pair":
        if not isinstance(init, PairState):
            raise DimensionError(f"kind 'pair' needs a PairState, got {type(init).__name__}")
        noise = None
        if noise_on:
            spec = NoiseSpec(p.noise_sigma, p.noise_bound, "per-agent", seed)
            noise = draw_noise(spec, make_rng(seed), size=(t_max, 2))
        return _simulate_pair(init, p, t_max, noise, seed if noise_on else None, divergence_bound)

    if not isinstance(init, PopulationState):
        raise DimensionError(f"kind 'meanfield' needs a PopulationState, got {type(init).__name__}")
    return _simulate_meanfield(init, p, t_max, seed, divergence_bound, keep_states)
