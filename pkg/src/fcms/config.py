"""Run configuration: baseline defaults <- ``key = value`` file <- CLI flags."""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .core import KINDS, ModelParams, PERTURBATIONS
from .errors import ParameterError
from .noise import NoiseSpec

FORMATS = ("auto", "csv", "json")
ABLATIONS = ("coupling", "persistence", "dissipation", "unresponsive_agents", "memory_blind_incentives")


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple:
    return tuple(int(float(v)) for v in text.split(",") if v.strip())


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text}")
    return int(value)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else _int(text)


@dataclass(frozen=True)
class RunConfig:
    kind: str = "reduced"
    beta: float = 0.5
    gamma: float = 0.1
    eta: float = 0.01
    alpha: tuple = ()
    noise_sigma: float = 0.0
    noise_bound: float = 3.0
    epsilon: float = 0.0
    perturbation: str = "cubic"
    seed: int = 0
    t_max: int | None = None
    s0: float = 0.0
    d0: float = 2.0
    x1: float = 1.0
    x2: float = -1.0
    betas: tuple | None = None
    n: tuple = (100, 1000, 10000, 100000)
    mode: str = "noisy"
    burn_in: int = 1000
    eps_rec: float = 0.36787944117144233
    variant: str = "coupling"
    c: float = 0.0
    radius: float = 1.0
    samples: int = 256
    grid_n: int = 21
    grid_extent: float = 2.0
    out_dir: str = "."
    format: str = "auto"

    def model_params(self) -> ModelParams:
        return ModelParams(beta=self.beta, gamma=self.gamma, eta=self.eta, alpha=self.alpha,
                           noise_sigma=self.noise_sigma, noise_bound=self.noise_bound,
                           epsilon=self.epsilon)

    def noise_spec(self, default_sigma: float = 0.0) -> NoiseSpec:
        sigma = self.noise_sigma if self.noise_sigma > 0 else default_sigma
        return NoiseSpec(sigma=sigma, bound=self.noise_bound, seed=self.seed)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_PARSERS = {
    "kind": str, "beta": float, "gamma": float, "eta": float, "alpha": _floats,
    "noise_sigma": float, "noise_bound": float, "epsilon": float, "perturbation": str,
    "seed": _int, "t_max": _opt_int, "s0": float, "d0": float, "x1": float, "x2": float,
    "betas": _floats, "n": _ints, "mode": str, "burn_in": _int, "eps_rec": float,
    "variant": str, "c": float, "radius": float, "samples": _int, "grid_n": _int,
    "grid_extent": float, "out_dir": str, "format": str,
}

KEYS = tuple(_PARSERS)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ParameterError("config", f"file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError("config", f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError("config", f"{path}:{lineno}: empty key")
        values[key] = value
    return values


def _coerce(key: str, value):
    if key not in _PARSERS:
        raise ParameterError(key, "unknown configuration key")
    if not isinstance(value, str):
        return value
    try:
        return _PARSERS[key](value)
    except ValueError as exc:
        raise ParameterError(key, f"cannot parse {value!r}: {exc}") from None


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional file and flag overrides."""
    values = {}
    if path is not None:
        values.update({k: _coerce(k, v) for k, v in read_config_file(path).items()})
    for key, value in (overrides or {}).items():
        values[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    cfg.model_params()
    NoiseSpec(sigma=cfg.noise_sigma, bound=cfg.noise_bound, seed=cfg.seed)
    if cfg.kind not in KINDS:
        raise ParameterError("kind", f"must be one of {KINDS}, got {cfg.kind!r}")
    if cfg.perturbation not in PERTURBATIONS:
        raise ParameterError("perturbation", f"must be one of {tuple(PERTURBATIONS)}")
    if cfg.format not in FORMATS:
        raise ParameterError("format", f"must be one of {FORMATS}, got {cfg.format!r}")
    if cfg.mode not in ("deterministic", "noisy"):
        raise ParameterError("mode", f"must be 'deterministic' or 'noisy', got {cfg.mode!r}")
    if cfg.variant not in ABLATIONS:
        raise ParameterError("variant", f"must be one of {ABLATIONS}, got {cfg.variant!r}")
    if cfg.t_max is not None and cfg.t_max < 1:
        raise ParameterError("t_max", f"must be >= 1, got {cfg.t_max}")
    if cfg.burn_in < 0:
        raise ParameterError("burn_in", f"must be >= 0, got {cfg.burn_in}")
    if not 0.0 < cfg.eps_rec < 1.0:
        raise ParameterError("eps_rec", f"must lie in (0, 1), got {cfg.eps_rec}")
    if cfg.radius <= 0:
        raise ParameterError("radius", f"must be > 0, got {cfg.radius}")
    if cfg.samples < 1:
        raise ParameterError("samples", f"must be >= 1, got {cfg.samples}")
    if cfg.grid_n < 2:
        raise ParameterError("grid_n", f"must be >= 2, got {cfg.grid_n}")
    if any(v < 2 for v in cfg.n):
        raise ParameterError("n", f"population sizes must be >= 2, got {cfg.n}")
