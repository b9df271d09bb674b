"""Seeded bounded-Gaussian noise.

All randomness in the package flows through ``make_rng`` so that every
output can name its generator (``PRNG_NAME``) and seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

PRNG_NAME = "numpy.random.Generator(PCG64)"

TARGETS = ("disagreement", "per-agent")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    bound: float = 3.0
    target: str = "disagreement"
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ParameterError("sigma", f"must be finite and >= 0, got {self.sigma}")
        if not (self.bound > 0.0):
            raise ParameterError("bound", f"must be > 0, got {self.bound}")
        if self.target not in TARGETS:
            raise ParameterError("target", f"must be one of {TARGETS}, got {self.target!r}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ParameterError("seed", "must fit in an unsigned 64-bit integer")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Per-point seed: ``seed`` XOR a 64-bit hash of ``index``."""
    return (int(seed) ^ _splitmix64(int(index))) & _MASK64


def draw_noise(spec: NoiseSpec, rng: np.random.Generator, size=None):
    """Draw from N(0, sigma^2) truncated to ``|value| <= bound * sigma``.

    Out-of-bound draws are discarded and redrawn, so the sequence is a
    pure function of the generator state. ``size=None`` returns a float.
    """
    if spec.sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    n = 1 if size is None else int(np.prod(size))
    z = rng.standard_normal(n)
    bad = np.flatnonzero(np.abs(z) > spec.bound)
    while bad.size:
        z[bad] = rng.standard_normal(bad.size)
        bad = bad[np.abs(z[bad]) > spec.bound]
    z *= spec.sigma
    if size is None:
        return float(z[0])
    return z.reshape(size)


def truncated_variance(sigma: float, bound: float) -> float:
    """Exact variance of N(0, sigma^2) truncated symmetrically at ``bound`` sigmas."""
    pdf = math.exp(-0.5 * bound * bound) / math.sqrt(2.0 * math.pi)
    mass = math.erf(bound / math.sqrt(2.0))
    return sigma * sigma * (1.0 - 2.0 * bound * pdf / mass)
