"""Simulation and stability analysis of feedback-coupled memory systems."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ModelParams,
    PairState,
    PopulationState,
    ReducedState,
    Trajectory,
    global_signal,
    incentive_field,
    meanfield_step,
    pair_step,
    perturbed_step,
    reduced_step,
    saturated_step,
    simulate,
)
from .spectral import (  # noqa: E402
    critical_beta,
    spectral_report,
    stability_criterion,
)

__all__ = [
    "ModelParams", "PairState", "PopulationState", "ReducedState", "Trajectory",
    "global_signal", "incentive_field", "meanfield_step", "pair_step", "perturbed_step",
    "reduced_step", "saturated_step", "simulate", "critical_beta", "spectral_report",
    "stability_criterion",
]
