"""Command-line entry point: ``fcms <subcommand> [--config FILE] [--key value ...]``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path


from . import __version__
from .config import KEYS, RunConfig, parse_config
from .core import PERTURBATIONS, PairState, PopulationState, ReducedState, simulate
from .errors import DivergenceError, FCMSError, NumericalError
from .experiments import (
    ablate_coupling,
    ablate_dissipation,
    ablate_persistence,
    bifurcation_sweep,
    forward_invariance_probe,
    necessity_check,
    phase_portrait,
    scalability_sweep,
)
from .io import (
    EWS_SCHEMA,
    OVERLAY_SCHEMA,
    PHASE_SCHEMA,
    SCALE_SCHEMA,
    SWEEP_SCHEMA,
    TRAJECTORY_SCHEMA,
    emit_csv,
    emit_json,
)
from .noise import PRNG_NAME
from .spectral import spectral_report
from .stochastic import ews_sweep

log = logging.getLogger("fcms")

SUBCOMMANDS = ("simulate", "eigen", "sweep", "ews", "ablate", "invariance", "phase", "scale")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGED = 4

DEFAULT_T_MAX = {
    "simulate": 2000, "sweep": 10_000, "ews": 100_000, "ablate": 2000,
    "invariance": 5000, "phase": 600, "scale": 2000,
}
DEFAULT_BETAS = {"sweep": (0.5, 1.41, 1.55, 1.65), "ews": (0.5, 1.0, 1.41, 1.55)}
DEFAULT_EWS_SIGMA = 0.01


class Outcome:
    """What a subcommand produced: tables, a JSON report and summary flags."""

    def __init__(self):
        self.tables = []          # (name, schema, records)
        self.report = None        # dict for JSON
        self.summary = {}
        self.diverged = False
        self.divergence_is_error = False


def _trajectory_outcome(traj, out: Outcome):
    out.tables.append(("trajectory", TRAJECTORY_SCHEMA, list(traj.records())))
    out.report = {
        "kind": traj.kind,
        "diverged_at": traj.diverged_at,
        "records": list(traj.records()),
    }
    out.summary["diverged_at"] = traj.diverged_at
    out.summary["final_abs_d"] = abs(float(traj.d[-1]))
    out.diverged = traj.diverged


def _cmd_simulate(cfg: RunConfig, t_max: int, out: Outcome):
    p = cfg.model_params()
    if cfg.kind in ("reduced", "saturated", "perturbed"):
        init = ReducedState(cfg.s0, cfg.d0)
    elif cfg.kind == "pair":
        init = PairState(cfg.x1, cfg.x2, cfg.s0)
    else:
        pair = PairState(cfg.x1, cfg.x2, cfg.s0)
        init = PopulationState.from_pair(pair)
    traj = simulate(cfg.kind, init, p, t_max, seed=cfg.seed,
                    sigma_fn=PERTURBATIONS[cfg.perturbation])
    _trajectory_outcome(traj, out)
    out.divergence_is_error = True


def _cmd_eigen(cfg: RunConfig, t_max: int, out: Outcome):
    rep = spectral_report(cfg.model_params())
    out.report = rep.to_dict()
    out.summary.update(rho=rep.rho, beta_c=rep.beta_c, stable=rep.stable)


def _cmd_sweep(cfg: RunConfig, t_max: int, out: Outcome):
    betas = cfg.betas or DEFAULT_BETAS["sweep"]
    res = bifurcation_sweep(cfg.model_params(), betas, t_max, cfg.d0)
    rows = [asdict(r) for r in res.records]
    out.tables.append(("sweep", SWEEP_SCHEMA, rows))
    out.report = {"records": rows}
    out.diverged = any(r.diverged_at is not None for r in res.records)


def _cmd_ews(cfg: RunConfig, t_max: int, out: Outcome):
    betas = cfg.betas or DEFAULT_BETAS["ews"]
    rep = ews_sweep(cfg.model_params(), betas, cfg.noise_spec(DEFAULT_EWS_SIGMA), t_max, cfg.burn_in)
    rows = [{k: getattr(r, k) for k in EWS_SCHEMA} for r in rep.records]
    out.tables.append(("ews", EWS_SCHEMA, rows))
    out.report = {"records": [asdict(r) for r in rep.records], "seed": rep.seed, "prng": rep.prng}


def _cmd_ablate(cfg: RunConfig, t_max: int, out: Outcome):
    p = cfg.model_params()
    init = ReducedState(cfg.s0, cfg.d0)
    if cfg.variant == "coupling":
        traj = ablate_coupling(p, init, t_max)
    elif cfg.variant == "persistence":
        traj = ablate_persistence(p, init, t_max)
    elif cfg.variant == "dissipation":
        traj = ablate_dissipation(p, init, t_max)
        out.summary["rho"] = traj.extra["rho"]
    else:
        res = necessity_check(cfg.variant, p, PairState(cfg.x1, cfg.x2, cfg.s0), t_max, cfg.c)
        traj = res.trajectory
        out.summary["verdict"] = res.verdict
    _trajectory_outcome(traj, out)
    out.report["variant"] = cfg.variant


def _cmd_invariance(cfg: RunConfig, t_max: int, out: Outcome):
    rep = forward_invariance_probe(cfg.model_params(), cfg.radius, cfg.samples, t_max)
    out.report = asdict(rep)
    out.summary.update(bound_ratio=rep.bound_ratio, absorbed_fraction=rep.absorbed_fraction)


def _cmd_phase(cfg: RunConfig, t_max: int, out: Outcome):
    kind = cfg.kind if cfg.kind in ("reduced", "saturated") else "saturated"
    field = phase_portrait(kind, cfg.model_params(), cfg.grid_extent, cfg.grid_n,
                           (cfg.s0, cfg.d0), t_max)
    grid = list(field.rows())
    overlay = [{"t": i, "S": float(s), "d": float(d)} for i, (s, d) in enumerate(field.overlay)]
    out.tables.append(("phase", PHASE_SCHEMA, grid))
    out.tables.append(("phase_overlay", OVERLAY_SCHEMA, overlay))
    out.report = {"kind": kind, "grid": grid, "overlay": overlay}


def _cmd_scale(cfg: RunConfig, t_max: int, out: Outcome):
    sigma = cfg.noise_sigma if cfg.noise_sigma > 0 else DEFAULT_EWS_SIGMA
    res = scalability_sweep(cfg.model_params(), cfg.n, cfg.mode, t_max, cfg.seed, sigma,
                            burn_in=min(cfg.burn_in, t_max // 2))
    rows = list(res.rows())
    out.tables.append(("scale", SCALE_SCHEMA, rows))
    out.report = {"mode": res.mode, "records": rows, "slope": res.slope}
    out.summary.update(slope=res.slope, mode=res.mode, sigma=sigma if res.mode == "noisy" else 0.0)


_COMMANDS = {
    "simulate": _cmd_simulate, "eigen": _cmd_eigen, "sweep": _cmd_sweep, "ews": _cmd_ews,
    "ablate": _cmd_ablate, "invariance": _cmd_invariance, "phase": _cmd_phase, "scale": _cmd_scale,
}


def run(subcommand: str, cfg: RunConfig) -> int:
    """Execute ``subcommand`` and write its data files plus ``<name>.meta.json``."""
    if subcommand not in _COMMANDS:
        log.error("unknown subcommand %r", subcommand)
        return EXIT_CONFIG
    t_max = cfg.t_max if cfg.t_max is not None else DEFAULT_T_MAX.get(subcommand, 2000)
    out = Outcome()
    started = time.perf_counter()
    try:
        _COMMANDS[subcommand](cfg, t_max, out)
    except (DivergenceError, NumericalError) as exc:
        log.error("numerical error: %s", exc)
        return EXIT_NUMERICAL
    except (FCMSError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - started

    out_dir = Path(cfg.out_dir)
    metadata = {
        "tool": "fcms",
        "version": __version__,
        "subcommand": subcommand,
        "config": {**cfg.as_dict(), "t_max": t_max},
        "seed": cfg.seed,
        "prng": PRNG_NAME,
        "diverged": out.diverged,
        "summary": out.summary,
    }
    fmt = cfg.format
    if fmt == "auto":
        fmt = "csv" if out.tables else "json"
    files = []
    if fmt == "csv" and out.tables:
        for name, schema, rows in out.tables:
            files.append(emit_csv(rows, schema, out_dir / f"{name}.csv").name)
    else:
        files.append(emit_json(out.report, out_dir / f"{subcommand}.json", metadata).name)
    emit_json({**metadata, "files": files, "wall_clock_seconds": elapsed},
              out_dir / f"{subcommand}.meta.json")

    if out.diverged and out.divergence_is_error:
        log.warning("trajectory diverged at step %s", out.summary.get("diverged_at"))
        return EXIT_DIVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcms", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="file of 'key = value' lines")
    parser.add_argument("-v", "--verbose", action="store_true")
    for key in KEYS:
        parser.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
    try:
        cfg = parse_config(args.config, overrides)
    except (FCMSError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return run(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
