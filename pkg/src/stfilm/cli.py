"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed check.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_noise_spectrum
from .config import load_config
from .convergence import det_time_study, split_refinement_study, strong_order_study
from .errors import ConfigError, SolverError
from .field import Field
from .montecarlo import (ensemble_report, mass_moment_check, mean_mass_check, per_path_csv,
                         run_ensemble)
from .output import write_trajectory
from .rng import RngLease
from .splitting import run_split
from .verify import run_all

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("stfilm")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stfilm", description="Split-step simulator for the "
                                 "stochastic thin-film equation with absorption.")
    ap.add_argument("--version", action="version", version=f"stfilm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="run one split trajectory")
    common(p)
    p.add_argument("--snapshot-stride", type=int, help="write a field snapshot every S substeps")

    p = sub.add_parser("ensemble", help="run an ensemble and write moment statistics")
    common(p)
    p.add_argument("--paths", type=int, help="number of paths (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (default: logical cores)")

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("convergence", help="time-step and partition refinement studies")
    common(p, config_required=False)
    p.add_argument("--paths", type=int, help="paths per ensemble in the partition study")
    p.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    p.add_argument("--study", choices=("det", "stoch", "split", "all"), default="all")
    return ap


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError([f"--seed must be an unsigned 64-bit integer, got {args.seed}"])
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.output.directory = str(args.out)
    if getattr(args, "snapshot_stride", None) is not None:
        if args.snapshot_stride < 0:
            raise ConfigError(["--snapshot-stride must be >= 0"])
        cfg.output.snapshot_stride = args.snapshot_stride
    if getattr(args, "paths", None) is not None:
        if args.paths < 2:
            raise ConfigError(["--paths must be >= 2"])
        cfg.ensemble.M_paths = args.paths
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    u0 = cfg.initial_field(base_dir=args.config.parent)
    stride = cfg.output.snapshot_stride
    traj = run_split(u0, cfg.schedule(), cfg.det_params(), cfg.stoch_params(),
                     RngLease(cfg.master_seed, 0), keep_states=stride > 0)
    man = write_trajectory(traj, cfg, cfg.output.directory, cfg.master_seed, __version__, stride)
    print(f"final mass {man['final']['mass']:.10g}  h1 {man['final']['h1']:.6g}  "
          f"min {man['final']['min']:.6g}")
    print(f"wrote {Path(cfg.output.directory) / 'manifest.json'}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _load(args)
    if cfg.initial_condition.get("kind") == "samples":
        # workers resolve the file relative to the working directory
        cfg.initial_condition["file"] = str((args.config.parent / cfg.initial_condition["file"]).resolve())
    stats = run_ensemble(cfg, workers=args.workers)
    checks = {"mean_mass": mean_mass_check(stats)}
    if len(stats.times) >= 3:
        for p in stats.p_list:
            r = mass_moment_check(stats, p, 0.0)
            checks[f"mass_moment_p{p:g}"] = {"c_fit": r.c_fit, "smallest_passing_c": r.smallest_passing_c,
                                             "pass_at_C0": r.passed}
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(ensemble_report(stats, cfg, cfg.master_seed, checks, __version__))
    (out / "paths.csv").write_text(per_path_csv(stats))
    print(f"{stats.completed}/{stats.M} paths completed; mean mass(T) {stats.mean_mass[-1]:.6g} "
          f"+- {stats.se_mass[-1]:.2g}")
    print(f"wrote {out / 'report.json'}")
    if stats.failures:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def cmd_convergence(args) -> int:
    studies = []
    if args.study in ("det", "all"):
        studies.append(det_time_study())
    if args.study in ("stoch", "all"):
        sp = build_noise_spectrum({"kind": "explicit", "values": {1: 1.0}}, 1)
        w0 = Field.from_function(lambda x: 1.0 + 0.5 * np.cos(x), 2 * math.pi, 32)
        studies.append(strong_order_study(w0, sp, 1.0, seed=args.seed or 0))
    if args.study in ("split", "all"):
        if args.config is None:
            raise ConfigError(["the partition study needs --config"])
        cfg = _load(args)
        studies.append(split_refinement_study(cfg, workers=args.workers))
    out = Path(args.out) if args.out else None
    for s in studies:
        print(f"# {s.name}  slope {s.slope:.4f}")
        print(s.to_csv(), end="")
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{s.name}.csv").write_text(s.to_csv())
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "ensemble": cmd_ensemble, "verify": cmd_verify,
            "convergence": cmd_convergence}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if exc.state is not None and getattr(args, "out", None):
            Path(args.out).mkdir(parents=True, exist_ok=True)
            exc.state.write_snapshot(Path(args.out) / "failure_state.stfm")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
