"""Output files of a single trajectory: one diagnostics CSV per phase and
interval, optional binary snapshots, and a JSON manifest that is enough to
reproduce the run."""
from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig
from .field import Field, diagnostics_csv, mass, norms
from .splitting import SplitTrajectory


def diag_name(j: int, phase: str) -> str:
    return f"diag_j{j:04d}_{phase}.csv"


def snapshot_name(j: int, phase: str, step: int) -> str:
    return f"snap_j{j:04d}_{phase}_{step:06d}.stfm"


def write_trajectory(traj: SplitTrajectory, cfg: RunConfig, out_dir, seed: int,
                     version: str, snapshot_stride: int = 0) -> dict:
    """Write diagnostics (and snapshots every ``snapshot_stride`` substeps,
    which requires states to have been kept) and return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = traj.schedule
    intervals = []
    for seg in traj.segments():
        name = diag_name(seg.interval, seg.phase)
        (out / name).write_text(diagnostics_csv(seg.records))
        snaps = []
        if snapshot_stride > 0:
            n = len(seg.states)
            for i in list(range(0, n, snapshot_stride)) + ([n - 1] if (n - 1) % snapshot_stride else []):
                sname = snapshot_name(seg.interval, seg.phase, i)
                Field(seg.states[i], traj.u0.L).write_snapshot(out / sname)
                snaps.append(sname)
        intervals.append({"interval": seg.interval, "phase": seg.phase, "t0": seg.t0, "t1": seg.t1,
                          "diagnostics": name, "snapshots": snaps})
    final = traj.final
    manifest = {
        "version": version,
        "seed": int(seed),
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "schedule": {"T": s.T, "N": s.N, "delta": s.delta, "intervals": s.intervals},
        "files": intervals,
        "final": {"mass": mass(final), "h1": norms(final)[2], "min": float(final.values.min())},
        "initial": {"mass": mass(traj.u0), "h1": norms(traj.u0)[2]},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    final.to_csv(out / "final.csv")
    return manifest
