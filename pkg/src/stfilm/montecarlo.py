"""Ensembles of independent split trajectories and their moment statistics.

Each path p draws its noise from RngLease(master_seed, p), so a path is
reproducible on its own. Per-path summaries are merged with the pairwise
(Chan et al.) mean/variance update, always folded in path-index order, so the
statistics do not depend on the worker count or completion order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import SolverError
from .field import mass, norms
from .rng import RngLease
from .splitting import run_split


@dataclass
class RunningMoments:
    """Count, mean and sum of squared deviations of an array-valued sample."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x) -> "RunningMoments":
        x = np.asarray(x, dtype=float)
        return cls(1, x.copy(), np.zeros_like(x))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return RunningMoments(n, mean, m2)

    @property
    def var(self) -> np.ndarray:
        return self.m2 / (self.n - 1) if self.n > 1 else np.full_like(self.mean, np.nan)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.var / self.n)


def merge_all(items: list[RunningMoments]) -> RunningMoments:
    """Pairwise tree reduction in list order."""
    if not items:
        raise ValueError("nothing to merge")
    while len(items) > 1:
        nxt = [items[i].merge(items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


@dataclass
class PathSummary:
    path: int
    completed: bool
    mass: np.ndarray | None = None       # at the sample times
    h1: np.ndarray | None = None
    sup_h1: float = math.nan             # over every substep of both phases
    min_value: float = math.nan
    error: str = ""


def _run_path(args) -> PathSummary:
    cfg, master_seed, path = args
    u0 = cfg.initial_field()
    try:
        traj = run_split(u0, cfg.schedule(), cfg.det_params(), cfg.stoch_params(),
                         RngLease(master_seed, path))
    except SolverError as exc:
        return PathSummary(path, False, error=str(exc))
    states = traj.handoff_states()
    recs = traj.records()
    return PathSummary(
        path, True,
        mass=np.array([mass(s) for s in states]),
        h1=np.array([norms(s)[2] for s in states]),
        sup_h1=max(r.h1 for r in recs),
        min_value=min(r.min_value for r in recs),
    )


@dataclass
class Estimate:
    value: float
    se: float


@dataclass
class EnsembleStats:
    """Statistics over completed paths at t = 0 and every handoff time."""

    M: int
    completed: int
    times: np.ndarray
    mass0: float
    mean_mass: np.ndarray
    var_mass: np.ndarray
    se_mass: np.ndarray
    p_list: list
    mass_moments: dict          # p -> (mean of mass^p, se) over time samples
    h1_moments: dict            # p -> (mean of h1^p, se)
    sup_h1_moments: dict        # p -> Estimate of E sup_t h1^p
    min_value: float
    failures: list = field(default_factory=list)
    summaries: list = field(default_factory=list)

    @property
    def completion(self) -> float:
        return self.completed / self.M

    def table(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.times):
            row = {"t": float(t), "mean_mass": float(self.mean_mass[i]),
                   "var_mass": float(self.var_mass[i]), "se_mass": float(self.se_mass[i])}
            for p in self.p_list:
                m, s = self.mass_moments[p]
                row[f"mean_mass^{_fmt_p(p)}"] = float(m[i])
                row[f"se_mass^{_fmt_p(p)}"] = float(s[i])
                m, s = self.h1_moments[p]
                row[f"mean_h1^{_fmt_p(p)}"] = float(m[i])
                row[f"se_h1^{_fmt_p(p)}"] = float(s[i])
            rows.append(row)
        return rows


def _fmt_p(p) -> str:
    return str(int(p)) if float(p).is_integer() else repr(float(p))


def summarise(summaries: list[PathSummary], times, mass0: float, p_list) -> EnsembleStats:
    summaries = sorted(summaries, key=lambda s: s.path)
    done = [s for s in summaries if s.completed]
    failures = [(s.path, s.error) for s in summaries if not s.completed]
    if len(done) < 2:
        raise RuntimeError(f"only {len(done)} of {len(summaries)} paths completed")
    p_list = list(p_list)

    def stack(fn):
        return merge_all([RunningMoments.of(fn(s)) for s in done])

    mm = stack(lambda s: s.mass)
    mass_mom, h1_mom, sup_mom = {}, {}, {}
    for p in p_list:
        r = stack(lambda s: s.mass ** p)
        mass_mom[p] = (r.mean, r.se)
        r = stack(lambda s: s.h1 ** p)
        h1_mom[p] = (r.mean, r.se)
        r = stack(lambda s: np.array([s.sup_h1 ** p]))
        sup_mom[p] = Estimate(float(r.mean[0]), float(r.se[0]))
    return EnsembleStats(
        M=len(summaries), completed=len(done), times=np.asarray(times, dtype=float),
        mass0=mass0, mean_mass=mm.mean, var_mass=mm.var, se_mass=mm.se,
        p_list=p_list, mass_moments=mass_mom, h1_moments=h1_mom, sup_h1_moments=sup_mom,
        min_value=min(s.min_value for s in done), failures=failures, summaries=summaries,
    )


def run_ensemble(config: RunConfig, M: int | None = None, master_seed: int | None = None,
                 workers: int | None = 1) -> EnsembleStats:
    """Run M independent split trajectories (paths 0..M-1).

    ``workers`` > 1 uses a process pool; ``None`` means one worker per CPU.
    The result is identical for every worker count.
    """
    M = config.ensemble.M_paths if M is None else int(M)
    seed = config.master_seed if master_seed is None else int(master_seed)
    if M < 2:
        raise ValueError(f"an ensemble needs at least 2 paths, got {M}")
    workers = (os.cpu_count() or 1) if workers is None else int(workers)
    jobs = [(config, seed, p) for p in range(M)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_path, jobs, chunksize=max(1, M // (4 * workers))))
    else:
        summaries = [_run_path(j) for j in jobs]
    s = config.schedule()
    times = [0.0] + [s.endpoint(j) for j in range(1, s.n_intervals + 1)]
    return summarise(summaries, times, mass(config.initial_field()), config.ensemble.p_list)


# --- checks ------------------------------------------------------------------

@dataclass
class MassMomentReport:
    p: float
    C_fit: float
    passed: bool
    smallest_passing_c: float   # smallest C passing the check with the 3 SE slack
    c_fit: float                # smallest C with the slack removed (point estimate)
    completion: float
    rows: list


def mass_moment_check(stats: EnsembleStats, p: float, C_fit: float) -> MassMomentReport:
    """Check E[mass(t)^p] <= exp(C_fit t) mass(0)^p (1 + 3 SE_rel) at every
    sample with t > 0.

    Besides the verdict for ``C_fit`` this returns the smallest constant that
    passes with the slack, and the slack-free value max_t log(ratio) / t,
    which is the consistent estimate of the growth rate (the slack biases the
    former low by about 3 SE_rel / t).
    """
    if len(stats.times) < 3:
        raise ValueError(f"need at least 3 time samples, have {len(stats.times)}")
    if p not in stats.mass_moments:
        raise ValueError(f"moment order {p} was not recorded (have {stats.p_list})")
    mean, se = stats.mass_moments[p]
    base = stats.mass0 ** p
    rows, ok = [], True
    c_slack, c_point = 0.0, 0.0
    for t, m, s in zip(stats.times, mean, se):
        if t <= 0:
            continue
        se_rel = s / m if m > 0 else 0.0
        bound = math.exp(C_fit * t) * base * (1.0 + 3.0 * se_rel)
        passed = bool(m <= bound)
        ok &= passed
        if base > 0 and m > 0:
            c_point = max(c_point, math.log(m / base) / t)
            c_slack = max(c_slack, math.log(m / (base * (1.0 + 3.0 * se_rel))) / t)
        rows.append({"t": float(t), "mean": float(m), "se": float(s), "bound": float(bound),
                     "pass": passed})
    return MassMomentReport(float(p), float(C_fit), bool(ok), c_slack, c_point,
                            stats.completion, rows)


def mean_mass_check(stats: EnsembleStats, n_se: float = 3.0) -> dict:
    """|mean mass(T) - mass(0)| <= n_se * SE at the final sample."""
    dev = abs(float(stats.mean_mass[-1]) - stats.mass0)
    se = float(stats.se_mass[-1])
    return {"deviation": dev, "se": se, "pass": bool(dev <= n_se * se)}


def supnorm_moment_estimate(stats: EnsembleStats, p: float = 2.0) -> Estimate:
    """Monte Carlo mean of sup_t ||u||_{1,2}^p with its standard error."""
    if p not in stats.sup_h1_moments:
        raise ValueError(f"moment order {p} was not recorded (have {stats.p_list})")
    return stats.sup_h1_moments[p]


# --- output --------------------------------------------------------------------

def per_path_csv(stats: EnsembleStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "completed", "final_mass", "sup_h1", "min_value", "error"])
    for s in stats.summaries:
        if s.completed:
            w.writerow([s.path, 1, repr(float(s.mass[-1])), repr(float(s.sup_h1)),
                        repr(float(s.min_value)), ""])
        else:
            w.writerow([s.path, 0, "", "", "", s.error])
    return buf.getvalue()


def ensemble_report(stats: EnsembleStats, config: RunConfig, seed: int, checks: dict | None = None,
                    version: str = "") -> str:
    """Deterministic JSON report (sorted keys, no timestamps)."""
    doc = {
        "config_hash": config.hash(),
        "seed": int(seed),
        "M": stats.M,
        "completed": stats.completed,
        "completion": stats.completion,
        "failures": [{"path": p, "error": e} for p, e in stats.failures],
        "mass0": stats.mass0,
        "min_value": stats.min_value,
        "sup_h1_moments": {_fmt_p(p): {"mean": e.value, "se": e.se}
                           for p, e in stats.sup_h1_moments.items()},
        "table": stats.table(),
        "checks": checks or {},
        "version": version,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
