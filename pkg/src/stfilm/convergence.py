"""Refinement studies: time-step refinement of the two sub-solvers and
partition refinement of the split scheme. Each study returns a table of rows
plus the fitted log-log slope."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .basis import NoiseSpectrum
from .config import RunConfig
from .det_solver import DetParams, det_evolve
from .field import Field
from .montecarlo import run_ensemble, supnorm_moment_estimate
from .rng import RngLease
from .stoch_solver import LipschitzCoefficient, StochParams, evolve_batch


@dataclass
class Study:
    name: str
    columns: tuple
    rows: list
    slope: float = math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
        return buf.getvalue()


def loglog_slope(h, err) -> float:
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def det_time_study(dts=(1e-1, 5e-2, 2e-2, 1e-2, 5e-3), r: float = 1.0, T: float = 1.0,
                   theta: float = 1.0) -> Study:
    """Constant data under the absorption ODE u' = -|u|^(r-1) u against its
    exact solution; implicit Euler gives slope 1."""
    u0 = Field.constant(1.0, 1.0, 8)
    if r == 1.0:
        exact = math.exp(-T)
    else:
        exact = (1.0 + (r - 1.0) * T) ** (-1.0 / (r - 1.0))
    rows = []
    for dt in dts:
        u, _ = det_evolve(u0, 0.0, T, DetParams(dt=dt, r=r, theta=theta))
        rows.append((dt, float(np.max(np.abs(u.values - exact)))))
    return Study("det_dt", ("dt", "max_error"), rows,
                 loglog_slope([r_[0] for r_ in rows], [r_[1] for r_ in rows]))


def coupled_increments(seed: int, n_paths: int, n_steps: int, K: int, dt: float, active=None):
    """Fine-grid increments of shape (n_steps, n_paths, 2K+1) for both families."""
    db = np.empty((n_steps, n_paths, 2 * K + 1))
    db1 = np.empty_like(db)
    for p in range(n_paths):
        inc = RngLease(seed, p).increments(0, n_steps, K, dt, active=active)
        db[:, p], db1[:, p] = inc.db, inc.db1
    return db, db1


def _coarsen(a: np.ndarray, factor: int) -> np.ndarray:
    n = a.shape[0]
    return a.reshape((n // factor, factor) + a.shape[1:]).sum(axis=1)


def strong_order_study(w0: Field, spectrum: NoiseSpectrum, T: float,
                       dts=(1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4), dt_ref: float = 1e-5,
                       n_paths: int = 64, seed: int = 0, eps: float = 0.0,
                       f: LipschitzCoefficient = LipschitzCoefficient()) -> Study:
    """Pathwise RMS error at T of Euler-Maruyama on coupled increments: every
    coarse path uses block sums of the reference path's increments."""
    n_ref = round(T / dt_ref)
    if not math.isclose(n_ref * dt_ref, T, rel_tol=1e-9):
        raise ValueError("dt_ref must divide T")
    active = (spectrum.lam != 0.0, spectrum.gamma != 0.0)
    db, db1 = coupled_increments(seed, n_paths, n_ref, spectrum.K, dt_ref, active)
    w_init = np.broadcast_to(w0.values, (n_paths, w0.M))
    ref = evolve_batch(w_init, w0.L, T, StochParams(dt_ref, spectrum, f, eps), db, db1)
    rows = []
    for dt in dts:
        factor = round(dt / dt_ref)
        if not math.isclose(factor * dt_ref, dt, rel_tol=1e-9) or n_ref % factor:
            raise ValueError(f"dt={dt} is not a divisor-compatible multiple of dt_ref")
        w = evolve_batch(w_init, w0.L, T, StochParams(dt, spectrum, f, eps),
                         _coarsen(db, factor), _coarsen(db1, factor))
        err = np.sqrt(np.mean(w0.dx * np.sum((w - ref) ** 2, axis=-1)))
        rows.append((dt, float(err)))
    return Study("stoch_strong", ("dt", "rms_error"), rows,
                 loglog_slope([r[0] for r in rows], [r[1] for r in rows]))


def split_refinement_study(config: RunConfig, Ns=(4, 8, 16), M: int | None = None,
                           p: float = 2.0, workers: int | None = 1) -> Study:
    """E sup_t ||u_N||_{1,2}^p for a sequence of partitions at fixed physics.
    ``slope`` holds the largest ratio (or inverse ratio) between consecutive
    rows, the quantity a stable scheme keeps bounded."""
    rows = []
    for N in Ns:
        cfg = replace(config, horizon=replace(config.horizon, N_split=int(N)),
                      ensemble=replace(config.ensemble, p_list=sorted(set(config.ensemble.p_list) | {p})))
        stats = run_ensemble(cfg, M=M, workers=workers)
        est = supnorm_moment_estimate(stats, p)
        ratio = est.value / rows[-1][1] if rows else 1.0
        rows.append((int(N), est.value, est.se, ratio))
    worst = max(max(r[3], 1.0 / r[3]) for r in rows)
    return Study("split_N", ("N", "sup_h1_moment", "se", "ratio_to_previous"), rows, worst)
