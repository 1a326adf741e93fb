"""Built-in invariant checks. Hermetic (no files, no network) and quick
enough to run on every install; ``run_all`` returns one result per check."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis, build_noise_spectrum
from .det_solver import DetParams, det_evolve, det_step
from .field import Field, mass
from .rng import RngLease
from .splitting import make_schedule, run_split, unsplit_reference
from .stoch_solver import LipschitzCoefficient, StochParams, evolve_batch, stoch_evolve
from .convergence import coupled_increments


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def check_orthonormality(K: int = 8, n_points: int = 4096, tol: float = 1e-8):
    b = SpectralBasis(1.0, K)
    err = float(np.max(np.abs(b.gram_h2(n_points) - np.eye(b.n_modes))))
    return err < tol, f"max |G - I| = {err:.2e}"


def check_derivatives(K: int = 8):
    b = SpectralBasis(2.0, K)
    bad = 0
    for k in range(-K, K + 1):
        for order in range(1, 5):
            coef, partner = b.derivative(k, order)
            c1, p1 = b.derivative(k, 1)
            if order == 2 and k != 0:
                c2, p2 = b.derivative(p1, 1)
                bad += (c1 * c2, p2) != (coef, partner)
            w = b.omega(k)
            expect = {1: (w, -k), 2: (-w * w, k), 3: (-w * w * w, -k), 4: (w * w * w * w, k)}[order]
            if k == 0:
                expect = (0.0, 0)
            bad += (coef, partner) != expect
    return bad == 0, f"{bad} mismatches"


def check_det_ode(r: float, dt: float = 1e-4, tol: float = 1e-4):
    u, _ = det_evolve(Field.constant(1.0, 1.0, 8), 0.0, 1.0, DetParams(dt=dt, r=r))
    exact = math.exp(-1.0) if r == 1.0 else (1.0 + (r - 1.0)) ** (-1.0 / (r - 1.0))
    err = float(np.max(np.abs(u.values - exact)))
    return err < tol, f"r={r}: |u(1) - exact| = {err:.2e}"


def check_det_mass(n: int = 10, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n):
        x = np.arange(64) / 64
        a = rng.uniform(0, 0.3, 3)
        ph = rng.uniform(0, 2 * np.pi, 3)
        vals = 0.5 + sum(a[m] * np.cos(2 * np.pi * (m + 1) * x + ph[m]) for m in range(3))
        u = Field(vals, 1.0)
        p = DetParams(dt=1e-4, r=1.0 + rng.uniform(0, 2))
        for _ in range(5):
            nxt = det_step(u, p)
            worst = max(worst, mass(nxt) - mass(u))
            u = nxt
    return worst <= 1e-12, f"max mass increase per step {worst:.2e}"


def check_stoch_mass(n_paths: int = 5):
    L, M = 2 * math.pi, 32
    sp = build_noise_spectrum({"kind": "power_law", "a": 0.5, "s": 1.0}, 3)
    w0 = Field.from_function(lambda x: 1.0 + 0.3 * np.sin(x), L, M)
    p = StochParams(dt=1e-3, spectrum=sp, eps=0.01)
    worst = 0.0
    for path in range(n_paths):
        w, _ = stoch_evolve(w0, 0.0, 0.2, p, RngLease(7, path))
        worst = max(worst, abs(mass(w) - mass(w0)))
    return worst <= 1e-10, f"max |mass drift| {worst:.2e} over {n_paths} paths"


def check_gbm_mean(n_paths: int = 400, seed: int = 11):
    # constant data, k=0 multiplicative noise: each path is a scalar GBM with unit mean
    sp = build_noise_spectrum(None, 0, {"kind": "explicit", "values": {0: 1.0}})
    f = LipschitzCoefficient("linear", 0.5)
    L, M, T, dt = 1.0, 8, 1.0, 1e-3
    n = round(T / dt)
    db, db1 = coupled_increments(seed, n_paths, n, 0, dt, (sp.lam != 0, sp.gamma != 0))
    w = evolve_batch(np.ones((n_paths, M)), L, T, StochParams(dt, sp, f), db, db1)
    m = w.mean(axis=1) * L
    dev = abs(m.mean() - 1.0)
    se = m.std(ddof=1) / math.sqrt(n_paths)
    return dev <= 3 * se, f"|mean mass - 1| = {dev:.3g}, 3 SE = {3 * se:.3g}"


def check_split_consistency():
    u0 = Field.from_function(lambda x: 0.5 + 0.3 * np.cos(2 * np.pi * x), 1.0, 32)
    dp = DetParams(dt=1e-4, r=1.0)
    s = make_schedule(0.005, 4)
    traj = run_split(u0, s, dp, StochParams(dt=1e-3), RngLease(0))
    ref = unsplit_reference(u0, s, dp)
    err = max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(traj.handoff_states(), ref))
    return err <= 1e-10, f"max handoff deviation {err:.2e}"


CHECKS = (
    ("basis orthonormality", check_orthonormality),
    ("basis derivative identities", check_derivatives),
    ("absorption ODE r=1", lambda: check_det_ode(1.0)),
    ("absorption ODE r=2", lambda: check_det_ode(2.0)),
    ("deterministic mass monotonicity", check_det_mass),
    ("stochastic mass conservation", check_stoch_mass),
    ("GBM mean mass", check_gbm_mean),
    ("splitting consistency", check_split_consistency),
)


def run_all() -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:   # a crashing check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return out
