"""Stochastic sub-dynamics in Ito form, advanced by explicit Euler-Maruyama:

    dw = [ 1/2 sum_k lambda_k^2 d_x(Psi_k d_x(Psi_k w)) + eps d_xx w ] dt
         + sum_k lambda_k d_x(Psi_k w) dbeta^k + sum_k gamma_k Psi_k f(w) dbeta_1^k

The first drift term is the Stratonovich-to-Ito correction of the transport
noise. All d_x are the centered difference D1 (the same one used in the noise
term, so the correction matches the discrete transport operator), and both
the drift and the transport noise are discrete divergences.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .basis import NoiseSpectrum, SpectralBasis
from .det_solver import substeps
from .errors import SolverError
from .field import Field, d1, d2, diagnose, grid, shift
from .rng import RngLease, WienerIncrements


@dataclass(frozen=True)
class LipschitzCoefficient:
    """f(u) = c u ("linear") or f(u) = c u / (1 + |u|) ("saturating")."""

    kind: str = "linear"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "saturating"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"Lipschitz constant must be finite and >= 0, got {self.c}")

    @property
    def lipschitz_constant(self) -> float:
        return self.c

    def value(self, u):
        u = np.asarray(u, dtype=float)
        out = self.c * u if self.kind == "linear" else self.c * u / (1.0 + np.abs(u))
        return float(out) if out.ndim == 0 else out

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            out = np.full_like(u, self.c)
        else:
            out = self.c / (1.0 + np.abs(u)) ** 2
        return float(out) if out.ndim == 0 else out

    __call__ = value


@dataclass(frozen=True)
class StochParams:
    dt: float
    spectrum: NoiseSpectrum = field(default_factory=NoiseSpectrum.zero)
    f: LipschitzCoefficient = field(default_factory=LipschitzCoefficient)
    eps: float = 0.0
    c_stab: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.eps >= 0):
            raise ValueError(f"viscosity eps must be >= 0, got {self.eps}")

    @property
    def is_identity(self) -> bool:
        return self.eps == 0 and self.spectrum.is_zero


# --- literal per-mode operators -------------------------------------------

def _check_cutoffs(basis: SpectralBasis, spectrum: NoiseSpectrum, inc: WienerIncrements | None = None):
    if basis.K != spectrum.K:
        raise ValueError(f"basis cutoff K={basis.K} does not match spectrum cutoff K={spectrum.K}")
    if inc is not None and inc.K != spectrum.K:
        raise ValueError(f"increments cutoff K={inc.K} does not match spectrum cutoff K={spectrum.K}")


def _drift_values(w: Field, basis: SpectralBasis, spectrum: NoiseSpectrum, eps: float) -> np.ndarray:
    _check_cutoffs(basis, spectrum)
    x, dx, v = w.x, w.dx, w.values
    acc = np.zeros_like(v)
    for k in spectrum.modes:
        lam = spectrum.lambda_of(int(k))
        if lam == 0.0:
            continue
        psi = basis.eval(int(k), x)
        acc += lam * lam * d1(psi * d1(psi * v, dx), dx)
    return 0.5 * acc + eps * d2(v, dx)


def drift_A_eps(w: Field, basis: SpectralBasis, spectrum: NoiseSpectrum, eps: float) -> Field:
    """1/2 sum_k lambda_k^2 D1(Psi_k D1(Psi_k w)) + eps D2 w."""
    return Field(_drift_values(w, basis, spectrum, eps), w.L)


def apply_noise(w: Field, basis: SpectralBasis, spectrum: NoiseSpectrum,
                f: LipschitzCoefficient, inc: WienerIncrements) -> Field:
    """sum_k lambda_k D1(Psi_k w) db^k + sum_k gamma_k Psi_k f(w) db_1^k for one substep."""
    return Field(_noise_values(w, basis, spectrum, f, inc), w.L)


def _noise_values(w, basis, spectrum, f, inc) -> np.ndarray:
    _check_cutoffs(basis, spectrum, inc)
    if inc.db.ndim != 1:
        raise ValueError("apply_noise takes the increments of a single substep")
    x, dx, v = w.x, w.dx, w.values
    fv = f.value(v)
    out = np.zeros_like(v)
    for j, k in enumerate(spectrum.modes):
        psi = basis.eval(int(k), x)
        lam, gam = spectrum.lam[j], spectrum.gamma[j]
        if lam != 0.0:
            out += lam * inc.db[j] * d1(psi * v, dx)
        if gam != 0.0:
            out += gam * inc.db1[j] * psi * fv
    return out


def stoch_step(w: Field, p: StochParams, inc: WienerIncrements,
               basis: SpectralBasis | None = None) -> Field:
    """One Euler-Maruyama step w + dt A(w) + B(w) dW."""
    if not math.isclose(inc.dt, p.dt, rel_tol=1e-12):
        raise ValueError(f"increments were drawn for dt={inc.dt}, parameters say dt={p.dt}")
    basis = basis or SpectralBasis(w.L, p.spectrum.K)
    with np.errstate(over="ignore", invalid="ignore"):
        out = (w.values + p.dt * _drift_values(w, basis, p.spectrum, p.eps)
               + _noise_values(w, basis, p.spectrum, p.f, inc))
    if not np.all(np.isfinite(out)):
        raise SolverError("Euler-Maruyama step produced non-finite values", state=w)
    return Field(out, w.L)


# --- precomputed operator used by the time loops --------------------------

@lru_cache(maxsize=64)
def _sampled_basis(L: float, K: int, M: int) -> np.ndarray:
    s = SpectralBasis(L, K).sample(grid(L, M))
    s.setflags(write=False)
    return s


class StochOperator:
    """Grid-specific form of the Ito drift and noise.

    The drift is linear in w and collapses to a five-point stencil with
    offsets -2, 0, +2 (correction term) and -1, 0, +1 (viscosity). Arrays may
    carry leading batch axes; the grid is always the last axis.
    """

    def __init__(self, L: float, M: int, spectrum: NoiseSpectrum, eps: float,
                 f: LipschitzCoefficient):
        self.L, self.M, self.dx = float(L), int(M), L / M
        self.spectrum, self.eps, self.f = spectrum, float(eps), f
        psi = _sampled_basis(self.L, spectrum.K, self.M)
        self.lam_psi = spectrum.lam[:, None] * psi
        self.gam_psi = spectrum.gamma[:, None] * psi
        self.active = (spectrum.lam != 0.0, spectrum.gamma != 0.0)
        self.has_transport = bool(self.active[0].any())
        self.has_ito = bool(self.active[1].any())

        dx = self.dx
        cm2 = np.zeros(self.M)
        c0 = np.zeros(self.M)
        cp2 = np.zeros(self.M)
        for j in np.flatnonzero(self.active[0]):
            ps = psi[j]
            l2 = spectrum.lam[j] ** 2
            cp2 += l2 * shift(ps, 1) * shift(ps, 2)
            c0 -= l2 * (shift(ps, 1) + shift(ps, -1)) * ps
            cm2 += l2 * shift(ps, -1) * shift(ps, -2)
        scale = 0.5 / (4.0 * dx * dx)
        self.c_m2, self.c_0, self.c_p2 = cm2 * scale, c0 * scale, cp2 * scale
        self.visc = self.eps / (dx * dx)
        self.max_rate = self.eps + float(np.sum(spectrum.lam**2 * np.max(psi**2, axis=1)))

    def stable_dt(self, c_stab: float) -> float:
        if self.max_rate <= 0:
            return math.inf
        return c_stab * self.dx**2 / self.max_rate

    def drift(self, w: np.ndarray) -> np.ndarray:
        out = self.c_0 * w
        if self.has_transport:
            out += self.c_p2 * shift(w, 2) + self.c_m2 * shift(w, -2)
        if self.visc:
            out += self.visc * (shift(w, 1) - 2.0 * w + shift(w, -1))
        return out

    def noise_fields(self, inc_db: np.ndarray, inc_db1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """sum_k lambda_k Psi_k db^k and sum_k gamma_k Psi_k db_1^k for a block of increments."""
        return inc_db @ self.lam_psi, inc_db1 @ self.gam_psi

    def step(self, w: np.ndarray, dt: float, xi: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        out = w + dt * self.drift(w)
        if self.has_transport:
            out += d1(xi * w, self.dx)
        if self.has_ito:
            out += zeta * self.f.value(w)
        return out


def stoch_evolve(w0: Field, t0: float, t1: float, p: StochParams, noise, *,
                 interval: int = 0, keep_states: bool = False, r_threshold: float = 0.0):
    """Repeated Euler-Maruyama steps from t0 to t1.

    ``noise`` is either an RngLease (increments are drawn for ``interval``)
    or a WienerIncrements block with exactly one row per substep. Returns
    ``(w1, records)`` with a DiagnosticsRecord per substep (first at t0), plus
    the array of states when ``keep_states`` is set.
    """
    n, dt = substeps(t0, t1, p.dt)
    op = StochOperator(w0.L, w0.M, p.spectrum, p.eps, p.f)
    cap = op.stable_dt(p.c_stab)
    if isinstance(noise, WienerIncrements):
        if noise.K != p.spectrum.K:
            raise ValueError(f"increments cutoff K={noise.K} does not match spectrum cutoff K={p.spectrum.K}")
        if noise.n_steps != n or not math.isclose(noise.dt, dt, rel_tol=1e-9):
            raise ValueError(f"increment block has {noise.n_steps} steps of {noise.dt}, "
                             f"need {n} steps of {dt}")
        if dt > cap:
            warnings.warn(f"substep {dt:.3g} exceeds the explicit stability bound {cap:.3g}",
                          RuntimeWarning, stacklevel=2)
        inc = noise
    else:
        if dt > cap:
            n = math.ceil((t1 - t0) / cap)
            dt = (t1 - t0) / n
            warnings.warn(f"substep reduced to {dt:.3g} by the explicit stability bound",
                          RuntimeWarning, stacklevel=2)
        if op.has_transport or op.has_ito:
            inc = noise.increments(interval, n, p.spectrum.K, dt, active=op.active)
        else:
            inc = None

    if inc is not None:
        xi, zeta = op.noise_fields(inc.db, inc.db1)
    else:
        xi = zeta = np.zeros((n, w0.M))

    w = w0.values
    records = [diagnose(w0, t0, r_threshold=r_threshold)]
    states = [w] if keep_states else None
    for i in range(n):
        t = t0 + (i + 1) * dt if i < n - 1 else t1
        with np.errstate(over="ignore", invalid="ignore"):
            new = op.step(w, dt, xi[i], zeta[i])
        if not np.all(np.isfinite(new)):
            raise SolverError("Euler-Maruyama step produced non-finite values",
                              t=t, state=Field(w, w0.L))
        w = new
        f = Field(w, w0.L)
        records.append(diagnose(f, t, r_threshold=r_threshold))
        if keep_states:
            states.append(f.values)
    out = Field(w, w0.L)
    if keep_states:
        return out, records, np.array(states)
    return out, records


def evolve_batch(w0: np.ndarray, L: float, T: float, p: StochParams,
                 inc_db: np.ndarray, inc_db1: np.ndarray) -> np.ndarray:
    """Advance a stack of paths, shape (P, M), over [0, T] with given increments.

    ``inc_db`` and ``inc_db1`` have shape (n_steps, P, 2K+1); the substep is
    T / n_steps. Used for coupled-refinement studies.
    """
    w = np.array(w0, dtype=float)
    n = inc_db.shape[0]
    dt = T / n
    op = StochOperator(L, w.shape[-1], p.spectrum, p.eps, p.f)
    for i in range(n):
        xi, zeta = op.noise_fields(inc_db[i], inc_db1[i])
        w = op.step(w, dt, xi, zeta)
    if not np.all(np.isfinite(w)):
        raise SolverError("batched Euler-Maruyama run produced non-finite values")
    return w
