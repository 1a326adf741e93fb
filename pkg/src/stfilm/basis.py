"""H^2-orthonormal trigonometric basis on the periodic interval [0, L] and
the amplitude spectrum of the two noise families expanded in it.

Basis functions are kept symbolic (amplitude, angular frequency, branch) so
that derivatives are exact; grids get sampled views on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


def _omega(k: int, L: float) -> float:
    return 2.0 * math.pi * k / L


@dataclass(frozen=True)
class SpectralBasis:
    """Modes k = -K..K of the cosine/constant/sine family on [0, L].

    k > 0 uses the cosine branch, k < 0 the sine branch with the signed
    frequency 2*pi*k/L, and k = 0 the constant c_0 / sqrt(2).
    """

    L: float
    K: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"domain length must be positive, got {self.L!r}")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError(f"mode cutoff must be a non-negative integer, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def n_modes(self) -> int:
        return 2 * self.K + 1

    def index(self, k: int) -> int:
        """Position of mode ``k`` in arrays ordered -K..K."""
        self._check_mode(k)
        return int(k) + self.K

    def _check_mode(self, k: int) -> None:
        if abs(k) > self.K:
            raise ValueError(f"mode {k} outside cutoff K={self.K}")

    def omega(self, k: int) -> float:
        return _omega(k, self.L)

    def coefficient(self, k: int) -> float:
        """Normalisation c_k = sqrt(2 / (L (1 + w^2 + w^4)))."""
        w = self.omega(k)
        w2 = w * w
        return math.sqrt(2.0 / (self.L * (1.0 + w2 + w2 * w2)))

    def amplitude(self, k: int) -> float:
        c = self.coefficient(k)
        return c / math.sqrt(2.0) if k == 0 else c

    def branch(self, k: int) -> str:
        if k > 0:
            return "cos"
        if k < 0:
            return "sin"
        return "const"

    def eval(self, k: int, x):
        """Closed-form value of Psi_k at ``x`` (scalar or array)."""
        self._check_mode(k)
        a = self.amplitude(k)
        x = np.asarray(x, dtype=float)
        if k == 0:
            out = np.full_like(x, a)
        elif k > 0:
            # reduce modulo L so that x = L reproduces x = 0 bit for bit
            out = a * np.cos(self.omega(k) * np.mod(x, self.L))
        else:
            out = a * np.sin(self.omega(k) * np.mod(x, self.L))
        return float(out) if out.ndim == 0 else out

    def derivative(self, k: int, order: int) -> tuple[float, int]:
        """(coefficient, partner) with d^order Psi_k = coefficient * Psi_partner."""
        self._check_mode(k)
        if order not in (1, 2, 3, 4):
            raise ValueError(f"derivative order must be 1..4, got {order!r}")
        if k == 0:
            return 0.0, 0
        w = self.omega(k)
        if order == 1:
            return w, -k
        if order == 2:
            return -(w * w), k
        if order == 3:
            return -(w * w * w), -k
        return w * w * w * w, k

    def sample(self, x, order: int = 0) -> np.ndarray:
        """Array of shape (2K+1, len(x)) holding d^order Psi_k(x) for k = -K..K."""
        x = np.asarray(x, dtype=float)
        rows = []
        for k in self.modes:
            k = int(k)
            if order == 0:
                rows.append(np.broadcast_to(self.eval(k, x), x.shape))
            else:
                coef, partner = self.derivative(k, order)
                rows.append(coef * np.broadcast_to(self.eval(partner, x), x.shape))
        return np.array(rows, dtype=float)

    def gram_h2(self, n_points: int = 4096) -> np.ndarray:
        """H^2 Gram matrix by the periodic rectangle rule on ``n_points`` nodes."""
        x = np.arange(n_points) * (self.L / n_points)
        h = self.L / n_points
        g = np.zeros((self.n_modes, self.n_modes))
        for order in (0, 1, 2):
            s = self.sample(x, order)
            g += h * (s @ s.T)
        return g


def build_basis(L: float, K: int) -> SpectralBasis:
    return SpectralBasis(float(L), K)


def eval_basis(basis: SpectralBasis, k: int, x):
    return basis.eval(k, x)


def basis_derivative(basis: SpectralBasis, k: int, order: int) -> tuple[float, int]:
    return basis.derivative(k, order)


class ColoringError(ValueError):
    """Amplitudes that violate the summability (coloring) requirement."""


@dataclass(frozen=True)
class NoiseSpectrum:
    """Amplitudes lambda_k (transport noise) and gamma_k (Ito noise), k = -K..K."""

    K: int
    lam: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = 2 * self.K + 1
        lam = np.array(self.lam, dtype=float).reshape(-1)
        gamma = np.array(self.gamma, dtype=float).reshape(-1)
        if lam.shape != (n,) or gamma.shape != (n,):
            raise ValueError(f"spectrum arrays must have length 2K+1={n}")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(gamma))):
            raise ValueError("spectrum amplitudes must be finite")
        if np.any(lam < 0):
            raise ValueError("transport amplitudes lambda_k must be non-negative")
        lam.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def zero(cls, K: int = 0) -> "NoiseSpectrum":
        return cls(K, np.zeros(2 * K + 1), np.zeros(2 * K + 1))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def total(self) -> float:
        """Truncated coloring sum over |k| <= K of lambda_k^2 + gamma_k^2."""
        return float(np.sum(self.lam**2) + np.sum(self.gamma**2))

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.lam) or np.any(self.gamma))

    def lambda_of(self, k: int) -> float:
        return float(self.lam[k + self.K])

    def gamma_of(self, k: int) -> float:
        return float(self.gamma[k + self.K])


def _family_values(family, K: int, name: str, nonneg: bool) -> np.ndarray:
    out = np.zeros(2 * K + 1)
    if family is None:
        return out
    if isinstance(family, Mapping) and "kind" not in family:
        family = {"kind": "explicit", "values": family}
    if not isinstance(family, Mapping):
        raise ValueError(f"{name}: family must be a mapping, got {type(family).__name__}")
    kind = family.get("kind")
    if kind == "explicit":
        for key, val in dict(family.get("values", {})).items():
            k = int(key)
            if abs(k) > K:
                raise ValueError(f"{name}: mode {k} outside cutoff K={K}")
            val = float(val)
            if nonneg and val < 0:
                raise ValueError(f"{name}: amplitude for mode {k} is negative ({val})")
            out[k + K] = val
        return out
    if kind == "power_law":
        a = float(family.get("a", 1.0))
        s = float(family["s"])
        if nonneg and a < 0:
            raise ValueError(f"{name}: power-law prefactor a must be >= 0, got {a}")
        if s <= 0.5:
            raise ColoringError(
                f"{name}: power-law exponent s={s} <= 1/2, so the sum of squared "
                "amplitudes over all modes diverges (coloring condition fails)"
            )
        ks = np.arange(-K, K + 1)
        return a * (1.0 + np.abs(ks)) ** (-s)
    raise ValueError(f"{name}: unknown spectrum family {kind!r}")


def build_noise_spectrum(family, K: int, gamma_family=None) -> NoiseSpectrum:
    """Spectrum from family descriptions.

    A family is ``None`` (all zero), ``{"kind": "explicit", "values": {k: v}}``
    (a bare ``{k: v}`` mapping is accepted too) or
    ``{"kind": "power_law", "a": a, "s": s}`` giving a * (1 + |k|)^-s.
    """
    if int(K) != K or K < 0:
        raise ValueError(f"mode cutoff must be a non-negative integer, got {K!r}")
    K = int(K)
    lam = _family_values(family, K, "lambda", nonneg=True)
    gamma = _family_values(gamma_family, K, "gamma", nonneg=False)
    return NoiseSpectrum(K, lam, gamma)
