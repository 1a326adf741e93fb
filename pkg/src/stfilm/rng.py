"""Reproducible Wiener increments.

Every (master_seed, path, interval, family, mode) tuple owns its own Philox
stream, keyed through ``numpy.random.SeedSequence``; the position inside the
stream is the substep index. A trajectory is therefore fully determined by
its lease, and changing the mode cutoff K leaves the increments of the
surviving modes untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TRANSPORT = 0   # beta^k, multiplies lambda_k
ITO = 1         # beta_1^k, multiplies gamma_k


def _mode_key(k: int) -> int:
    # zig-zag so that negative modes map to non-negative spawn keys
    return 2 * k if k >= 0 else -2 * k - 1


def substream(master_seed: int, path: int, interval: int, family: int, k: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=(int(path), int(interval), int(family), _mode_key(int(k))))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class WienerIncrements:
    """Increments of beta^k (``db``) and beta_1^k (``db1``) for modes -K..K.

    Arrays have shape (n_steps, 2K+1); indexing with an integer returns the
    single-substep increments as 1-D arrays.
    """

    db: np.ndarray
    db1: np.ndarray
    dt: float
    K: int
    provenance: tuple = ()

    def __post_init__(self):
        db = np.asarray(self.db, dtype=float)
        db1 = np.asarray(self.db1, dtype=float)
        if db.shape != db1.shape:
            raise ValueError("increment families must have the same shape")
        if db.shape[-1] != 2 * self.K + 1:
            raise ValueError(f"increments cover {db.shape[-1]} modes, cutoff K={self.K} needs {2 * self.K + 1}")
        object.__setattr__(self, "db", db)
        object.__setattr__(self, "db1", db1)

    @property
    def n_steps(self) -> int:
        return self.db.shape[0] if self.db.ndim == 2 else 1

    def __getitem__(self, n: int) -> "WienerIncrements":
        if self.db.ndim != 2:
            raise TypeError("single-step increments cannot be indexed")
        return WienerIncrements(self.db[n], self.db1[n], self.dt, self.K, self.provenance + (n,))

    @classmethod
    def zeros(cls, n_steps: int, K: int, dt: float) -> "WienerIncrements":
        z = np.zeros((n_steps, 2 * K + 1))
        return cls(z, z.copy(), dt, K)

    def coarsen(self, factor: int) -> "WienerIncrements":
        """Sum blocks of ``factor`` consecutive increments (coupled coarse path)."""
        n = self.n_steps
        if factor < 1 or n % factor:
            raise ValueError(f"cannot coarsen {n} steps by {factor}")
        shape = (n // factor, factor) + self.db.shape[1:]
        return WienerIncrements(self.db.reshape(shape).sum(axis=1),
                                self.db1.reshape(shape).sum(axis=1),
                                self.dt * factor, self.K, self.provenance)


@dataclass(frozen=True)
class RngLease:
    """The random-number budget of one trajectory."""

    master_seed: int
    path: int = 0

    def increments(self, interval: int, n_steps: int, K: int, dt: float,
                   active=None) -> WienerIncrements:
        """Increments for one interval. ``active`` is an optional pair of boolean
        masks over the modes; inactive columns are left at zero without touching
        their streams (used to skip modes whose amplitude vanishes)."""
        sq = math.sqrt(dt)
        db = np.zeros((n_steps, 2 * K + 1))
        db1 = np.zeros((n_steps, 2 * K + 1))
        for j, k in enumerate(range(-K, K + 1)):
            if active is None or active[0][j]:
                db[:, j] = substream(self.master_seed, self.path, interval, TRANSPORT, k).standard_normal(n_steps)
            if active is None or active[1][j]:
                db1[:, j] = substream(self.master_seed, self.path, interval, ITO, k).standard_normal(n_steps)
        return WienerIncrements(db * sq, db1 * sq, dt, K,
                                (self.master_seed, self.path, interval))
