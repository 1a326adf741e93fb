"""Grid functions on the uniform periodic grid x_i = i*L/M, i = 0..M-1."""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"STFM"
SNAPSHOT_VERSION = 1
_SNAPSHOT_HEADER = struct.Struct("<4sHId")


# Array kernels act on the last axis so that a stack of paths, shape (P, M),
# goes through the same code as a single field.

def shift(a: np.ndarray, k: int) -> np.ndarray:
    """Periodic shift along the last axis: shift(a, k)[..., i] == a[..., (i + k) % M]."""
    k %= a.shape[-1]
    if k == 0:
        return a.copy()
    return np.concatenate((a[..., k:], a[..., :k]), axis=-1)


def d1(a: np.ndarray, dx: float) -> np.ndarray:
    return (shift(a, 1) - shift(a, -1)) / (2.0 * dx)


def d2(a: np.ndarray, dx: float) -> np.ndarray:
    return (shift(a, 1) - 2.0 * a + shift(a, -1)) / (dx * dx)


def d3(a: np.ndarray, dx: float) -> np.ndarray:
    p1, m1 = shift(a, 1), shift(a, -1)
    p2, m2 = shift(a, 2), shift(a, -2)
    return ((p2 - m2) - 2.0 * (p1 - m1)) / (2.0 * dx**3)


def d4(a: np.ndarray, dx: float) -> np.ndarray:
    p1, m1 = shift(a, 1), shift(a, -1)
    p2, m2 = shift(a, 2), shift(a, -2)
    # grouped so that constants map to exactly zero
    return (((p2 + m2) - 2.0 * a) - 4.0 * ((p1 + m1) - 2.0 * a)) / dx**4


def forward_diff(a: np.ndarray, dx: float) -> np.ndarray:
    """(a[i+1] - a[i]) / dx, located at the half node i + 1/2."""
    return (shift(a, 1) - a) / dx


_STENCILS = {1: d1, 2: d2, 3: d3, 4: d4}


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a function on [0, L) with periodic wrap.

    ``values`` is copied and frozen; every operation returns a new Field.
    """

    values: np.ndarray
    L: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size < 8 or v.size % 2:
            raise ValueError(f"grid size must be even and >= 8, got {v.size}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"domain length must be positive, got {self.L!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "L", float(self.L))

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def x(self) -> np.ndarray:
        return grid(self.L, self.M)

    @classmethod
    def from_function(cls, func, L: float, M: int) -> "Field":
        return cls(func(grid(L, M)), L)

    @classmethod
    def constant(cls, c: float, L: float, M: int) -> "Field":
        return cls(np.full(M, float(c)), L)

    def with_values(self, values) -> "Field":
        return Field(values, self.L)

    def __eq__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        return self.L == other.L and np.array_equal(self.values, other.values)

    __hash__ = None

    # serialisation

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "value"])
        for xi, vi in zip(self.x, self.values):
            w.writerow([repr(float(xi)), repr(float(vi))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path, L: float | None = None) -> "Field":
        text = _read_text(text_or_path)
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] and rows[0][0].strip() == "x":
            rows = rows[1:]
        rows = [r for r in rows if r]
        xs = np.array([float(r[0]) for r in rows])
        vals = np.array([float(r[1]) for r in rows])
        if L is None:
            if len(xs) < 2:
                raise ValueError("cannot infer domain length from fewer than two rows")
            L = (xs[1] - xs[0]) * len(xs)
        return cls(vals, L)

    def to_snapshot(self) -> bytes:
        header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.M, self.L)
        return header + self.values.astype("<f8").tobytes()

    @classmethod
    def from_snapshot(cls, data: bytes) -> "Field":
        if len(data) < _SNAPSHOT_HEADER.size:
            raise ValueError("snapshot truncated before header end")
        magic, version, M, L = _SNAPSHOT_HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        payload = data[_SNAPSHOT_HEADER.size:]
        if len(payload) != 8 * M:
            raise ValueError(f"snapshot payload has {len(payload)} bytes, expected {8 * M}")
        return cls(np.frombuffer(payload, dtype="<f8").astype(np.float64), L)

    def write_snapshot(self, path) -> None:
        Path(path).write_bytes(self.to_snapshot())

    @classmethod
    def read_snapshot(cls, path) -> "Field":
        return cls.from_snapshot(Path(path).read_bytes())


def _read_text(text_or_path) -> str:
    if isinstance(text_or_path, Path):
        return text_or_path.read_text()
    if "\n" not in text_or_path and Path(text_or_path).exists():
        return Path(text_or_path).read_text()
    return text_or_path


def grid(L: float, M: int) -> np.ndarray:
    return np.arange(M) * (L / M)


def mass(f: Field) -> float:
    return float(f.dx * np.sum(f.values))


def diff(f: Field, order: int) -> Field:
    """Centered second-order finite difference of the given order (1..4)."""
    try:
        stencil = _STENCILS[order]
    except KeyError:
        raise ValueError(f"derivative order must be 1..4, got {order!r}") from None
    return Field(stencil(f.values, f.dx), f.L)


def norms(f: Field) -> tuple[float, float, float]:
    """(||u||_2, ||d_x u||_2, ||u||_{1,2}) with d_x the centered difference."""
    l2sq = f.dx * float(np.sum(f.values**2))
    g = d1(f.values, f.dx)
    dxsq = f.dx * float(np.sum(g**2))
    return math.sqrt(l2sq), math.sqrt(dxsq), math.sqrt(l2sq + dxsq)


def min_value(f: Field) -> float:
    return float(np.min(f.values))


def positivity_measure(f: Field, r: float = 0.0) -> float:
    """Fraction of grid nodes where the field exceeds ``r``."""
    return float(np.count_nonzero(f.values > r)) / f.M


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    l2: float
    h1: float
    dx_l2: float
    min_value: float
    energy_residual: float = float("nan")
    positivity_measure: float = float("nan")

    CSV_HEADER = ("t", "mass", "l2", "h1", "dx_l2", "min", "energy_residual")

    def csv_row(self) -> list[str]:
        return [repr(float(v)) for v in (
            self.t, self.mass, self.l2, self.h1, self.dx_l2, self.min_value,
            self.energy_residual)]


def diagnose(f: Field, t: float, energy_residual: float = float("nan"),
             r_threshold: float = 0.0) -> DiagnosticsRecord:
    l2, dxl2, h1 = norms(f)
    return DiagnosticsRecord(
        t=float(t), mass=mass(f), l2=l2, h1=h1, dx_l2=dxl2,
        min_value=min_value(f), energy_residual=float(energy_residual),
        positivity_measure=positivity_measure(f, r_threshold),
    )


def diagnostics_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DiagnosticsRecord.CSV_HEADER)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()
