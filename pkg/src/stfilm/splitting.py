"""Time splitting of the full equation into a deterministic thin-film phase
(D) and a stochastic phase (S).

[0, T) is cut into N+1 intervals of length delta. On interval j the D phase
runs over the whole interval starting from the previous handoff state, its
endpoint is copied into the S phase, and the S endpoint is copied into the
next interval. The concatenated path u_N replays both phases at double speed,
D on the first half of the interval and S on the second.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .det_solver import DetParams, det_evolve, substeps
from .errors import SolverError
from .field import DiagnosticsRecord, Field, diagnose
from .stoch_solver import StochParams, stoch_evolve

DET = "D"
STOCH = "S"


@dataclass(frozen=True)
class SplitSchedule:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def delta(self) -> float:
        return self.T / (self.N + 1)

    @property
    def n_intervals(self) -> int:
        return self.N + 1

    def endpoint(self, j: int) -> float:
        """j * delta, with the last endpoint pinned to T."""
        return self.T if j == self.n_intervals else j * self.delta

    @property
    def intervals(self) -> list[tuple[float, float]]:
        """[(j-1) delta, j delta) for j = 1..N+1."""
        return [(self.endpoint(j - 1), self.endpoint(j)) for j in range(1, self.n_intervals + 1)]

    def locate(self, t: float) -> int:
        """Interval index j with t in [(j-1) delta, j delta)."""
        if not (0 <= t < self.T):
            raise ValueError(f"t={t} lies outside [0, {self.T})")
        return min(int(t // self.delta) + 1, self.n_intervals)


def make_schedule(T: float, N: int) -> SplitSchedule:
    return SplitSchedule(T, N)


@dataclass
class Segment:
    """One phase on one interval. ``states`` holds every substep state when
    kept, otherwise only the two endpoints."""

    interval: int
    phase: str
    t0: float
    t1: float
    records: list[DiagnosticsRecord]
    times: np.ndarray
    states: np.ndarray
    L: float

    @property
    def start(self) -> Field:
        return Field(self.states[0], self.L)

    @property
    def end(self) -> Field:
        return Field(self.states[-1], self.L)

    def at(self, tau: float) -> np.ndarray:
        """Linear interpolation between stored states at segment time tau."""
        ts = self.times
        # times built as 2t - j delta carry roundoff; snap onto stored substeps
        snap = 1e-9 * (ts[-1] - ts[0])
        if tau <= ts[0] + snap:
            return self.states[0]
        if tau >= ts[-1] - snap:
            return self.states[-1]
        i = int(np.searchsorted(ts, tau, side="right")) - 1
        if tau - ts[i] <= snap:
            return self.states[i]
        if ts[i + 1] - tau <= snap:
            return self.states[i + 1]
        a = (tau - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - a) * self.states[i] + a * self.states[i + 1]


@dataclass
class SplitTrajectory:
    schedule: SplitSchedule
    u0: Field
    v_segments: list[Segment] = field(default_factory=list)
    w_segments: list[Segment] = field(default_factory=list)

    @property
    def final(self) -> Field:
        return self.w_segments[-1].end if self.w_segments else self.u0

    def segments(self):
        """D and S segments in causal order."""
        for v, w in zip(self.v_segments, self.w_segments):
            yield v
            yield w

    def handoff_states(self) -> list[Field]:
        """State at t = 0 and at every handoff time j delta (end of each S phase)."""
        return [self.u0] + [w.end for w in self.w_segments]

    @property
    def handoff_times(self) -> list[float]:
        return [0.0] + [self.schedule.endpoint(j) for j in range(1, self.schedule.n_intervals + 1)]

    def records(self) -> list[DiagnosticsRecord]:
        out = []
        for seg in self.segments():
            out.extend(seg.records)
        return out

    def min_value(self) -> float:
        return min(r.min_value for r in self.records())

    def sup_h1(self) -> float:
        return max(r.h1 for r in self.records())


def _make_segment(j, phase, t0, t1, records, start: Field, end: Field, states) -> Segment:
    if states is None:
        return Segment(j, phase, t0, t1, records, np.array([t0, t1]),
                       np.array([start.values, end.values]), start.L)
    return Segment(j, phase, t0, t1, records, np.array([r.t for r in records]), states, start.L)


def _identity_segment(w: Field, j: int, t0: float, t1: float, r_threshold: float) -> Segment:
    # S phase with no noise and no viscosity: nothing moves
    rec0 = diagnose(w, t0, r_threshold=r_threshold)
    rec1 = diagnose(w, t1, r_threshold=r_threshold)
    st = np.array([w.values, w.values])
    return Segment(j, STOCH, t0, t1, [rec0, rec1], np.array([t0, t1]), st, w.L)


def run_split(u0: Field, s: SplitSchedule, dp: DetParams, sp: StochParams, rng_lease, *,
              keep_states: bool = False, r_threshold: float = 0.0) -> SplitTrajectory:
    """Alternate D and S over every interval of the schedule.

    Interval j draws its noise from ``rng_lease`` under interval index j.
    Solver failures are re-raised annotated with the interval and phase.
    """
    if u0.values.min() < 0:
        warnings.warn(f"initial condition has negative values (min {u0.values.min():.3g})",
                      RuntimeWarning, stacklevel=2)
    traj = SplitTrajectory(s, u0)
    cur = u0
    for j in range(1, s.n_intervals + 1):
        t0, t1 = s.endpoint(j - 1), s.endpoint(j)
        try:
            res = det_evolve(cur, t0, t1, dp, keep_states=keep_states, r_threshold=r_threshold)
        except SolverError as exc:
            raise exc.annotate(j, DET)
        v_end, v_rec = res[0], res[1]
        traj.v_segments.append(_make_segment(j, DET, t0, t1, v_rec, cur, v_end,
                                             res[2] if keep_states else None))

        # (DS) handoff: the stochastic phase starts from an exact copy
        w_start = Field(v_end.values.copy(), u0.L)
        if sp.is_identity:
            traj.w_segments.append(_identity_segment(w_start, j, t0, t1, r_threshold))
            cur = w_start
            continue
        try:
            res = stoch_evolve(w_start, t0, t1, sp, rng_lease, interval=j,
                               keep_states=keep_states, r_threshold=r_threshold)
        except SolverError as exc:
            raise exc.annotate(j, STOCH)
        w_end, w_rec = res[0], res[1]
        traj.w_segments.append(_make_segment(j, STOCH, t0, t1, w_rec, w_start, w_end,
                                             res[2] if keep_states else None))
        cur = Field(w_end.values.copy(), u0.L)
    return traj


class ConcatenatedPath:
    """u_N(t) on [0, T): on interval j the D segment is replayed at time
    2t - (j-1) delta for t < (j - 1/2) delta, the S segment at 2t - j delta
    afterwards. Between stored substeps the states are interpolated linearly,
    so full states must have been kept."""

    def __init__(self, traj: SplitTrajectory, s: SplitSchedule):
        if len(traj.v_segments) != s.n_intervals or len(traj.w_segments) != s.n_intervals:
            raise ValueError("trajectory is incomplete")
        self.traj, self.schedule = traj, s

    def phase_time(self, t: float) -> tuple[int, str, float]:
        """(j, phase, segment time) that u_N(t) reads from."""
        s = self.schedule
        j = s.locate(t)
        d = s.delta
        if t < (j - 0.5) * d:
            return j, DET, 2.0 * t - (j - 1) * d
        return j, STOCH, 2.0 * t - j * d

    def __call__(self, t: float) -> Field:
        j, phase, tau = self.phase_time(t)
        seg = self.traj.v_segments[j - 1] if phase == DET else self.traj.w_segments[j - 1]
        return Field(seg.at(tau), self.traj.u0.L)

    def sample(self, ts) -> np.ndarray:
        return np.array([self(t).values for t in ts])

    def sup_h1(self) -> float:
        """sup over [0, T) of ||u_N||_{1,2}. The path visits every stored state
        and the norm is convex, so the max over states is exact."""
        return self.traj.sup_h1()


def concatenate(traj: SplitTrajectory, s: SplitSchedule) -> ConcatenatedPath:
    return ConcatenatedPath(traj, s)


@dataclass(frozen=True)
class MassChainReport:
    det_max_increase: float
    max_ratio: float
    bound: float
    passed: bool


def check_mass_chain(traj: SplitTrajectory, C: float = 0.0, tol: float = 0.0,
                     det_tol: float = 1e-10) -> MassChainReport:
    """D phases must not gain mass (beyond det_tol), and every recorded mass
    must stay below exp(C T) mass(0) (1 + tol)."""
    m0 = traj.u0.dx * float(np.sum(traj.u0.values))
    inc = -math.inf
    for v in traj.v_segments:
        ms = [r.mass for r in v.records]
        inc = max(inc, max(np.diff(ms), default=0.0))
    masses = np.array([r.mass for r in traj.records()])
    bound = math.exp(C * traj.schedule.T) * (1.0 + tol)
    ratio = float(np.max(masses) / m0) if m0 > 0 else math.inf
    ok = inc <= det_tol and ratio <= bound
    return MassChainReport(float(inc), ratio, bound, bool(ok))


def unsplit_reference(u0: Field, s: SplitSchedule, dp: DetParams) -> list[Field]:
    """Pure deterministic evolution sampled at the handoff times (for
    consistency checks when the S phase is trivial). Uses the same per-interval
    substep count as the split run."""
    n_int, _ = substeps(0.0, s.delta, dp.dt)
    total = n_int * s.n_intervals
    p = DetParams(dt=s.T / total, eps=dp.eps, r=dp.r, theta=dp.theta,
                  c_safe=dp.c_safe, max_retries=dp.max_retries)
    _, _, states = det_evolve(u0, 0.0, s.T, p, keep_states=True)
    return [Field(states[j * n_int], u0.L) for j in range(s.n_intervals + 1)]
