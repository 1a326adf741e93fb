from __future__ import annotations


class SolverError(RuntimeError):
    """A time step could not be completed.

    ``state`` holds the last finite field (if any) for post-mortem dumps;
    ``interval`` and ``phase`` are filled in by the splitting driver.
    """

    def __init__(self, message, *, t=None, state=None, interval=None, phase=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.interval = interval
        self.phase = phase

    def annotate(self, interval, phase) -> "SolverError":
        self.interval = interval
        self.phase = phase
        return self

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.interval is not None:
            where.append(f"interval {self.interval}")
        if self.phase is not None:
            where.append(f"phase {self.phase}")
        if self.t is not None:
            where.append(f"t={self.t:.6g}")
        return f"{msg} ({', '.join(where)})" if where else msg


class ConfigError(ValueError):
    """Invalid run configuration; ``violations`` lists every problem found."""

    def __init__(self, violations, *, line=None, column=None):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        self.line = line
        self.column = column
        super().__init__("; ".join(self.violations))
