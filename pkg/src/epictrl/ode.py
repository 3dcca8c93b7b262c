"""Fixed-step classical Runge-Kutta (RK4) integration.

The whole toolkit deliberately runs on one deterministic fixed-step scheme:
the sweep solver needs state and adjoint samples on a shared grid, and the
calibrator needs bitwise-reproducible trajectories for finite-difference
Jacobians.  Grids are expressed in days with an integer number of steps per
day so that daily observations always fall on nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform node set t0, t0+h, ..., tf with h = 1/steps_per_day days."""

    t0: float
    tf: float
    steps_per_day: int = 10

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"need tf > t0, got [{self.t0}, {self.tf}]")
        if int(self.steps_per_day) != self.steps_per_day or self.steps_per_day < 1:
            raise ValueError(f"steps_per_day must be a positive integer, got {self.steps_per_day}")
        span_steps = (self.tf - self.t0) * self.steps_per_day
        if abs(span_steps - round(span_steps)) > 1e-9:
            raise ValueError(
                f"window [{self.t0}, {self.tf}] is not an integer number of steps "
                f"at {self.steps_per_day} steps/day"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.steps_per_day

    @property
    def n_steps(self) -> int:
        return int(round((self.tf - self.t0) * self.steps_per_day))

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        # same arithmetic (t0 + n*h) as the stepping loops
        return self.t0 + np.arange(self.n_nodes) * self.h

    def day_indices(self) -> np.ndarray:
        """Node indices of whole days (t0, t0+1, ...)."""
        return np.arange(0, self.n_nodes, self.steps_per_day)


@dataclass
class Trajectory:
    """Node values of one integration; values[k] belongs to grid.times[k]."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"values shape {self.values.shape} does not match {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory contains non-finite entries")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def sample_at(self, t: float) -> np.ndarray:
        """Linear interpolation between the two bracketing nodes."""
        pos = (t - self.grid.t0) / self.grid.h
        idx = int(np.clip(np.floor(pos), 0, self.grid.n_steps - 1))
        frac = pos - idx
        return (1.0 - frac) * self.values[idx] + frac * self.values[idx + 1]

    def daily(self) -> np.ndarray:
        return self.values[self.grid.day_indices()]


def rk4_step(rhs, t: float, x, h: float):
    """One classical RK4 update; h < 0 steps backward in time.

    Exact for vector fields polynomial in t of degree <= 3.  A non-finite
    stage evaluation raises NumericalError naming the stage and time.
    """
    if h == 0.0:
        raise ValueError("step size h must be nonzero")
    x = np.asarray(x, dtype=np.float64)
    k1 = np.asarray(rhs(t, x), dtype=np.float64)
    k2 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k1), dtype=np.float64)
    k3 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k2), dtype=np.float64)
    k4 = np.asarray(rhs(t + h, x + h * k3), dtype=np.float64)
    for name, k in (("k1", k1), ("k2", k2), ("k3", k3), ("k4", k4)):
        if not np.all(np.isfinite(k)):
            raise NumericalError(f"non-finite RK4 stage {name} at t={t!r}")
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rhs, grid: TimeGrid, x0, direction: str = "forward") -> Trajectory:
    """Fill every grid node by repeated RK4 steps.

    forward:  x0 is the value at t0; nodes are filled left to right.
    backward: x0 is the value at tf; stepping uses -h from tf down to t0.
    Either way the returned values are indexed in forward time order, so
    values[k] always corresponds to grid.times[k].
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise ValueError("x0 must be one-dimensional")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")

    h = grid.h
    values = np.empty((grid.n_nodes, x0.size))
    if direction == "forward":
        values[0] = x0
        for n in range(grid.n_steps):
            t = grid.t0 + n * h
            try:
                values[n + 1] = rk4_step(rhs, t, values[n], h)
            except NumericalError as err:
                raise NumericalError(f"{err} (forward node {n})") from err
    else:
        values[grid.n_steps] = x0
        for n in range(grid.n_steps, 0, -1):
            t = grid.t0 + n * h
            try:
                values[n - 1] = rk4_step(rhs, t, values[n], -h)
            except NumericalError as err:
                raise NumericalError(f"{err} (backward node {n})") from err
    return Trajectory(grid, values)
