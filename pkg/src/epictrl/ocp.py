"""Optimal vaccination scheduling by forward-backward sweep.

The running cost w1*I(t)^2 + w2*u(t)^2 is integrated over the planning
window; admissible controls take values in [0, 1].  Minimization couples the
state to a costate vector psi integrated backward from zero terminal data,
and the pointwise minimizer of the control Hamiltonian is

    u*(t) = clamp( S(t) * (psi1(t) - psi8(t)) / (2 * w2), 0, 1 ).

The sweep alternates forward state integration, backward costate
integration, and a relaxed update toward u*; it stops when neither the
control nor the cost moves by more than the configured tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .epi_core import EpidemicParams, eval_mortality_rate, eval_recovery_rate
from .errors import NumericalError
from .ode import TimeGrid, Trajectory


@dataclass(frozen=True)
class ObjectiveWeights:
    """Relative prices of infection load (w1) and vaccination effort (w2)."""

    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.w1) and self.w1 >= 0.0):
            raise ValueError(f"w1 must be finite and >= 0, got {self.w1}")
        if not (np.isfinite(self.w2) and self.w2 > 0.0):
            raise ValueError(f"w2 must be finite and > 0 (it divides the control update), got {self.w2}")


@dataclass
class ControlSignal:
    """One vaccination fraction per grid node, all inside [0, 1]."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"control length {self.values.shape} does not match {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("control values must lie in [0, 1]")

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "ControlSignal":
        return cls(grid, np.zeros(grid.n_nodes))


@dataclass(frozen=True)
class AdjointState:
    """Costate coordinates paired with (S, E, I, Q, R, D, P, W)."""

    psi1: float
    psi2: float
    psi3: float
    psi4: float
    psi5: float
    psi6: float
    psi7: float
    psi8: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.psi1, self.psi2, self.psi3, self.psi4,
             self.psi5, self.psi6, self.psi7, self.psi8]
        )

    @classmethod
    def terminal(cls) -> "AdjointState":
        """Free-endpoint terminal data: every component zero."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SweepConfig:
    weights: ObjectiveWeights = ObjectiveWeights()
    relaxation: float = 0.5
    max_iterations: int = 300
    tolerance: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")


@dataclass
class SweepResult:
    control: ControlSignal
    state: Trajectory
    adjoint: Trajectory
    cost: float
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list, repr=False)


def _trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.h)
    w[0] = 0.5 * grid.h
    w[-1] = 0.5 * grid.h
    return w


def cost_functional(state: Trajectory, control: ControlSignal, w: ObjectiveWeights) -> float:
    """Trapezoidal quadrature of w1*I^2 + w2*u^2 over the shared grid."""
    if state.grid != control.grid:
        raise ValueError("state and control live on different grids")
    integrand = w.w1 * state.values[:, 2] ** 2 + w.w2 * control.values**2
    return float(np.dot(_trapezoid_weights(state.grid), integrand))


def adjoint_rhs(t: float, psi, x, u: float, p: EpidemicParams, w: ObjectiveWeights) -> np.ndarray:
    """Costate derivative along a state point x under control u.

    Rows 5..8 vanish identically, so with zero terminal data those
    components stay zero along the whole backward trajectory.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"control u={u} outside [0, 1]")
    psi = np.asarray(psi, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    lam = eval_recovery_rate(t, p)
    kap = eval_mortality_rate(t, p)
    bx3 = p.beta * x[2] / p.N
    bx1 = p.beta * x[0] / p.N
    return np.array(
        [
            (bx3 + p.omega + u) * psi[0] - bx3 * psi[1] - p.omega * psi[6] - u * psi[7],
            p.gamma * psi[1] - p.gamma * psi[2],
            bx1 * psi[0] - bx1 * psi[1] + p.delta * psi[2] - p.delta * psi[3] - 2.0 * w.w1 * x[2],
            (lam + kap) * psi[3] - lam * psi[4] - kap * psi[5],
            0.0,
            0.0,
            0.0,
            0.0,
        ]
    )


def extremal_control(x1, psi1, psi8, w2: float):
    """Pointwise Hamiltonian minimizer clamp(x1*(psi1 - psi8)/(2*w2), 0, 1)."""
    if not w2 > 0.0:
        raise ValueError("w2 must be positive")
    return np.clip(np.asarray(x1) * (np.asarray(psi1) - np.asarray(psi8)) / (2.0 * w2), 0.0, 1.0)


def hamiltonian_gradient_u(t: float, x, psi, u: float, w: ObjectiveWeights) -> float:
    """Control derivative of the Hamiltonian: 2*w2*u + (psi8 - psi1)*x1."""
    x = np.asarray(x, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    return float(2.0 * w.w2 * u + (psi[7] - psi[0]) * x[0])


def integrate_controlled(p: EpidemicParams, x0, control: ControlSignal) -> Trajectory:
    """Forward trajectory of the vaccinated model under a nodal control."""
    grid = control.grid
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (8,):
        raise ValueError("controlled model needs 8 state components")
    values = kernels.integrate_controlled(
        p.as_array(), x0, control.values, grid.t0, grid.h, grid.n_steps
    )
    finite_rows = np.all(np.isfinite(values), axis=1)
    if not finite_rows.all():
        raise NumericalError(
            f"state integration diverged: non-finite values from node "
            f"{int(np.argmin(finite_rows))}"
        )
    if np.abs(values).max() > 1e3 * p.N:
        raise NumericalError(
            f"state integration diverged: magnitude {np.abs(values).max():.3e} "
            f"exceeds 1000x the population"
        )
    return Trajectory(grid, values)


def integrate_adjoint(p: EpidemicParams, w: ObjectiveWeights, state: Trajectory,
                      control: ControlSignal) -> Trajectory:
    """Backward costate trajectory with zero terminal data."""
    if state.grid != control.grid:
        raise ValueError("state and control live on different grids")
    grid = state.grid
    values = kernels.integrate_adjoint_backward(
        p.as_array(), w.w1, state.values, control.values, grid.t0, grid.h
    )
    if not np.all(np.isfinite(values)):
        raise NumericalError("adjoint integration produced non-finite values")
    return Trajectory(grid, values)


def cost_gradient(p: EpidemicParams, state: Trajectory, control: ControlSignal,
                  w: ObjectiveWeights) -> np.ndarray:
    """Nodal gradient of the discrete cost with respect to the control.

    This is the exact reverse-mode derivative of cost_functional composed
    with the fixed-step integrator, so it matches central finite differences
    of the same pipeline to rounding; it doubles as the correctness oracle
    for the costate coefficients, which it shares with adjoint_rhs.
    """
    if state.grid != control.grid:
        raise ValueError("state and control live on different grids")
    grid = state.grid
    return kernels.cost_gradient_backward(
        p.as_array(), w.w1, w.w2, state.values, control.values, grid.t0, grid.h
    )


def forward_backward_sweep(p: EpidemicParams, x0, grid: TimeGrid,
                           cfg: SweepConfig) -> SweepResult:
    """Iterate state/costate/control updates until the fixed point.

    Starts from u = 0 (the uncontrolled baseline), so the initial cost equals
    the do-nothing cost and every accepted iterate can only improve on it.
    The relaxed update halves its step while the cost would increase, which
    makes the cost history non-increasing; if the tolerance is not reached
    the best iterate is returned flagged unconverged.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape == (7,):
        x0 = np.append(x0, 0.0)
    if x0.shape != (8,):
        raise ValueError("x0 must have 7 or 8 components")
    if np.any(x0 < 0.0):
        raise ValueError("x0 must be nonnegative")

    w = cfg.weights
    u = ControlSignal.zeros(grid)
    state = integrate_controlled(p, x0, u)
    cost = cost_functional(state, u, w)
    cost_zero = cost
    history = [cost]
    prev_cost = None

    best = None
    iterations = 0
    converged = False
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        adjoint = integrate_adjoint(p, w, state, u)
        if best is None or cost <= best[0]:
            best = (cost, u, state, adjoint, it)

        u_star = extremal_control(
            state.values[:, 0], adjoint.values[:, 0], adjoint.values[:, 7], w.w2
        )
        du = float(np.max(np.abs(u_star - u.values) / (1.0 + np.abs(u.values))))
        dcost = (
            abs(cost - prev_cost) / (1.0 + abs(cost)) if prev_cost is not None else np.inf
        )
        if du <= cfg.tolerance and dcost <= cfg.tolerance:
            converged = True
            break

        # relaxed control update with cost-descent backtracking
        step = cfg.relaxation
        while True:
            u_new = ControlSignal(grid, (1.0 - step) * u.values + step * u_star)
            state_new = integrate_controlled(p, x0, u_new)
            cost_new = cost_functional(state_new, u_new, w)
            if cost_new <= cost + 1e-12 * (1.0 + abs(cost)):
                break
            step *= 0.5
            if step < 1e-10:
                u_new, state_new, cost_new = u, state, cost
                break
        prev_cost = cost
        u, state, cost = u_new, state_new, cost_new
        history.append(cost)

    if not converged:
        cost, u, state, adjoint, _ = best

    if cost > cost_zero + 1e-9 * (1.0 + abs(cost_zero)):
        raise NumericalError(
            f"sweep ended above the uncontrolled cost ({cost:.6e} > {cost_zero:.6e})"
        )
    return SweepResult(
        control=u,
        state=state,
        adjoint=adjoint,
        cost=cost,
        iterations=iterations,
        converged=converged,
        cost_history=history,
    )
