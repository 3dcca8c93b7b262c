"""Generalized SEIR (SEIQRDP) dynamics, with and without vaccination.

The population is split into susceptible S, exposed E, infective I,
quarantined Q, recovered R, dead D and protected (insusceptible) P persons;
the vaccinated model adds W, the running count of administered doses.  The
recovery and mortality rates are smooth functions of time: recovery follows a
rising sigmoid that saturates at ``lambda1``, mortality a symmetric bump that
peaks at ``kappa1 / 2``.

All functions here are pure; trajectories are produced by :mod:`epictrl.ode`
or the fused loops in :mod:`epictrl.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EXP_CLAMP = 700.0  # |exponent| cap; exp(+/-700) is the edge of double range

_RATE_FIELDS = (
    "omega",
    "beta",
    "gamma",
    "delta",
    "lambda1",
    "lambda2",
    "lambda3",
    "kappa1",
    "kappa2",
    "kappa3",
)


@dataclass(frozen=True)
class EpidemicParams:
    """Model constants.

    omega    protection rate (1/day), flow S -> P
    beta     infection rate (1/day)
    gamma    inverse mean latent time (1/day), flow E -> I
    delta    quarantine entry rate (1/day), flow I -> Q
    lambda1..lambda3   recovery curve: plateau (1/day), steepness (1/day),
                       midpoint (day)
    kappa1..kappa3     mortality curve: scale (1/day), width (1/day),
                       center (day)
    N        total population (persons, constant)
    """

    omega: float
    beta: float
    gamma: float
    delta: float
    lambda1: float
    lambda2: float
    lambda3: float
    kappa1: float
    kappa2: float
    kappa3: float
    N: float

    def __post_init__(self):
        for name in _RATE_FIELDS:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"parameter {name} must be finite and >= 0, got {value}")
        if not np.isfinite(self.N) or self.N <= 0.0:
            raise ValueError(f"population N must be positive, got {self.N}")
        if self.lambda1 > 1.0:
            raise ValueError(f"recovery plateau lambda1 must be <= 1, got {self.lambda1}")
        if self.kappa1 > 1.0:
            raise ValueError(f"mortality scale kappa1 must be <= 1, got {self.kappa1}")

    def as_array(self) -> np.ndarray:
        """Packed layout used by the kernels: ten rates then N."""
        return np.array(
            [getattr(self, name) for name in _RATE_FIELDS] + [self.N], dtype=np.float64
        )

    def replace(self, **changes) -> "EpidemicParams":
        fields = {name: getattr(self, name) for name in _RATE_FIELDS}
        fields["N"] = self.N
        fields.update(changes)
        return EpidemicParams(**fields)


@dataclass(frozen=True)
class CompartmentState:
    """One point of the compartment phase space, in persons.

    W counts cumulative vaccinations and only evolves in the controlled
    model; it stays 0 in the uncontrolled one.
    """

    S: float
    E: float
    I: float
    Q: float
    R: float
    D: float
    P: float
    W: float = 0.0

    def __post_init__(self):
        vec = (self.S, self.E, self.I, self.Q, self.R, self.D, self.P, self.W)
        if not np.all(np.isfinite(vec)):
            raise ValueError("compartment values must be finite")

    def as_vector(self, vaccinated: bool = False) -> np.ndarray:
        base = [self.S, self.E, self.I, self.Q, self.R, self.D, self.P]
        if vaccinated:
            base.append(self.W)
        return np.array(base, dtype=np.float64)

    @classmethod
    def from_vector(cls, values) -> "CompartmentState":
        values = np.asarray(values, dtype=np.float64)
        if values.shape not in ((7,), (8,)):
            raise ValueError(f"expected 7 or 8 components, got shape {values.shape}")
        w = float(values[7]) if values.shape == (8,) else 0.0
        return cls(*(float(v) for v in values[:7]), W=w)

    def total(self) -> float:
        return self.S + self.E + self.I + self.Q + self.R + self.D + self.P + self.W


def eval_recovery_rate(t, p: EpidemicParams):
    """Recovery rate lambda(t) = lambda1 / (1 + exp(-lambda2 (t - lambda3))).

    Strictly inside (0, lambda1) for lambda1 > 0; accepts scalar or array t.
    """
    z = np.clip(-p.lambda2 * (np.asarray(t, dtype=np.float64) - p.lambda3), -_EXP_CLAMP, _EXP_CLAMP)
    out = p.lambda1 / (1.0 + np.exp(z))
    return float(out) if np.isscalar(t) else out


def eval_mortality_rate(t, p: EpidemicParams):
    """Mortality rate kappa(t) = kappa1 / (exp(z) + exp(-z)), z = kappa2 (t - kappa3).

    Even around t = kappa3 with maximum kappa1 / 2 there; accepts scalar or
    array t.
    """
    z = np.clip(p.kappa2 * (np.asarray(t, dtype=np.float64) - p.kappa3), -_EXP_CLAMP, _EXP_CLAMP)
    out = p.kappa1 / (np.exp(z) + np.exp(-z))
    return float(out) if np.isscalar(t) else out


def uncontrolled_rhs(t: float, x, p: EpidemicParams) -> np.ndarray:
    """Derivative of (S, E, I, Q, R, D, P) without vaccination.

    Every flow appears once with each sign, so the component sum vanishes up
    to rounding regardless of the state.
    """
    x = np.asarray(x, dtype=np.float64)
    s, e, i, q = x[0], x[1], x[2], x[3]
    lam = eval_recovery_rate(t, p)
    kap = eval_mortality_rate(t, p)
    infection = p.beta * s * i / p.N
    latency = p.gamma * e
    quarantine = p.delta * i
    recovery = lam * q
    death = kap * q
    protection = p.omega * s
    return np.array(
        [
            -infection - protection,
            infection - latency,
            latency - quarantine,
            quarantine - recovery - death,
            recovery,
            death,
            protection,
        ]
    )


def controlled_rhs(t: float, x, p: EpidemicParams, u: float) -> np.ndarray:
    """Derivative of (S, E, I, Q, R, D, P, W) under vaccination fraction u.

    u is the instantaneous fraction of susceptibles being vaccinated and must
    already be projected into [0, 1]; anything else is rejected because it
    means an unprojected control escaped the optimizer.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"control u={u} outside the admissible interval [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    s, e, i, q = x[0], x[1], x[2], x[3]
    lam = eval_recovery_rate(t, p)
    kap = eval_mortality_rate(t, p)
    infection = p.beta * s * i / p.N
    latency = p.gamma * e
    quarantine = p.delta * i
    recovery = lam * q
    death = kap * q
    protection = p.omega * s
    vaccination = u * s
    return np.array(
        [
            -infection - protection - vaccination,
            infection - latency,
            latency - quarantine,
            quarantine - recovery - death,
            recovery,
            death,
            protection,
            vaccination,
        ]
    )
