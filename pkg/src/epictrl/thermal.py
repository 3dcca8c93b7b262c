"""Transient heat diffusion in a cylindrical vial, forward and inverse.

The vial sits in a box held at a fixed temperature; its wall is the lateral
cylinder surface, with the caps either held at the box temperature
("dirichlet") or treated as perfectly insulated.  Everything is phrased in
terms of the *unit response* phi: the axisymmetric field evolving from value
1 inside with value 0 on the boundary.  Because the problem is linear, a
uniform start at T0 with boundary Tb gives T = Tb + (T0 - Tb) * phi, which
the inverse solve exploits directly: the required initial temperature is
obtained from a single forward evaluation of phi.

Two independent routes compute phi: an explicit finite-difference march
(production path, grid output) and a Bessel/sine eigenfunction series
(analytic oracle, arbitrary points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import j0, j1, jn_zeros

from . import kernels
from .errors import ConfigError, NumericalError, ScenarioError

CRITERIA = ("center", "volume-average", "probe")
CAP_CONDITIONS = ("insulated", "dirichlet")


@dataclass(frozen=True)
class VialGeometry:
    """Cylinder radius and height in meters."""

    radius: float
    height: float

    def __post_init__(self):
        if not (self.radius > 0.0 and self.height > 0.0):
            raise ValueError("radius and height must be positive")


@dataclass(frozen=True)
class MaterialProps:
    """conductivity W/(m*degC), density kg/m^3, heat capacity W*s/(kg*degC)."""

    conductivity: float
    density: float
    heat_capacity: float

    def __post_init__(self):
        if min(self.conductivity, self.density, self.heat_capacity) <= 0.0:
            raise ValueError("material properties must be positive")


def thermal_diffusivity(m: MaterialProps) -> float:
    """alpha = k / (rho * c), in m^2/s."""
    return m.conductivity / (m.density * m.heat_capacity)


@dataclass(frozen=True)
class TransportScenario:
    """One cold-chain evaluation: geometry, material, timing and criterion.

    criterion picks how the target temperature is read off the field at the
    arrival time: at the cylinder center, as the volume average, or at a
    probe point (r, z).  alpha_override bypasses the conductivity-derived
    diffusivity for sensitivity runs.
    """

    geometry: VialGeometry
    material: MaterialProps
    arrival_time: float  # seconds
    boundary_temp: float = 0.0  # degC inside the box
    target_temp: float = -70.0  # degC required at arrival
    cap_condition: str = "insulated"
    criterion: str = "volume-average"
    probe: tuple | None = None  # (r, z) in meters
    n_r: int = 101
    n_z: int = 101
    n_t: int | None = None  # explicit step count; None picks a stable default
    alpha_override: float | None = None  # m^2/s

    def __post_init__(self):
        if not self.arrival_time > 0.0:
            raise ValueError("arrival time must be positive")
        if self.cap_condition not in CAP_CONDITIONS:
            raise ValueError(f"cap_condition must be one of {CAP_CONDITIONS}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if min(self.n_r, self.n_z) < 3:
            raise ValueError("need at least 3 nodes per axis")
        if self.criterion == "probe":
            if self.probe is None:
                raise ValueError("probe criterion needs a probe point")
        if self.probe is not None:
            pr, pz = self.probe
            if not (0.0 <= pr < self.geometry.radius and 0.0 <= pz <= self.geometry.height):
                raise ValueError("probe point must lie inside the vial")
        if self.alpha_override is not None and not self.alpha_override > 0.0:
            raise ValueError("alpha_override must be positive")
        if self.n_t is not None:
            dt = self.arrival_time / self.n_t
            limit = self.stability_limit()
            if dt > limit:
                raise ConfigError(
                    f"time step {dt:.6g} s violates the stability guard; "
                    f"admissible dt <= {limit:.6g} s ({math.ceil(self.arrival_time / limit)} steps)"
                )

    @property
    def alpha(self) -> float:
        if self.alpha_override is not None:
            return self.alpha_override
        return thermal_diffusivity(self.material)

    @property
    def dr(self) -> float:
        return self.geometry.radius / (self.n_r - 1)

    @property
    def dz(self) -> float:
        return self.geometry.height / (self.n_z - 1)

    def stability_limit(self) -> float:
        """Hard ceiling on the explicit time step."""
        return 0.9 / (2.0 * self.alpha * (1.0 / self.dr**2 + 1.0 / self.dz**2))

    def default_dt(self) -> float:
        """Stable default step; the 2/dr^2 keeps the axis update positive."""
        return 0.9 / (2.0 * self.alpha * (2.0 / self.dr**2 + 1.0 / self.dz**2))


@dataclass
class TemperatureField:
    """Axisymmetric nodal values T(r_i, z_j) at one time instant, in degC."""

    r: np.ndarray
    z: np.ndarray
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.r.size, self.z.size):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.r.size}, {self.z.size})"
            )

    def sample(self, r: float, z: float) -> float:
        """Bilinear interpolation of the nodal values."""
        ri = np.clip((r - self.r[0]) / (self.r[1] - self.r[0]), 0.0, self.r.size - 1.0)
        zi = np.clip((z - self.z[0]) / (self.z[1] - self.z[0]), 0.0, self.z.size - 1.0)
        i0 = min(int(ri), self.r.size - 2)
        j0_ = min(int(zi), self.z.size - 2)
        fr = ri - i0
        fz = zi - j0_
        v = self.values
        return float(
            (1 - fr) * (1 - fz) * v[i0, j0_]
            + fr * (1 - fz) * v[i0 + 1, j0_]
            + (1 - fr) * fz * v[i0, j0_ + 1]
            + fr * fz * v[i0 + 1, j0_ + 1]
        )

    def volume_average(self) -> float:
        """r-weighted trapezoidal mean over the cylinder volume."""
        radial = np.trapezoid(self.values * self.r[:, None], self.r, axis=0)
        total = np.trapezoid(radial, self.z)
        norm = 0.5 * self.r[-1] ** 2 * (self.z[-1] - self.z[0])
        return float(total / norm)


def evaluate_criterion(fld: TemperatureField, s: TransportScenario) -> float:
    if s.criterion == "center":
        return fld.sample(0.0, 0.5 * s.geometry.height)
    if s.criterion == "volume-average":
        return fld.volume_average()
    return fld.sample(s.probe[0], s.probe[1])


# --- analytic eigenfunction series -----------------------------------------

_root_cache = {"roots": np.empty(0), "j1": np.empty(0)}
_MAX_TERMS = 20000


def _j0_roots(n: int):
    if _root_cache["roots"].size < n:
        roots = jn_zeros(0, n)
        _root_cache["roots"] = roots
        _root_cache["j1"] = j1(roots)
    return _root_cache["roots"][:n], _root_cache["j1"][:n]


def _radial_series(rho: np.ndarray, fo: float, tol: float) -> np.ndarray:
    """Zero-boundary disc response at rho = r/R for Fourier number fo > 0."""
    n = 20
    while True:
        roots, j1v = _j0_roots(n)
        coef = 2.0 / (roots * j1v) * np.exp(-roots**2 * fo)
        # first omitted mode bounds the tail via the geometric decay ratio
        mu_next = roots[-1] + math.pi
        lead = abs(2.0 / (mu_next * 0.7 / math.sqrt(mu_next))) * math.exp(-mu_next**2 * fo)
        ratio = math.exp(-(2.0 * math.pi * mu_next + math.pi**2) * fo)
        tail = lead / (1.0 - ratio) if ratio < 1.0 else math.inf
        if tail <= tol:
            break
        if n >= _MAX_TERMS:
            raise NumericalError(
                f"radial series needs more than {_MAX_TERMS} terms "
                f"(Fourier number {fo:.3e} too small for tolerance {tol:.1e})"
            )
        n = min(2 * n, _MAX_TERMS)
    return coef @ j0(np.outer(roots, rho))


def _slab_series(zeta: np.ndarray, fo: float, tol: float) -> np.ndarray:
    """Zero-boundary slab response at zeta = z/h for Fourier number fo > 0."""
    n = 20  # number of odd modes
    while True:
        m = 2.0 * np.arange(n) + 1.0
        coef = 4.0 / (m * math.pi) * np.exp(-((m * math.pi) ** 2) * fo)
        m_next = m[-1] + 2.0
        lead = 4.0 / (m_next * math.pi) * math.exp(-((m_next * math.pi) ** 2) * fo)
        ratio = math.exp(-(4.0 * m_next + 4.0) * math.pi**2 * fo)
        tail = lead / (1.0 - ratio) if ratio < 1.0 else math.inf
        if tail <= tol:
            break
        if n >= _MAX_TERMS:
            raise NumericalError(
                f"axial series needs more than {_MAX_TERMS} terms "
                f"(Fourier number {fo:.3e} too small for tolerance {tol:.1e})"
            )
        n = min(2 * n, _MAX_TERMS)
    return coef @ np.sin(np.outer(m * math.pi, zeta))


def unit_response_series(s: TransportScenario, t: float, point: tuple,
                         tol: float = 1e-10) -> float:
    """Series value of phi(t, r, z); the truncation tail is kept below tol.

    The term count adapts upward until the tail bound passes, so a returned
    value is always trustworthy; extremely small Fourier numbers raise
    instead of silently truncating.
    """
    r, z = point
    geom = s.geometry
    if not 0.0 <= r < geom.radius:
        raise ValueError(f"point radius {r} outside [0, {geom.radius})")
    if not 0.0 <= z <= geom.height:
        raise ValueError(f"point height {z} outside [0, {geom.height}]")
    if s.cap_condition == "dirichlet" and not 0.0 < z < geom.height:
        raise ValueError("point sits on a dirichlet cap")
    if t <= 0.0:
        return 1.0
    radial = float(_radial_series(np.array([r / geom.radius]), s.alpha * t / geom.radius**2, 0.5 * tol)[0])
    if s.cap_condition == "dirichlet":
        axial = float(_slab_series(np.array([z / geom.height]), s.alpha * t / geom.height**2, 0.5 * tol)[0])
    else:
        axial = 1.0
    return radial * axial


def unit_response_series_field(s: TransportScenario, t: float,
                               tol: float = 1e-10) -> np.ndarray:
    """Series phi evaluated on the scenario grid; shape (n_r, n_z)."""
    geom = s.geometry
    r = np.linspace(0.0, geom.radius, s.n_r)
    z = np.linspace(0.0, geom.height, s.n_z)
    if t <= 0.0:
        out = np.ones((s.n_r, s.n_z))
    else:
        radial = _radial_series(r / geom.radius, s.alpha * t / geom.radius**2, 0.5 * tol)
        if s.cap_condition == "dirichlet":
            axial = _slab_series(z / geom.height, s.alpha * t / geom.height**2, 0.5 * tol)
        else:
            axial = np.ones(s.n_z)
        out = np.outer(radial, axial)
    out[-1, :] = 0.0
    if s.cap_condition == "dirichlet":
        out[:, 0] = 0.0
        out[:, -1] = 0.0
    return out


# --- finite-difference march ------------------------------------------------

def _march(s: TransportScenario, initial: np.ndarray) -> TemperatureField:
    """Explicit march of a zero-boundary field from `initial` to arrival."""
    geom = s.geometry
    alpha = s.alpha
    dr, dz = s.dr, s.dz
    if s.n_t is not None:
        n_steps = s.n_t
    else:
        n_steps = math.ceil(s.arrival_time / s.default_dt())
    dt = s.arrival_time / n_steps

    r = np.linspace(0.0, geom.radius, s.n_r)
    z = np.linspace(0.0, geom.height, s.n_z)
    fr = alpha * dt / dr**2
    fz = alpha * dt / dz**2
    drift = alpha * dt / (2.0 * dr * r[1:-1])
    crp = (fr + drift)[:, None]
    crm = (fr - drift)[:, None]

    values = kernels.heat_march(
        initial, crp, crm, fr, fz, n_steps, s.cap_condition == "dirichlet"
    )
    if not np.all(np.isfinite(values)):
        raise NumericalError("heat march produced non-finite values; reduce the time step")
    return TemperatureField(r, z, values, time=s.arrival_time)


def unit_response_fd(s: TransportScenario) -> TemperatureField:
    """Finite-difference phi at the arrival time for unit initial data."""
    phi0 = np.ones((s.n_r, s.n_z))
    phi0[-1, :] = 0.0
    if s.cap_condition == "dirichlet":
        phi0[:, 0] = 0.0
        phi0[:, -1] = 0.0
    return _march(s, phi0)


def forward_field(s: TransportScenario, t0: float) -> TemperatureField:
    """Direct forward solve from a uniform start t0 with the box boundary."""
    v0 = np.full((s.n_r, s.n_z), t0 - s.boundary_temp)
    v0[-1, :] = 0.0
    if s.cap_condition == "dirichlet":
        v0[:, 0] = 0.0
        v0[:, -1] = 0.0
    fld = _march(s, v0)
    fld.values = fld.values + s.boundary_temp
    return fld


# --- inverse solve ----------------------------------------------------------

_PHI_FLOOR = 1e-6


def required_initial_temperature(s: TransportScenario, method: str = "linear",
                                 check_tolerance: float = 0.1) -> float:
    """Initial temperature whose arrival-time criterion hits the target.

    linear: one unit-response solve, then T0 = Tb + (target - Tb)/phi_eval;
    bisect: root-finds the same value through repeated direct forward solves
    (validation mode).  Either way a direct forward re-simulation must
    reproduce the target within check_tolerance degC.
    """
    if method not in ("linear", "bisect"):
        raise ValueError(f"method must be 'linear' or 'bisect', got {method!r}")
    phi_eval = evaluate_criterion(unit_response_fd(s), s)
    if phi_eval <= _PHI_FLOOR:
        raise ScenarioError(
            f"target unreachable: unit response at arrival is {phi_eval:.3e} "
            f"under criterion {s.criterion!r} (diffusion equilibrates before t_*)"
        )
    t0 = s.boundary_temp + (s.target_temp - s.boundary_temp) / phi_eval

    if method == "bisect":
        from scipy.optimize import brentq

        def gap(candidate):
            return evaluate_criterion(forward_field(s, candidate), s) - s.target_temp

        lo = s.boundary_temp + 2.0 * (t0 - s.boundary_temp)
        t0 = brentq(gap, lo, s.boundary_temp, xtol=1e-6 * max(1.0, abs(t0)))

    reached = evaluate_criterion(forward_field(s, t0), s)
    if abs(reached - s.target_temp) > check_tolerance:
        raise NumericalError(
            f"inverse solve failed its forward check: criterion gives "
            f"{reached:.4f} degC instead of {s.target_temp:.4f} degC"
        )
    return float(t0)


@dataclass(frozen=True)
class TransportEntry:
    cap_condition: str
    criterion: str
    phi_eval: float
    required_t0: float | None  # None when the target is unreachable


def transport_table(s: TransportScenario) -> list:
    """Required T0 for every built-in criterion under both cap conditions."""
    criteria = ["center", "volume-average"] + (["probe"] if s.probe is not None else [])
    rows = []
    for cap in CAP_CONDITIONS:
        fld = unit_response_fd(replace(s, cap_condition=cap))
        for crit in criteria:
            sc = replace(s, cap_condition=cap, criterion=crit)
            phi_eval = evaluate_criterion(fld, sc)
            if phi_eval > _PHI_FLOOR:
                t0 = s.boundary_temp + (s.target_temp - s.boundary_temp) / phi_eval
            else:
                t0 = None
            rows.append(TransportEntry(cap, crit, float(phi_eval), t0))
    return rows
