"""Fitting the epidemic constants to observed (Q, R, D) series.

Observations are daily snapshots of active quarantined cases plus cumulative
recovered and dead counts.  The residual stacks the three series' model-data
differences at whole days, and a damped (Levenberg-Marquardt style) iteration
with a forward-difference Jacobian drives it down, with parameters projected
onto their bounds after every step.  The initial exposed and infective counts
are unknown in the public feeds, so they are fitted by default alongside the
ten rate constants.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .epi_core import EpidemicParams
from .errors import NumericalError

PARAM_NAMES = (
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
LATENT_NAMES = ("E0", "I0")


@dataclass
class ObservedSeries:
    """Daily (Q, R, D) observations on consecutive calendar days."""

    dates: list
    Q_obs: np.ndarray = field(repr=False)
    R_obs: np.ndarray = field(repr=False)
    D_obs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.Q_obs = np.asarray(self.Q_obs, dtype=np.float64)
        self.R_obs = np.asarray(self.R_obs, dtype=np.float64)
        self.D_obs = np.asarray(self.D_obs, dtype=np.float64)
        n = len(self.dates)
        if n == 0:
            raise ValueError("observed series is empty")
        for name, arr in (("Q_obs", self.Q_obs), ("R_obs", self.R_obs), ("D_obs", self.D_obs)):
            if arr.shape != (n,):
                raise ValueError(f"{name} length {arr.shape} does not match {n} dates")
            if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative")
        for k in range(1, n):
            if (self.dates[k] - self.dates[k - 1]).days != 1:
                raise ValueError(
                    f"dates must be strictly consecutive; gap between "
                    f"{self.dates[k - 1]} and {self.dates[k]}"
                )
        if np.any(np.diff(self.R_obs) < 0.0):
            raise ValueError("cumulative recovered series must be nondecreasing")
        if np.any(np.diff(self.D_obs) < 0.0):
            raise ValueError("cumulative deceased series must be nondecreasing")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def window(self, start: dt.date, end: dt.date) -> "ObservedSeries":
        """Slice to [start, end] inclusive; both must be covered by the data."""
        if start < self.dates[0] or end > self.dates[-1] or end < start:
            raise ValueError(
                f"requested window {start}..{end} not covered by data "
                f"{self.dates[0]}..{self.dates[-1]}"
            )
        i = (start - self.dates[0]).days
        j = (end - self.dates[0]).days + 1
        return ObservedSeries(self.dates[i:j], self.Q_obs[i:j], self.R_obs[i:j], self.D_obs[i:j])


@dataclass(frozen=True)
class FitConfig:
    initial_guess: EpidemicParams
    fit_initial_latent: bool = True
    latent_guess: tuple | None = None  # (E0, I0); defaults to the first Q value
    bounds: dict = field(default_factory=dict)  # name -> (lo, hi) overrides
    damping_seed: float = 1e-3
    damping_growth: float = 5.0
    damping_shrink: float = 0.3
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    normalize_residuals: bool = False
    staged: bool = True
    restarts: int = 0  # extra seeded starts scattered over the bounds
    restart_seed: int = 0
    steps_per_day: int = 10

    def __post_init__(self):
        if not self.damping_seed > 0.0:
            raise ValueError("damping seed must be positive")
        if self.damping_growth <= 1.0 or not 0.0 < self.damping_shrink < 1.0:
            raise ValueError("need damping_growth > 1 and 0 < damping_shrink < 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class FitResult:
    params: EpidemicParams
    latents: tuple  # (E0, I0) used by the best iterate
    sse: float
    iterations: int
    converged: bool
    residual: np.ndarray = field(repr=False)


def initial_state_from_series(params_N: float, latents, obs: ObservedSeries) -> np.ndarray:
    """Day-0 compartments: Q, R, D from the first row, P = 0, S as remainder."""
    e0, i0 = float(latents[0]), float(latents[1])
    q0, r0, d0 = float(obs.Q_obs[0]), float(obs.R_obs[0]), float(obs.D_obs[0])
    s0 = params_N - (e0 + i0 + q0 + r0 + d0)
    return np.array([s0, e0, i0, q0, r0, d0, 0.0])


def _simulate_daily(params: EpidemicParams, latents, obs: ObservedSeries,
                    steps_per_day: int) -> np.ndarray | None:
    """(n_days, 7) daily states, or None if the state left its sane range."""
    x0 = initial_state_from_series(params.N, latents, obs)
    if x0[0] < 0.0:
        return None
    n_steps = (obs.n_days - 1) * steps_per_day
    if n_steps == 0:
        return x0[None, :]
    traj = kernels.integrate_uncontrolled(params.as_array(), x0, 0.0, 1.0 / steps_per_day, n_steps)
    daily = traj[::steps_per_day]
    if not np.all(np.isfinite(daily)) or np.abs(daily).max() > 1e3 * params.N:
        return None
    return daily


def residual_vector(params: EpidemicParams, latents, obs: ObservedSeries,
                    steps_per_day: int = 10, normalize: bool = False) -> np.ndarray:
    """Stacked [Q_model - Q_obs, R_model - R_obs, D_model - D_obs] at whole days.

    Integration blow-up returns an all-infinite vector so that any step
    proposing it is rejected by the optimizer.
    """
    daily = _simulate_daily(params, latents, obs, steps_per_day)
    if daily is None:
        return np.full(3 * obs.n_days, np.inf)
    res = np.concatenate(
        [daily[:, 3] - obs.Q_obs, daily[:, 4] - obs.R_obs, daily[:, 5] - obs.D_obs]
    )
    if normalize:
        scales = np.concatenate(
            [
                np.full(obs.n_days, max(obs.Q_obs.max(), 1.0)),
                np.full(obs.n_days, max(obs.R_obs.max(), 1.0)),
                np.full(obs.n_days, max(obs.D_obs.max(), 1.0)),
            ]
        )
        res = res / scales
    return res


def synthetic_series(params: EpidemicParams, latents, start: dt.date, n_days: int,
                     q0: float, r0: float, d0: float, noise_scale: float = 0.0,
                     seed: int = 0, steps_per_day: int = 10) -> ObservedSeries:
    """Simulated daily (Q, R, D) with optional multiplicative noise.

    Noise is (1 + noise_scale * eta) with seeded uniform eta on [-1, 1], so
    every sample is jittered by at most noise_scale relative; values are then
    floored at zero and the cumulative series re-monotonized by running
    maxima so the result is always a valid ObservedSeries.
    """
    if noise_scale < 0.0:
        raise ValueError("noise_scale must be >= 0")
    dates = [start + dt.timedelta(days=k) for k in range(n_days)]
    clean = ObservedSeries(dates, np.full(n_days, q0), np.full(n_days, r0), np.full(n_days, d0))
    daily = _simulate_daily(params, latents, clean, steps_per_day)
    if daily is None:
        raise NumericalError("synthetic trajectory diverged; check parameters")
    q, r, d = daily[:, 3].copy(), daily[:, 4].copy(), daily[:, 5].copy()
    if noise_scale > 0.0:
        rng = np.random.default_rng(seed)
        eta = rng.uniform(-1.0, 1.0, (3, n_days))
        q *= 1.0 + noise_scale * eta[0]
        r *= 1.0 + noise_scale * eta[1]
        d *= 1.0 + noise_scale * eta[2]
    q = np.maximum(q, 0.0)
    r = np.maximum.accumulate(np.maximum(r, 0.0))
    d = np.maximum.accumulate(np.maximum(d, 0.0))
    return ObservedSeries(dates, q, r, d)


def default_bounds(obs: ObservedSeries, p: EpidemicParams) -> dict:
    """Per-entry [lo, hi] boxes keeping the integrator stable during search."""
    horizon = 2.0 * obs.n_days
    return {
        "omega": (0.0, 5.0),
        "beta": (0.0, 5.0),
        "gamma": (0.0, 5.0),
        "delta": (0.0, 5.0),
        "lambda1": (0.0, 1.0),
        "lambda2": (0.0, 5.0),
        "lambda3": (0.0, horizon),
        "kappa1": (0.0, 1.0),
        "kappa2": (0.0, 5.0),
        "kappa3": (0.0, horizon),
        "E0": (0.0, p.N),
        "I0": (0.0, p.N),
    }


def _unpack(theta: np.ndarray, base: EpidemicParams, fit_latents: bool):
    values = dict(zip(PARAM_NAMES, theta[: len(PARAM_NAMES)]))
    params = EpidemicParams(N=base.N, **values)
    if fit_latents:
        latents = (theta[10], theta[11])
    else:
        latents = None
    return params, latents


def _lm_minimize(resid, theta: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 names: list, cfg: FitConfig, free: np.ndarray):
    """Damped least-squares descent over the components flagged in `free`.

    Forward-difference Jacobian with per-column bump 1e-6 * (1 + |theta|);
    rejected steps grow the damping, accepted ones shrink it, so the sse
    trace over accepted iterates never increases.  Returns
    (theta, residual, sse, iterations, converged).
    """
    idx = np.flatnonzero(free)

    def jacobian(th: np.ndarray, r0: np.ndarray) -> np.ndarray:
        jac = np.empty((r0.size, idx.size))
        for c, j in enumerate(idx):
            bump = 1e-6 * (1.0 + abs(th[j]))
            if th[j] + bump > hi[j]:
                bump = -bump
            tb = th.copy()
            tb[j] += bump
            col = (resid(tb) - r0) / bump
            if not np.all(np.isfinite(col)):
                tb = th.copy()
                tb[j] -= bump
                col = (resid(tb) - r0) / (-bump)
            if not np.all(np.isfinite(col)):
                warnings.warn(f"parameter {names[j]}: non-finite Jacobian column, zeroed")
                col = np.zeros(r0.size)
            jac[:, c] = col
        return jac

    r = resid(theta)
    sse = float(np.dot(r, r)) if np.all(np.isfinite(r)) else np.inf
    if not np.isfinite(sse):
        raise NumericalError("initial guess produces a divergent trajectory")

    typical = np.maximum(np.abs(theta[idx]), 1e-6)
    mu = cfg.damping_seed
    converged = False
    iterations = 0
    stall = 0
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        jac = jacobian(theta, r)
        for c in np.flatnonzero(np.all(jac == 0.0, axis=0)):
            warnings.warn(
                f"parameter {names[idx[c]]} does not influence the residual (all-zero "
                f"Jacobian column); it is unidentifiable at this point"
            )
        g = jac.T @ r
        scaled_g = np.max(np.abs(g) * (1.0 + np.abs(theta[idx])))
        if scaled_g <= cfg.gradient_tolerance * (1.0 + sse):
            converged = True
            break

        # column-scaled augmented least squares: damping acts on unit-norm
        # columns, which is the diagonal-of-JtJ scaling without forming JtJ
        colnorm = np.sqrt(np.sum(jac**2, axis=0))
        colnorm[colnorm == 0.0] = 1.0
        jac_s = jac / colnorm
        accepted = False
        while mu < 1e14:
            aug = np.vstack([jac_s, np.sqrt(mu) * np.eye(idx.size)])
            rhs = np.concatenate([-r, np.zeros(idx.size)])
            step = np.linalg.lstsq(aug, rhs, rcond=None)[0] / colnorm
            # cap each component at its own scale: near-dead columns would
            # otherwise fling their parameter across the box (and a rate
            # pinned at exactly 0 can freeze the whole curve it belongs to)
            cap = 0.9 * np.maximum(np.abs(theta[idx]), typical)
            over = np.max(np.abs(step) / cap)
            if over > 1.0:
                step = step / over
            trial = theta.copy()
            trial[idx] = np.clip(theta[idx] + step, lo[idx], hi[idx])
            rt = resid(trial)
            sset = float(np.dot(rt, rt)) if np.all(np.isfinite(rt)) else np.inf
            if sset < sse:
                rel_drop = (sse - sset) / (1.0 + sse)
                rel_step = np.max(np.abs(trial[idx] - theta[idx]) / (1.0 + np.abs(theta[idx])))
                theta, r, sse = trial, rt, sset
                mu = max(mu * cfg.damping_shrink, 1e-14)
                accepted = True
                stall = stall + 1 if (rel_drop < 1e-12 and rel_step < 1e-10) else 0
                if stall >= 2:
                    converged = True
                break
            mu *= cfg.damping_growth
        if not accepted or converged:
            break
    return theta, r, sse, iterations, converged


def fit_parameters(obs: ObservedSeries, cfg: FitConfig) -> FitResult:
    """Bounded damped least squares, by default in three stages.

    Staging (transmission core first with the outcome curves frozen, then
    the recovery/mortality curves, then everything jointly) is what lets the
    fit travel from a far-off guess into the right basin; each stage starts
    from the previous stage's best point, so the final sse never exceeds the
    guess's.  Disable with staged=False for a single joint descent.
    """
    guess = cfg.initial_guess
    if cfg.latent_guess is not None:
        latents0 = (float(cfg.latent_guess[0]), float(cfg.latent_guess[1]))
    else:
        latents0 = (float(obs.Q_obs[0]), float(obs.Q_obs[0]))

    names = list(PARAM_NAMES) + (list(LATENT_NAMES) if cfg.fit_initial_latent else [])
    bounds = default_bounds(obs, guess)
    bounds.update(cfg.bounds)
    lo = np.array([bounds[n][0] for n in names])
    hi = np.array([bounds[n][1] for n in names])

    theta = np.array([getattr(guess, n) for n in PARAM_NAMES], dtype=np.float64)
    if cfg.fit_initial_latent:
        theta = np.append(theta, latents0)
    if np.any(theta < lo) or np.any(theta > hi):
        raise ValueError("initial guess violates the parameter bounds")

    fixed_latents = latents0

    def resid(th: np.ndarray) -> np.ndarray:
        params, latents = _unpack(th, guess, cfg.fit_initial_latent)
        if latents is None:
            latents = fixed_latents
        return residual_vector(
            params, latents, obs,
            steps_per_day=cfg.steps_per_day, normalize=cfg.normalize_residuals,
        )

    n = theta.size
    core = np.zeros(n, dtype=bool)
    core[:4] = True  # omega, beta, gamma, delta
    if cfg.fit_initial_latent:
        core[10:] = True
    curves = np.zeros(n, dtype=bool)
    curves[4:10] = True  # lambda1..3, kappa1..3
    everything = np.ones(n, dtype=bool)
    stages = [core, curves, everything] if cfg.staged else [everything]

    def descend(theta0: np.ndarray):
        th, rr, ss, total, conv = theta0, None, np.inf, 0, False
        for free in stages:
            th, rr, ss, its, conv = _lm_minimize(resid, th, lo, hi, names, cfg, free)
            total += its
        return th, rr, ss, total, conv

    theta, r, sse, iterations, converged = descend(theta)

    # optional globalization: seeded starts scattered over epidemiologically
    # plausible scales (log-uniform for rates, uniform for curve midpoints,
    # anchored to the first observed count for the latents); best sse wins,
    # and the configured guess above is always among the candidates
    if cfg.restarts > 0:
        rng = np.random.default_rng(cfg.restart_seed)
        log_ranges = {
            "omega": (-2.5, 0.5), "beta": (-2.5, 0.5),
            "gamma": (-2.5, 0.5), "delta": (-2.5, 0.5),
            "lambda1": (-2.5, -0.5), "lambda2": (-2.5, -0.5),
            "kappa1": (-3.5, -1.5), "kappa2": (-2.5, -0.5),
        }
        for _ in range(cfg.restarts):
            draw = theta.copy()
            for j, name in enumerate(names):
                if name in log_ranges:
                    value = 10 ** rng.uniform(*log_ranges[name])
                elif name in LATENT_NAMES:
                    anchor = max(float(obs.Q_obs[0]), 10.0)
                    value = 10 ** rng.uniform(
                        np.log10(max(anchor * 1e-2, 1.0)), np.log10(anchor * 1e2)
                    )
                else:  # curve midpoints lambda3, kappa3
                    value = rng.uniform(0.0, obs.n_days)
                draw[j] = np.clip(value, lo[j], hi[j])
            try:
                th_k, r_k, sse_k, its_k, conv_k = descend(draw)
            except NumericalError:
                continue
            iterations += its_k
            if sse_k < sse:
                theta, r, sse, converged = th_k, r_k, sse_k, conv_k

    params, latents = _unpack(theta, guess, cfg.fit_initial_latent)
    if latents is None:
        latents = fixed_latents
    return FitResult(
        params=params,
        latents=(float(latents[0]), float(latents[1])),
        sse=sse,
        iterations=iterations,
        converged=converged,
        residual=r,
    )
