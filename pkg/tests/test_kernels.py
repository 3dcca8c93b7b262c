"""Fused-loop kernels against the generic integrator and brute-force oracles."""

import os
import subprocess
import sys

import numpy as np
import pytest

from epictrl import kernels
from epictrl._accel import NUMBA_ENABLED
from epictrl.epi_core import controlled_rhs, uncontrolled_rhs
from epictrl.ode import TimeGrid, Trajectory, integrate
from tests.conftest import ITALY_PARAMS


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(0.0, 30.0, 10)


@pytest.fixture(scope="module")
def x0():
    n = ITALY_PARAMS.N
    return np.array([n - 795_348.0, 341_570.0, 103_778.0, 351_000.0,
                     290_000.0, 39_000.0, 0.0])


def test_uncontrolled_matches_generic_integrator(grid, x0):
    fused = kernels.integrate_uncontrolled(ITALY_PARAMS.as_array(), x0,
                                           grid.t0, grid.h, grid.n_steps)
    generic = integrate(lambda t, x: uncontrolled_rhs(t, x, ITALY_PARAMS), grid, x0)
    np.testing.assert_allclose(fused, generic.values, rtol=1e-13, atol=1e-9)


def test_controlled_matches_generic_integrator(grid, x0):
    rng = np.random.default_rng(7)
    u = rng.uniform(0.0, 1.0, grid.n_nodes)
    x8 = np.append(x0, 0.0)
    fused = kernels.integrate_controlled(ITALY_PARAMS.as_array(), x8, u,
                                         grid.t0, grid.h, grid.n_steps)

    # generic path: the control enters through the same nodal interpolation
    def rhs(t, x):
        pos = (t - grid.t0) / grid.h
        idx = int(np.clip(np.floor(pos + 1e-9), 0, grid.n_steps - 1))
        frac = pos - idx
        ut = (1.0 - frac) * u[idx] + frac * u[idx + 1]
        return controlled_rhs(t, x, ITALY_PARAMS, min(max(ut, 0.0), 1.0))

    generic = integrate(rhs, grid, x8)
    np.testing.assert_allclose(fused, generic.values, rtol=1e-10, atol=1e-6)


def test_controlled_with_zero_control_reduces_to_uncontrolled(grid, x0):
    u = np.zeros(grid.n_nodes)
    x8 = np.append(x0, 0.0)
    ctrl = kernels.integrate_controlled(ITALY_PARAMS.as_array(), x8, u,
                                        grid.t0, grid.h, grid.n_steps)
    unctrl = kernels.integrate_uncontrolled(ITALY_PARAMS.as_array(), x0,
                                            grid.t0, grid.h, grid.n_steps)
    np.testing.assert_array_equal(ctrl[:, :7], unctrl)
    assert np.all(ctrl[:, 7] == 0.0)


def test_adjoint_backward_matches_generic_integrator(grid, x0):
    from epictrl.ocp import ObjectiveWeights, adjoint_rhs

    rng = np.random.default_rng(3)
    u = rng.uniform(0.0, 1.0, grid.n_nodes)
    x8 = np.append(x0, 0.0)
    p_arr = ITALY_PARAMS.as_array()
    x_traj = kernels.integrate_controlled(p_arr, x8, u, grid.t0, grid.h, grid.n_steps)
    fused = kernels.integrate_adjoint_backward(p_arr, 1.0, x_traj, u, grid.t0, grid.h)

    state = Trajectory(grid, x_traj)
    w = ObjectiveWeights(1.0, 1.0)

    def rhs(t, psi):
        pos = (t - grid.t0) / grid.h
        idx = int(np.clip(np.floor(pos + 1e-9), 0, grid.n_steps - 1))
        frac = pos - idx
        ut = (1.0 - frac) * u[idx] + frac * u[idx + 1]
        xt = state.sample_at(t)
        return adjoint_rhs(t, psi, xt, min(max(ut, 0.0), 1.0), ITALY_PARAMS, w)

    generic = integrate(rhs, grid, np.zeros(8), direction="backward")
    scale = np.abs(fused).max()
    assert np.abs(fused - generic.values).max() <= 1e-10 * scale


def test_adjoint_rows_five_to_eight_identically_zero(grid, x0):
    u = np.full(grid.n_nodes, 0.25)
    x8 = np.append(x0, 0.0)
    p_arr = ITALY_PARAMS.as_array()
    x_traj = kernels.integrate_controlled(p_arr, x8, u, grid.t0, grid.h, grid.n_steps)
    psi = kernels.integrate_adjoint_backward(p_arr, 1.0, x_traj, u, grid.t0, grid.h)
    assert np.all(psi[:, 4:] == 0.0)


def test_heat_march_against_loop_reference():
    # independent brute-force FTCS with explicit loops on a small grid
    nr, nz = 9, 7
    rng = np.random.default_rng(11)
    u0 = rng.uniform(0.0, 1.0, (nr, nz))
    u0[-1, :] = 0.0
    dr, dz, dt, alpha, steps = 0.01, 0.012, 0.9, 2.3e-5, 40

    def reference(u0, dirichlet):
        u = u0.copy()
        if dirichlet:
            u[:, 0] = 0.0
            u[:, -1] = 0.0
        for _ in range(steps):
            nxt = u.copy()
            for i in range(nr - 1):
                for j in range(nz):
                    if j == 0:
                        uzz = (0.0 if dirichlet else 2.0 * (u[i, 1] - u[i, 0]) / dz**2)
                    elif j == nz - 1:
                        uzz = (0.0 if dirichlet else 2.0 * (u[i, -2] - u[i, -1]) / dz**2)
                    else:
                        uzz = (u[i, j + 1] - 2 * u[i, j] + u[i, j - 1]) / dz**2
                    if i == 0:
                        urr = 4.0 * (u[1, j] - u[0, j]) / dr**2
                    else:
                        r = i * dr
                        urr = ((u[i + 1, j] - 2 * u[i, j] + u[i - 1, j]) / dr**2
                               + (u[i + 1, j] - u[i - 1, j]) / (2 * dr * r))
                    nxt[i, j] = u[i, j] + alpha * dt * uzz + alpha * dt * urr
            nxt[-1, :] = 0.0
            if dirichlet:
                nxt[:, 0] = 0.0
                nxt[:, -1] = 0.0
            u = nxt
        return u

    fr = alpha * dt / dr**2
    fz = alpha * dt / dz**2
    r = np.arange(nr) * dr
    drift = alpha * dt / (2.0 * dr * r[1:-1])
    crp = (fr + drift)[:, None]
    crm = (fr - drift)[:, None]
    for dirichlet in (False, True):
        u0c = u0.copy()
        if dirichlet:
            u0c[:, 0] = 0.0
            u0c[:, -1] = 0.0
        fast = kernels.heat_march(u0c, crp, crm, fr, fz, steps, dirichlet)
        slow = reference(u0, dirichlet)
        np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)


def test_rate_kernels_match_public_curves():
    from epictrl.epi_core import eval_mortality_rate, eval_recovery_rate

    p = ITALY_PARAMS
    for t in (-20.0, 0.0, 38.8542, 70.0, 500.0):
        assert kernels.recovery_rate(t, p.lambda1, p.lambda2, p.lambda3) == pytest.approx(
            eval_recovery_rate(t, p), rel=1e-14
        )
        assert kernels.mortality_rate(t, p.kappa1, p.kappa2, p.kappa3) == pytest.approx(
            eval_mortality_rate(t, p), rel=1e-14
        )


@pytest.mark.skipif(not NUMBA_ENABLED, reason="already running the fallback path")
def test_fallback_path_matches_jit_path(grid, x0, tmp_path):
    """EPICTRL_NO_NUMBA=1 must produce the same trajectories."""
    fused = kernels.integrate_uncontrolled(ITALY_PARAMS.as_array(), x0,
                                           grid.t0, grid.h, grid.n_steps)
    ref = tmp_path / "ref.npy"
    np.save(ref, fused)
    script = (
        "import numpy as np\n"
        "from epictrl import kernels\n"
        "from epictrl._accel import NUMBA_ENABLED\n"
        "assert not NUMBA_ENABLED\n"
        f"p = np.load({str(tmp_path / 'p.npy')!r})\n"
        f"x0 = np.load({str(tmp_path / 'x0.npy')!r})\n"
        f"out = kernels.integrate_uncontrolled(p, x0, {grid.t0!r}, {grid.h!r}, {grid.n_steps})\n"
        f"ref = np.load({str(ref)!r})\n"
        "np.testing.assert_allclose(out, ref, rtol=1e-13)\n"
        "print('fallback-ok')\n"
    )
    np.save(tmp_path / "p.npy", ITALY_PARAMS.as_array())
    np.save(tmp_path / "x0.npy", x0)
    env = dict(os.environ, EPICTRL_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", script], env=env,
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "fallback-ok" in proc.stdout
