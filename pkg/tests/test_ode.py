import numpy as np
import pytest

from epictrl.errors import NumericalError
from epictrl.kernels import integrate_uncontrolled
from epictrl.ode import TimeGrid, Trajectory, integrate, rk4_step
from tests.conftest import ITALY_PARAMS


class TestTimeGrid:
    def test_node_count_and_spacing(self):
        grid = TimeGrid(0.0, 91.0, 10)
        assert grid.n_nodes == 911
        assert grid.h == 0.1
        assert grid.times[0] == 0.0
        assert grid.times[-1] == pytest.approx(91.0, abs=1e-12)

    def test_day_indices(self):
        grid = TimeGrid(0.0, 3.0, 4)
        np.testing.assert_array_equal(grid.day_indices(), [0, 4, 8, 12])

    @pytest.mark.parametrize("bad", [dict(t0=1.0, tf=1.0), dict(t0=2.0, tf=1.0)])
    def test_rejects_empty_window(self, bad):
        with pytest.raises(ValueError):
            TimeGrid(steps_per_day=10, **bad)

    def test_rejects_fractional_step_count(self):
        with pytest.raises(ValueError, match="integer"):
            TimeGrid(0.0, 1.05, 3)

    def test_rejects_nonpositive_steps(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 0)


class TestRk4Step:
    def test_zero_field_keeps_state(self):
        x = np.array([3.0, -1.0, 7.5])
        out = rk4_step(lambda t, x: np.zeros_like(x), 2.0, x, 0.25)
        np.testing.assert_array_equal(out, x)

    def test_linear_decay_matches_stability_polynomial(self):
        # hand oracle: 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
        h = 0.1
        expected = 1.0 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
        assert expected == pytest.approx(0.90483750, abs=5e-9)
        out = rk4_step(lambda t, x: -x, 0.0, np.array([1.0]), h)
        assert out[0] == pytest.approx(expected, abs=1e-15)

    def test_polynomial_rate_is_integrated_exactly(self):
        out = rk4_step(lambda t, x: np.array([t]), 0.0, np.array([0.0]), 1.0)
        assert out[0] == 0.5

    def test_cubic_rate_is_integrated_exactly(self):
        out = rk4_step(lambda t, x: np.array([4.0 * t**3]), 0.0, np.array([0.0]), 1.0)
        assert out[0] == pytest.approx(1.0, abs=1e-15)

    def test_backward_step_inverts_forward_to_scheme_order(self):
        # round trip cancels through O(h^4); the residual is the O(h^5) local error
        x = np.array([1.0])
        fwd = rk4_step(lambda t, x: -x, 0.0, x, 0.1)
        back = rk4_step(lambda t, x: -x, 0.1, fwd, -0.1)
        assert back[0] == pytest.approx(1.0, abs=3e-8)

    def test_zero_step_rejected(self):
        with pytest.raises(ValueError):
            rk4_step(lambda t, x: x, 0.0, np.array([1.0]), 0.0)

    def test_non_finite_stage_names_the_stage(self):
        def rhs(t, x):
            return np.array([np.inf]) if t > 0.04 else -x

        with pytest.raises(NumericalError, match="k2"):
            rk4_step(rhs, 0.0, np.array([1.0]), 0.1)


class TestIntegrate:
    def test_zero_field_constant_trajectory(self):
        grid = TimeGrid(0.0, 2.0, 5)
        traj = integrate(lambda t, x: np.zeros_like(x), grid, np.array([4.0, -2.0]))
        assert np.all(traj.values == [4.0, -2.0])

    def test_order_four_convergence_on_linear_decay(self):
        errors = []
        steps = [5, 10, 20, 40]  # h = 0.2, 0.1, 0.05, 0.025
        for spd in steps:
            grid = TimeGrid(0.0, 1.0, spd)
            traj = integrate(lambda t, x: -x, grid, np.array([1.0]))
            errors.append(abs(traj.values[-1, 0] - np.exp(-1.0)))
        h = 1.0 / np.array(steps, dtype=float)
        slope = np.polyfit(np.log(h), np.log(errors), 1)[0]
        assert slope == pytest.approx(4.0, abs=0.2)

    def test_backward_fills_forward_time_order(self):
        grid = TimeGrid(0.0, 1.0, 10)
        back = integrate(lambda t, x: -x, grid, np.array([1.0]), direction="backward")
        # terminal data sits at the last node; values grow toward t0
        assert back.values[-1, 0] == 1.0
        assert back.values[0, 0] == pytest.approx(np.e, rel=1e-6)
        np.testing.assert_array_equal(back.times, grid.times)

    def test_forward_backward_same_node_timestamps(self):
        grid = TimeGrid(0.0, 2.0, 7)
        fwd = integrate(lambda t, x: -x, grid, np.array([1.0]))
        back = integrate(lambda t, x: -x, grid, np.array([1.0]), direction="backward")
        np.testing.assert_array_equal(fwd.times, back.times)

    def test_determinism_bitwise(self, italy_x0):
        grid = TimeGrid(0.0, 30.0, 10)
        rhs = lambda t, x: -0.3 * x  # noqa: E731
        a = integrate(rhs, grid, np.array([1.0, 2.0]))
        b = integrate(rhs, grid, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(a.values, b.values)

    def test_divergent_rhs_reports_node(self):
        def rhs(t, x):
            return x * 200.0  # overflows quickly

        grid = TimeGrid(0.0, 10.0, 10)
        with pytest.raises(NumericalError, match="node"):
            integrate(rhs, grid, np.array([1.0]))

    def test_rejects_bad_initial_data(self):
        grid = TimeGrid(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            integrate(lambda t, x: -x, grid, np.array([np.nan]))
        with pytest.raises(ValueError):
            integrate(lambda t, x: -x, grid, np.array([1.0]), direction="sideways")

    def test_mass_balance_on_long_epidemic_run(self, italy_x0):
        # 92-day window at 10 steps/day keeps the compartment sum constant
        grid = TimeGrid(0.0, 92.0, 10)
        values = integrate_uncontrolled(ITALY_PARAMS.as_array(), italy_x0,
                                        grid.t0, grid.h, grid.n_steps)
        totals = values.sum(axis=1)
        assert np.abs(totals - totals[0]).max() <= 1e-6 * ITALY_PARAMS.N


class TestTrajectory:
    def test_shape_validation(self):
        grid = TimeGrid(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            Trajectory(grid, np.zeros((5, 2)))
        with pytest.raises(ValueError):
            Trajectory(grid, np.full((3, 2), np.nan))

    def test_linear_interpolation_between_nodes(self):
        grid = TimeGrid(0.0, 1.0, 2)
        traj = Trajectory(grid, np.array([[0.0], [1.0], [4.0]]))
        assert traj.sample_at(0.25)[0] == pytest.approx(0.5)
        assert traj.sample_at(0.75)[0] == pytest.approx(2.5)
        assert traj.sample_at(1.0)[0] == pytest.approx(4.0)

    def test_daily_subsampling(self):
        grid = TimeGrid(0.0, 2.0, 3)
        traj = Trajectory(grid, np.arange(7.0)[:, None])
        np.testing.assert_array_equal(traj.daily().ravel(), [0.0, 3.0, 6.0])
