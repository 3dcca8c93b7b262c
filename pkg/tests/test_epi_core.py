import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epictrl.epi_core import (CompartmentState, EpidemicParams, controlled_rhs,
                              eval_mortality_rate, eval_recovery_rate,
                              uncontrolled_rhs)


def make_params(**overrides):
    base = dict(omega=0.05, beta=0.5, gamma=0.2, delta=0.3,
                lambda1=0.1, lambda2=0.05, lambda3=40.0,
                kappa1=0.002, kappa2=0.01, kappa3=60.0, N=1e6)
    base.update(overrides)
    return EpidemicParams(**base)


class TestRateCurves:
    def test_recovery_midpoint_is_half_plateau(self):
        p = make_params(lambda1=0.4, lambda2=0.9, lambda3=17.0)
        assert eval_recovery_rate(17.0, p) == pytest.approx(0.2, abs=1e-15)

    def test_recovery_saturates_at_plateau(self):
        p = make_params(lambda1=0.37, lambda2=0.05)
        assert eval_recovery_rate(p.lambda3 + 1e6, p) == pytest.approx(0.37, abs=1e-12)

    def test_recovery_fitted_midpoint_value(self):
        p = make_params(lambda1=0.0999, lambda2=0.0501, lambda3=38.8542)
        assert eval_recovery_rate(38.8542, p) == pytest.approx(0.04995, abs=1e-12)

    def test_mortality_peak_at_center(self):
        p = make_params(kappa1=0.006, kappa2=0.02, kappa3=66.0)
        assert eval_mortality_rate(66.0, p) == pytest.approx(0.003, abs=1e-15)

    def test_mortality_even_symmetry(self):
        p = make_params(kappa2=0.04, kappa3=50.0)
        for s in (0.5, 3.0, 21.0, 400.0):
            assert eval_mortality_rate(50.0 + s, p) == eval_mortality_rate(50.0 - s, p)

    def test_mortality_vanishes_far_away(self):
        p = make_params(kappa1=0.9, kappa2=0.5, kappa3=10.0)
        assert eval_mortality_rate(1e5, p) < 1e-300
        assert eval_mortality_rate(-1e5, p) < 1e-300

    @given(t=st.floats(-1e7, 1e7))
    @settings(max_examples=200)
    def test_rate_bounds(self, t):
        # the plateau is attained in floats once exp() underflows past one ulp
        p = make_params()
        lam = eval_recovery_rate(t, p)
        kap = eval_mortality_rate(t, p)
        assert 0.0 < lam <= p.lambda1
        assert 0.0 < kap <= p.kappa1 / 2

    def test_rate_bounds_strict_inside_resolvable_range(self):
        p = make_params()
        for t in np.linspace(p.lambda3 - 500.0, p.lambda3 + 500.0, 101):
            assert 0.0 < eval_recovery_rate(t, p) < p.lambda1

    def test_extreme_arguments_do_not_overflow(self):
        p = make_params(lambda2=5.0, kappa2=5.0)
        for t in (-1e12, 1e12):
            assert np.isfinite(eval_recovery_rate(t, p))
            assert np.isfinite(eval_mortality_rate(t, p))

    def test_array_evaluation(self):
        p = make_params()
        t = np.linspace(0.0, 90.0, 37)
        lam = eval_recovery_rate(t, p)
        assert lam.shape == t.shape
        assert np.all(np.diff(lam) > 0.0)  # rising sigmoid


class TestUncontrolledRhs:
    def test_direct_arithmetic(self):
        p = make_params(beta=0.5, omega=0.05, N=1000.0)
        x = np.array([900.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0])
        dx = uncontrolled_rhs(0.0, x, p)
        assert dx[0] == pytest.approx(-0.5 * 900 * 10 / 1000 - 0.05 * 900, rel=1e-15)

    def test_no_infection_only_protection_flows(self):
        p = make_params()
        x = np.array([1234.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        dx = uncontrolled_rhs(3.0, x, p)
        assert dx[0] == pytest.approx(-p.omega * 1234.0, rel=1e-15)
        assert dx[6] == pytest.approx(p.omega * 1234.0, rel=1e-15)
        np.testing.assert_allclose(dx[1:6], 0.0, atol=0.0)

    @given(values=st.lists(st.floats(0.0, 1e7), min_size=7, max_size=7),
           t=st.floats(0.0, 200.0))
    @settings(max_examples=200)
    def test_mass_balance(self, values, t):
        p = make_params()
        dx = uncontrolled_rhs(t, np.array(values), p)
        scale = max(1.0, np.abs(dx).max())
        assert abs(dx.sum()) <= 1e-12 * scale


class TestControlledRhs:
    def test_u_zero_matches_uncontrolled(self):
        p = make_params()
        x7 = np.array([9e5, 1e3, 2e3, 500.0, 100.0, 10.0, 50.0])
        x8 = np.append(x7, 0.0)
        np.testing.assert_array_equal(controlled_rhs(5.0, x8, p, 0.0)[:7],
                                      uncontrolled_rhs(5.0, x7, p))
        assert controlled_rhs(5.0, x8, p, 0.0)[7] == 0.0

    def test_full_vaccination_moves_susceptibles(self):
        p = make_params()
        x = np.array([100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        dx0 = controlled_rhs(0.0, x, p, 0.0)
        dx1 = controlled_rhs(0.0, x, p, 1.0)
        assert dx1[7] == pytest.approx(100.0, rel=1e-15)
        assert dx1[0] == pytest.approx(dx0[0] - 100.0, rel=1e-15)

    @given(values=st.lists(st.floats(0.0, 1e7), min_size=8, max_size=8),
           u=st.floats(0.0, 1.0), t=st.floats(0.0, 200.0))
    @settings(max_examples=200)
    def test_mass_balance(self, values, u, t):
        p = make_params()
        dx = controlled_rhs(t, np.array(values), p, u)
        scale = max(1.0, np.abs(dx).max())
        assert abs(dx.sum()) <= 1e-12 * scale

    @pytest.mark.parametrize("u", [-0.01, 1.01, float("nan"), 2.0])
    def test_rejects_unprojected_control(self, u):
        p = make_params()
        x = np.ones(8)
        with pytest.raises(ValueError, match="admissible"):
            controlled_rhs(0.0, x, p, u)

    def test_control_monotonicity_at_source(self):
        p = make_params()
        x = np.array([5e5, 1e3, 2e3, 500.0, 100.0, 10.0, 50.0, 0.0])
        ds = [controlled_rhs(0.0, x, p, u)[0] for u in (0.0, 0.3, 0.7, 1.0)]
        dw = [controlled_rhs(0.0, x, p, u)[7] for u in (0.0, 0.3, 0.7, 1.0)]
        assert all(a >= b for a, b in zip(ds, ds[1:]))
        assert all(a <= b for a, b in zip(dw, dw[1:]))


class TestTypes:
    def test_params_reject_negative_rates(self):
        with pytest.raises(ValueError, match="beta"):
            make_params(beta=-0.1)

    def test_params_reject_bad_population(self):
        with pytest.raises(ValueError, match="population"):
            make_params(N=0.0)

    def test_params_reject_plateau_above_one(self):
        with pytest.raises(ValueError, match="lambda1"):
            make_params(lambda1=1.5)
        with pytest.raises(ValueError, match="kappa1"):
            make_params(kappa1=1.5)

    def test_params_array_layout(self):
        p = make_params()
        arr = p.as_array()
        assert arr.shape == (11,)
        assert arr[0] == p.omega and arr[10] == p.N

    def test_state_vector_roundtrip(self):
        s = CompartmentState(S=1.0, E=2.0, I=3.0, Q=4.0, R=5.0, D=6.0, P=7.0, W=8.0)
        np.testing.assert_array_equal(s.as_vector(vaccinated=True),
                                      [1, 2, 3, 4, 5, 6, 7, 8])
        assert CompartmentState.from_vector(s.as_vector(vaccinated=True)) == s
        assert s.as_vector().shape == (7,)
        assert s.total() == 36.0

    def test_state_rejects_non_finite(self):
        with pytest.raises(ValueError):
            CompartmentState(S=float("nan"), E=0, I=0, Q=0, R=0, D=0, P=0)
