import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from lsabr import coeffs
from lsabr.coeffs import variance_by_quadrature
from lsabr.model import ModelParams


def make_params(kappa=1.0, theta=0.2):
    return ModelParams(kappa=kappa, theta=theta, alpha=0.05, beta=0.6)


param_strategy = st.tuples(
    st.floats(min_value=0.05, max_value=8.0),    # kappa
    st.floats(min_value=0.1, max_value=0.5),     # theta
    st.floats(min_value=0.06, max_value=0.59),   # sigma
    st.floats(min_value=0.0, max_value=3.0),     # t
    st.floats(min_value=0.0, max_value=3.0),     # s
)


class TestFlow:
    def test_initial_value(self):
        p = make_params()
        sig = np.linspace(0.05, 0.6, 7)
        np.testing.assert_allclose(coeffs.flow(p, 0.0, sig), sig)

    def test_fixed_point(self):
        p = make_params()
        for t in (0.1, 1.0, 10.0):
            assert coeffs.flow(p, t, p.theta) == pytest.approx(p.theta)

    def test_long_time_limit(self):
        p = make_params(kappa=2.0)
        assert coeffs.flow(p, 50.0, 0.55) == pytest.approx(p.theta, abs=1e-12)

    def test_ode_oracle(self):
        # the flow solves sigma' = kappa (theta - sigma)
        p = make_params(kappa=1.7, theta=0.3)
        sol = solve_ivp(lambda t, y: p.kappa * (p.theta - y), (0.0, 2.0),
                        [0.55], rtol=1e-12, atol=1e-14, dense_output=True)
        for t in (0.3, 1.1, 2.0):
            assert coeffs.flow(p, t, 0.55) == pytest.approx(
                float(sol.sol(t)[0]), abs=1e-10)

    @given(param_strategy)
    @settings(max_examples=60, deadline=None)
    def test_semigroup_property(self, args):
        kappa, theta, sigma, t, s = args
        p = ModelParams(kappa=kappa, theta=theta, alpha=0.01, beta=1.0)
        lhs = coeffs.flow(p, t, coeffs.flow(p, s, sigma))
        rhs = coeffs.flow(p, t + s, sigma)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            coeffs.flow(make_params(), -0.1, 0.3)


class TestVariance:
    def test_zero_at_t0(self):
        p = make_params()
        assert coeffs.variance(p, 0.0, 0.3) == 0.0

    def test_quadrature_oracle(self):
        # variance must equal (1/2) int_0^t flow^2 computed independently
        for kappa in (0.1, 1.0, 5.0):
            p = make_params(kappa=kappa)
            for t in (0.05, 0.7, 2.5):
                for sigma in (0.07, 0.3, 0.58):
                    ref = variance_by_quadrature(p, t, sigma)
                    assert coeffs.variance(p, t, sigma) == pytest.approx(
                        ref, rel=1e-11, abs=1e-14)

    def test_reference_value(self):
        # half the integral of (0.2 + 0.2 e^{-s})^2 over [0,1]
        p = make_params()
        assert coeffs.variance(p, 1.0, 0.4) == pytest.approx(
            0.05393146952077619, rel=1e-14)

    @given(param_strategy)
    @settings(max_examples=60, deadline=None)
    def test_cocycle(self, args):
        kappa, theta, sigma, t, s = args
        p = ModelParams(kappa=kappa, theta=theta, alpha=0.01, beta=1.0)
        lhs = (coeffs.variance(p, t, sigma)
               + coeffs.variance(p, s, coeffs.flow(p, t, sigma)))
        assert lhs == pytest.approx(coeffs.variance(p, t + s, sigma),
                                    rel=1e-11, abs=1e-13)

    @given(param_strategy)
    @settings(max_examples=60, deadline=None)
    def test_dual_relation(self, args):
        kappa, theta, sigma, t, _ = args
        p = ModelParams(kappa=kappa, theta=theta, alpha=0.01, beta=1.0)
        lhs = coeffs.variance(p, t, sigma)
        rhs = coeffs.variance_dual(p, t, coeffs.flow(p, t, sigma))
        # the dual form amplifies rounding in its e^{kappa t} factors; the
        # identity itself only holds up to that conditioning
        rel = 1e-11 + np.exp(min(kappa * t, 40.0)) * 5e-16
        assert lhs == pytest.approx(rhs, rel=rel, abs=1e-13)

    def test_small_kappa_limit(self):
        p = ModelParams(kappa=1e-12, theta=0.2, alpha=0.05, beta=0.6)
        sig = np.linspace(0.05, 0.6, 11)
        for t in (0.1, 1.0, 2.0):
            np.testing.assert_allclose(coeffs.variance(p, t, sig),
                                       sig ** 2 * t / 2.0, rtol=1e-10)

    def test_sigma_derivative_vs_differences(self):
        p = make_params(kappa=1.3)
        eps = 1e-6
        for t in (0.2, 1.5):
            for sigma in (0.1, 0.3, 0.5):
                fd = (coeffs.variance(p, t, sigma + eps)
                      - coeffs.variance(p, t, sigma - eps)) / (2 * eps)
                assert coeffs.variance_sigma_derivative(
                    p, t, sigma) == pytest.approx(fd, rel=1e-8, abs=1e-10)


class TestDiscriminant:
    def test_zero_at_origin(self):
        assert coeffs.discriminant(make_params(), 0.0) == 0.0

    def test_negative_for_positive_time(self):
        for kappa in (0.01, 0.25, 1.0, 4.0, 20.0):
            p = make_params(kappa=kappa)
            t = np.linspace(1e-6, 5.0, 200)
            assert np.all(coeffs.discriminant(p, t) < 0)

    def test_reference_value(self):
        p = make_params()
        assert coeffs.discriminant(p, 1.0) == pytest.approx(
            -0.0013102382995186272, rel=1e-12)

    def test_series_matches_direct_across_cutoff(self):
        # the two evaluation branches must agree near the switch point
        p = make_params()
        for kt in np.linspace(0.35, 0.75, 41):
            pk = make_params(kappa=kt)  # kappa * t = kt at t = 1
            direct = (p.theta ** 2 / (2 * kt ** 2)
                      * ((2 + kt) * np.exp(-2 * kt) - 4 * np.exp(-kt) + 2 - kt))
            assert coeffs.discriminant(pk, 1.0) == pytest.approx(
                direct, rel=1e-9, abs=1e-18)

    def test_small_argument_stability(self):
        # raw formula suffers catastrophic cancellation here; series must not
        p = make_params(kappa=1e-7)
        val = coeffs.discriminant(p, 1e-2)
        # leading term is -theta^2 (kappa t)^4 / (12 kappa^2) * ...
        lead = -p.theta ** 2 / (2 * p.kappa ** 2) * (p.kappa * 1e-2) ** 4 / 6.0
        assert val == pytest.approx(lead, rel=1e-4)


class TestFloor:
    def test_rate_limit(self):
        p = make_params()
        assert coeffs.variance_rate_limit(p, 0.4) == pytest.approx(0.08)

    def test_floor_positive_and_attained(self):
        p = make_params()
        eps = coeffs.variance_floor(p, 2.0)
        assert eps > 0
        # must lower-bound variance(t, sigma)/t on a fine probe lattice
        ts = np.linspace(1e-4, 2.0, 101)[:, None]
        sig = np.linspace(p.alpha, p.beta, 101)[None, :]
        ratio = coeffs.variance(p, ts, sig) / ts
        assert eps <= np.min(ratio) + 1e-12

    def test_floor_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            coeffs.variance_floor(make_params(), 0.0)
