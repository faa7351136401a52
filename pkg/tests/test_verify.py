import json

import numpy as np
import pytest

from lsabr import coeffs, fdsolver, verify
from lsabr.model import Grid2D, ModelParams, Payoff, payoff_sample
from lsabr.verify import (CheckResult, SuiteReport, check_corrected_derivative,
                          check_hadamard, check_smoothing_decay,
                          default_study_params, default_study_payoff,
                          flow_compatible_band, oracle_profile,
                          run_error_study, run_identity_suite,
                          sigma_gaussian_profile, sigma_poly_profile,
                          smooth_bump, triple_oracle_check)


@pytest.fixture
def params():
    return ModelParams(kappa=1.0, theta=0.2, alpha=0.05, beta=0.6)


class TestReports:
    def test_check_result_verdict(self):
        assert CheckResult("a", 1e-9, 1e-6).passed
        assert not CheckResult("a", 1e-3, 1e-6).passed

    def test_suite_report_serialization(self):
        rep = SuiteReport("demo", (CheckResult("ok", 0.0, 1.0),
                                   CheckResult("bad", 2.0, 1.0)))
        assert not rep.verdict
        d = json.loads(rep.to_json())
        assert d["verdict"] == "fail"
        assert [c["id"] for c in d["checks"]] == ["bad", "ok"]
        text = rep.to_text()
        assert "FAIL" in text and "pass" in text

    def test_suite_report_all_pass(self):
        rep = SuiteReport("demo", (CheckResult("ok", 0.0, 1.0),))
        assert rep.verdict
        assert json.loads(rep.to_json())["verdict"] == "pass"


class TestIdentitySuite:
    def test_passes_on_medium_grid(self, params):
        g = Grid2D.regular(params, 101, 801, -4.0, 4.0)
        rep = run_identity_suite(params, g, tol=5e-3)
        assert rep.verdict, rep.to_text()

    def test_scalar_checks_tight(self, params):
        g = Grid2D.regular(params, 33, 65, -2.0, 2.0)
        rep = run_identity_suite(params, g, tol=1.0)
        scalars = [c for c in rep.checks if c.check_id.startswith("scalar/")]
        assert len(scalars) == 18  # 6 identities x 3 kappa values
        assert all(c.residual <= 1e-12 for c in scalars)

    def test_fingerprint_records_grid(self, params):
        g = Grid2D.regular(params, 33, 65, -2.0, 2.0)
        rep = run_identity_suite(params, g, tol=1.0)
        assert rep.fingerprint["grid"] == [33, 65]


class TestProfiles:
    def test_flow_compatible_band_inside_interval(self, params):
        a, b = flow_compatible_band(params, 1.0)
        assert params.alpha < a < b < params.beta
        # the flow images of the endpoints at any earlier time stay outside
        for t in (0.0, 0.5, 1.0):
            assert coeffs.flow(params, t, params.alpha) <= a
            assert coeffs.flow(params, t, params.beta) >= b

    def test_flow_compatible_band_too_long(self):
        p = ModelParams(kappa=50.0, theta=0.2, alpha=0.19, beta=0.21)
        with pytest.raises(ValueError, match="band"):
            flow_compatible_band(p, 10.0)

    def test_oracle_profile_vanishes_off_band(self, params):
        prof = oracle_profile(params, 1.0)
        a, b = flow_compatible_band(params, 1.0)
        s = np.array([params.alpha, a, b, params.beta])
        np.testing.assert_allclose(prof.phi(s), 0.0, atol=1e-14)
        assert prof.phi(np.array([0.5 * (a + b)]))[0] == pytest.approx(1.0)

    def test_oracle_profile_dphi_vs_differences(self, params):
        prof = oracle_profile(params, 1.0)
        a, b = flow_compatible_band(params, 1.0)
        s = np.linspace(a + 0.01, b - 0.01, 41)
        eps = 1e-7
        fd = (prof.phi(s + eps) - prof.phi(s - eps)) / (2 * eps)
        np.testing.assert_allclose(prof.dphi(s), fd, atol=1e-6)

    def test_composite_exact_matches_quadrature(self, params):
        g = Grid2D.regular(params, 41, 2001, -4.0, 4.0)
        prof = oracle_profile(params, 0.5)
        t = 0.5
        from lsabr import semigroups
        exact = prof.composite_exact(params, t, g)
        quad = semigroups.composite_apply_rows(
            params, t, prof.sample_transported(params, t, g),
            semigroups.QuadratureSpec(m=401))
        assert np.max(np.abs(exact.values - quad.values)) < 1e-5

    def test_poly_profile_requires_heat_psi_for_exact(self, params):
        g = Grid2D.regular(params, 11, 21, -1.0, 1.0)
        prof = verify.SmoothProfile(phi=lambda s: s, dphi=lambda s: 1 + 0 * s,
                                    psi=lambda x: np.exp(-x * x))
        with pytest.raises(ValueError, match="closed-form"):
            prof.composite_exact(params, 0.5, g)

    def test_smooth_bump_support(self):
        z = np.linspace(-1, 2, 301)
        v = smooth_bump(z, 0.0, 1.0)
        assert np.all(v[z <= 0.0] == 0.0)
        assert np.all(v[z >= 1.0] == 0.0)
        assert v[np.argmin(np.abs(z - 0.5))] == pytest.approx(1.0, abs=1e-3)


class TestHadamard:
    def test_tiny_residual(self, params):
        g = Grid2D.regular(params, 65, 33, -2.0, 2.0)
        for prof in (sigma_poly_profile(2), sigma_gaussian_profile(0.3, 0.1)):
            assert check_hadamard(params, 0.7, prof, g) < 1e-13


class TestCorrectedDerivative:
    def test_trivial_for_sigma_constant_data(self, params):
        # phi constant: both sides reduce to the same dD/dsigma * B term
        g = Grid2D.regular(params, 81, 161, -4.0, 4.0)
        prof = sigma_poly_profile(0)
        assert check_corrected_derivative(params, 0.5, prof, g) < 5e-2

    def test_second_order_convergence(self, params):
        prof = sigma_gaussian_profile(0.3, 0.08)
        res = []
        for n in (81, 161):
            g = Grid2D.regular(params, n, 2 * n - 1, -4.0, 4.0)
            res.append(check_corrected_derivative(params, 0.5, prof, g))
        assert np.log2(res[0] / res[1]) > 1.8


class TestErrorStudy:
    def test_input_validation(self, params):
        g = Grid2D.regular(params, 17, 33, -2.0, 2.0)
        h = payoff_sample(Payoff.gaussian_bump(0.0, 0.5), g)
        scheme = fdsolver.ThetaScheme(0.5, 0.01)
        with pytest.raises(ValueError, match="nu"):
            run_error_study(params, [0.0, 0.1], 0.5, g, scheme, h)
        with pytest.raises(ValueError, match="multiple"):
            run_error_study(params, [0.1], 0.505, g, scheme, h)

    def test_report_round_trip(self, params):
        g = Grid2D.regular(params, 25, 49, -3.0, 3.0)
        h = payoff_sample(default_study_payoff(g, params, 0.2), g)
        rep = run_error_study(params, [0.1, 0.2], 0.2, g,
                              fdsolver.ThetaScheme(0.5, 0.02), h)
        d = json.loads(rep.to_json())
        assert d["nu_values"] == [0.1, 0.2]
        assert len(d["errors"]) == 2
        assert d["errors"][0] < d["errors"][1]
        assert d["status"] in ("ok", "invalid")


class TestSmoothing:
    def test_report_structure(self, params):
        g = Grid2D.regular(params, 9, 257, -3.0, 3.0)
        rep = check_smoothing_decay(params, 1.0, g, ks=(1,),
                                    times=2.0 ** np.arange(-5, 0))
        assert set(rep.exponents) == {1}
        assert len(rep.ratios[1]) == 5
        d = rep.to_dict()
        assert "1" in d["exponents"] and "1" in d["bound_ok"]


class TestTripleOracle:
    def test_small_grid_agreement(self, params):
        pb = ModelParams(kappa=0.04, theta=0.325, alpha=0.05, beta=0.6)
        g = Grid2D.regular(pb, 30, 60, -3.7, 3.7)
        prof = oracle_profile(pb, 0.5, x_width=0.8)
        diffs = triple_oracle_check(pb, g, 0.5,
                                    fdsolver.ThetaScheme(0.5, 5e-3), prof)
        assert set(diffs) == {"closed_vs_expm", "closed_vs_step",
                              "expm_vs_step"}
        assert max(diffs.values()) < 5e-4
