import numpy as np
import pytest

from lsabr import coeffs, fdsolver, semigroups, verify
from lsabr.model import (Field, Grid2D, ModelParams, Payoff, payoff_sample,
                         weighted_l2_distance, weighted_l2_norm)
from lsabr.fdsolver import (ThetaScheme, assemble, expm_apply, expm_oracle,
                            garding_check, load_checkpoint, params_hash,
                            save_checkpoint, step)


@pytest.fixture
def params():
    return ModelParams(kappa=1.0, theta=0.2, nu=0.2, rho=0.3,
                       alpha=0.05, beta=0.6)


@pytest.fixture
def grid(params):
    return Grid2D.regular(params, 21, 41, -2.0, 2.0)


class TestAssemble:
    def test_unknown_generator(self, params, grid):
        with pytest.raises(ValueError, match="generator"):
            assemble(params, grid, "Q")

    def test_ellipticity_guard(self, grid):
        p0 = ModelParams(kappa=1.0, theta=0.2, nu=0.0, alpha=0.05, beta=0.6)
        with pytest.raises(ValueError, match="degenerate"):
            assemble(p0, grid, "L", require_elliptic=True)

    def test_a_exact_on_affine(self, params, grid):
        # centered (and one-sided) first differences are exact on sigma - theta
        op = assemble(params, grid, "A")
        u = Field.from_function(grid, lambda s, x: (s - params.theta)
                                + 0.0 * x)
        out = op.apply(u)
        expect = -params.kappa * (grid.sigma_nodes - params.theta)
        np.testing.assert_allclose(out.values[1:-1, 1:-1],
                                   np.tile(expect[1:-1, None], (1, 39)),
                                   atol=1e-12)

    def test_a_annihilates_constants(self, params, grid):
        op = assemble(params, grid, "A")
        u = Field(np.ones(grid.shape), grid)
        np.testing.assert_allclose(op.apply(u).values, 0.0, atol=1e-12)

    def test_all_derivative_generators_kill_constants(self, params, grid):
        u = Field(np.ones(grid.shape), grid)
        for tag in fdsolver.GENERATORS:
            op = assemble(params, grid, tag)
            np.testing.assert_allclose(op.apply(u).values, 0.0, atol=1e-11,
                                       err_msg=tag)

    def test_b_annihilates_exp_x(self, params):
        g = Grid2D.regular(params, 5, 201, -2.0, 2.0)
        op = assemble(params, g, "B")
        u = Field.from_function(g, lambda s, x: np.exp(x) + 0.0 * s)
        out = op.apply(u)
        inner = np.abs(g.x_nodes[1:-1]) <= 1.0
        assert np.max(np.abs(out.values[1:-1, 1:-1][:, inner])) < 1e-3

    def test_l0_is_a_plus_weighted_b(self, params, grid):
        a = assemble(params, grid, "A").full
        b_rows = assemble(params, grid, "L0").full - a
        # compare against sigma^2/2-weighted B on a probe field
        rng = np.random.default_rng(0)
        u = rng.standard_normal(grid.shape).ravel()
        direct = assemble(params, grid, "B").full @ u
        weighted = (0.5 * grid.sigma_nodes ** 2)[:, None].repeat(
            grid.n_x, axis=1).ravel() * direct
        np.testing.assert_allclose(b_rows @ u, weighted, atol=1e-10)

    def test_consistency_order_full_generator(self, params):
        # analytic Lu on a smooth manufactured function vs the stencil
        def u_fn(s, x):
            return np.sin(2 * s + 0.3) * np.exp(-x * x / 2.0)

        def lu_fn(s, x):
            g = np.exp(-x * x / 2.0)
            u_s = 2 * np.cos(2 * s + 0.3) * g
            u_ss = -4 * np.sin(2 * s + 0.3) * g
            u_x = np.sin(2 * s + 0.3) * (-x) * g
            u_xx = np.sin(2 * s + 0.3) * (x * x - 1.0) * g
            u_sx = 2 * np.cos(2 * s + 0.3) * (-x) * g
            p = params
            return (p.kappa * (p.theta - s) * u_s
                    + 0.5 * s ** 2 * (u_xx - u_x)
                    + p.nu * p.rho * s ** 2 * u_sx
                    + 0.5 * p.nu ** 2 * s ** 2 * u_ss)

        errs = []
        for n in (33, 65, 129):
            g = Grid2D.regular(params, n, 2 * n - 1, -2.0, 2.0)
            op = assemble(params, g, "L")
            u = Field.from_function(g, u_fn)
            ref = Field.from_function(g, lu_fn)
            # skip the one-sided sigma rows (first-order by design)
            d = (op.apply(u).values - ref.values)[2:-2, 1:-1]
            errs.append(np.max(np.abs(d)))
        order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
        assert min(order) >= 1.8


class TestThetaScheme:
    def test_validation(self):
        with pytest.raises(ValueError):
            ThetaScheme(theta_weight=1.5)
        with pytest.raises(ValueError):
            ThetaScheme(dt=0.0)

    def test_explicit_stability_guard(self, params, grid):
        op = assemble(params, grid, "L0")
        u = payoff_sample(Payoff.gaussian_bump(0.0, 0.5), grid)
        with pytest.raises(ValueError, match="stability"):
            step(op, ThetaScheme(theta_weight=0.0, dt=1.0), u, 1)

    def test_zero_steps_identity(self, params, grid):
        op = assemble(params, grid, "L0")
        u = payoff_sample(Payoff.gaussian_bump(0.0, 0.5), grid)
        out = step(op, ThetaScheme(0.5, 1e-2), u, 0)
        np.testing.assert_array_equal(out.values, u.values)

    def test_grid_mismatch(self, params, grid):
        op = assemble(params, grid, "L0")
        other = Grid2D.regular(params, 11, 21, -2.0, 2.0)
        u = Field(np.zeros(other.shape), other)
        with pytest.raises(ValueError, match="grid"):
            step(op, ThetaScheme(0.5, 1e-2), u, 1)

    def test_cn_temporal_order(self, params):
        # Richardson in dt against a quadruple-dt reference
        g = Grid2D.regular(params, 17, 33, -2.0, 2.0)
        op = assemble(params, g, "L")
        u = payoff_sample(
            Payoff.gaussian_bump(0.0, 0.6,
                                 sigma_profile=verify.smooth_bump(
                                     g.sigma_nodes, 0.1, 0.5)), g)
        t = 0.5
        ref = step(op, ThetaScheme(0.5, t / 512), u, 512)
        e = [weighted_l2_distance(step(op, ThetaScheme(0.5, t / n), u, n), ref)
             for n in (16, 32, 64)]
        orders = [np.log2(e[i] / e[i + 1]) for i in range(2)]
        assert min(orders) >= 1.8

    def test_maximum_principle_sanity(self, params):
        g = Grid2D.regular(params, 21, 41, -2.0, 2.0)
        u = payoff_sample(
            Payoff.gaussian_bump(0.0, 0.6,
                                 sigma_profile=verify.smooth_bump(
                                     g.sigma_nodes, 0.1, 0.5)), g)
        for tag in ("A", "B", "L0"):
            op = assemble(params, g, tag)
            out = step(op, ThetaScheme(0.5, 1e-3), u, 100)
            assert out.values.min() >= -1e-8 * np.max(np.abs(u.values)), tag


class TestExpm:
    def test_identity_at_t0(self, params):
        g = Grid2D.regular(params, 9, 11, -1.0, 1.0)
        op = assemble(params, g, "L0")
        e = expm_oracle(op, 0.0)
        np.testing.assert_allclose(e, np.eye(op.n_interior), atol=1e-14)

    def test_exponential_law(self, params):
        g = Grid2D.regular(params, 20, 40, -2.0, 2.0)
        op = assemble(params, g, "L0")
        et = expm_oracle(op, 0.3)
        es = expm_oracle(op, 0.2)
        ets = expm_oracle(op, 0.5)
        assert np.max(np.abs(et @ es - ets)) < 1e-10

    def test_agrees_with_step(self, params):
        # x-window wide enough that the bump vanishes at the Dirichlet rows
        g = Grid2D.regular(params, 20, 40, -3.0, 3.0)
        op = assemble(params, g, "L0")
        u = payoff_sample(
            Payoff.gaussian_bump(0.0, 0.5,
                                 sigma_profile=verify.smooth_bump(
                                     g.sigma_nodes, 0.1, 0.5)), g)
        a = expm_apply(op, 0.5, u)
        b = step(op, ThetaScheme(0.5, 1e-3), u, 500)
        assert weighted_l2_distance(a, b) <= 1e-6

    def test_size_guard(self, params):
        g = Grid2D.regular(params, 80, 80, -2.0, 2.0)
        op = assemble(params, g, "L0")
        with pytest.raises(ValueError, match="too large"):
            expm_oracle(op, 0.1)


class TestGarding:
    def test_b_rows_dissipative(self, params, grid):
        rep = garding_check(assemble(params, grid, "B"), trials=100, seed=1)
        assert rep.max_rayleigh <= 1e-10
        assert rep.quasi_dissipative

    def test_transport_quasi_dissipative(self, params, grid):
        rep = garding_check(assemble(params, grid, "A"), trials=100, seed=1)
        # generator bound: growth at most kappa/2, plus discretization slack
        assert rep.c2 <= params.kappa / 2.0 + 0.2

    def test_full_generator_coercive(self, params, grid):
        rep = garding_check(assemble(params, grid, "L"), trials=200, seed=0)
        assert rep.c1 > 0
        assert np.isfinite(rep.c2)

    def test_deterministic(self, params, grid):
        op = assemble(params, grid, "L")
        assert garding_check(op, 50, seed=9) == garding_check(op, 50, seed=9)


class TestCheckpoint:
    def test_round_trip(self, params, grid, tmp_path):
        u = payoff_sample(Payoff.gaussian_bump(0.0, 0.5), grid)
        path = str(tmp_path / "state.csv")
        scheme = ThetaScheme(0.5, 0.01)
        save_checkpoint(path, u, 0.75, scheme, "L0", params)
        v, meta = load_checkpoint(path)
        np.testing.assert_array_equal(u.values, v.values)
        assert meta["generator"] == "L0"
        assert float(meta["t"]) == 0.75
        assert float(meta["dt"]) == 0.01
        assert meta["params"] == params_hash(params)

    def test_hash_sensitivity(self, params):
        assert params_hash(params) != params_hash(params.with_nu(0.3))
