"""Numerical verification suites: algebraic identity checks for the exact
semigroup factorization, cross-validation of three independent computations
of the same semigroup, commutator identities, derivative-propagation
identities, smoothing-rate measurements, and the volvol error-scaling study.

Every suite is a pure function of (params, grid, seed) and produces a
deterministic report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import coeffs, fdsolver, semigroups
from .model import (Field, Grid2D, ModelParams, Payoff, WeightSpec,
                    payoff_sample, weighted_l2_norm)
from .semigroups import QuadratureSpec

__all__ = [
    "CheckResult",
    "SuiteReport",
    "ErrorStudyReport",
    "SmoothProfile",
    "SmoothingReport",
    "run_identity_suite",
    "flow_compatible_band",
    "oracle_profile",
    "sigma_poly_profile",
    "sigma_gaussian_profile",
    "smooth_bump",
    "heat_call_field",
    "check_hadamard",
    "check_corrected_derivative",
    "run_error_study",
    "check_smoothing_decay",
    "triple_oracle_check",
    "default_study_params",
    "default_study_payoff",
]


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: tuple[CheckResult, ...]
    fingerprint: dict = dc_field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "fingerprint": self.fingerprint,
            "checks": [
                {"id": c.check_id, "residual": c.residual, "tol": c.tol,
                 "pass": c.passed}
                for c in sorted(self.checks, key=lambda c: c.check_id)
            ],
            "verdict": "pass" if self.verdict else "fail",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"suite: {self.suite}"]
        for c in sorted(self.checks, key=lambda c: c.check_id):
            mark = "pass" if c.passed else "FAIL"
            lines.append(f"  {c.check_id:<40s} {c.residual:12.4e}  "
                         f"tol {c.tol:8.1e}  {mark}")
        lines.append(f"verdict: {'pass' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def _fingerprint(p: ModelParams, g: Grid2D | None = None, seed=None) -> dict:
    fp = {"kappa": p.kappa, "theta": p.theta, "nu": p.nu, "rho": p.rho,
          "alpha": p.alpha, "beta": p.beta, "lambda": p.lam}
    if g is not None:
        fp["grid"] = [g.n_sigma, g.n_x]
        fp["x_range"] = [float(g.x_nodes[0]), float(g.x_nodes[-1])]
    if seed is not None:
        fp["seed"] = seed
    return fp


# ---------------------------------------------------------------------------
# identity suite

_SCALAR_TOL = 1e-12


def _scalar_identity_residuals(p: ModelParams, n_lattice: int = 32) -> dict:
    """Max residuals of the closed-form identities on an n^3 (t, s, sigma)
    lattice."""
    ts = np.linspace(0.0, 2.0, n_lattice)
    sig = np.linspace(p.alpha, p.beta, n_lattice)
    t = ts[:, None, None]
    s = ts[None, :, None]
    o = sig[None, None, :]

    flow_res = np.max(np.abs(
        coeffs.flow(p, t, coeffs.flow(p, s, o)) - coeffs.flow(p, t + s, o)))
    cocycle_res = np.max(np.abs(
        coeffs.variance(p, t, o)
        + coeffs.variance(p, s, coeffs.flow(p, t, o))
        - coeffs.variance(p, t + s, o)))
    dual_res = np.max(np.abs(
        coeffs.variance(p, t, o)
        - coeffs.variance_dual(p, t, coeffs.flow(p, t, o))))
    var0 = np.max(np.abs(coeffs.variance(p, 0.0, sig)))
    tp = ts[ts > 0]
    var_pos = float(np.min(coeffs.variance(p, tp[:, None], sig[None, :])))
    disc_neg = float(np.max(coeffs.discriminant(p, tp)))
    return {
        "flow_semigroup": float(flow_res),
        "variance_cocycle": float(cocycle_res),
        "variance_dual_relation": float(dual_res),
        "variance_at_zero": float(var0),
        "variance_positivity_margin": var_pos,   # must be > 0
        "discriminant_sign_margin": disc_neg,    # must be < 0
    }


def run_identity_suite(p: ModelParams, g: Grid2D,
                       q: QuadratureSpec | None = None,
                       tol: float = 1e-6) -> SuiteReport:
    """Scalar identities at 1e-12 plus field identities (semigroup law,
    cross-commutation, ordering equivalence) at the given tolerance."""
    checks = []
    for kappa in (0.25, 1.0, 4.0):
        pk = p.with_kappa(kappa)
        res = _scalar_identity_residuals(pk)
        tag = f"kappa={kappa:g}"
        checks += [
            CheckResult(f"scalar/flow_semigroup[{tag}]",
                        res["flow_semigroup"], _SCALAR_TOL),
            CheckResult(f"scalar/variance_cocycle[{tag}]",
                        res["variance_cocycle"], _SCALAR_TOL),
            CheckResult(f"scalar/variance_dual_relation[{tag}]",
                        res["variance_dual_relation"], _SCALAR_TOL),
            CheckResult(f"scalar/variance_at_zero[{tag}]",
                        res["variance_at_zero"], _SCALAR_TOL),
            # sign conditions: encode as residual 0 when satisfied
            CheckResult(f"scalar/variance_positive[{tag}]",
                        0.0 if res["variance_positivity_margin"] > 0 else np.inf,
                        _SCALAR_TOL),
            CheckResult(f"scalar/discriminant_negative[{tag}]",
                        0.0 if res["discriminant_sign_margin"] < 0 else np.inf,
                        _SCALAR_TOL),
        ]

    prof = 1.0 + 0.5 * np.sin(np.pi * (g.sigma_nodes - p.alpha) / (p.beta - p.alpha))
    h = payoff_sample(Payoff.gaussian_bump(0.0, 0.5, sigma_profile=prof), g)
    w = WeightSpec(p.lam)
    nh = weighted_l2_norm(h, w)

    def rel(a: Field, b: Field) -> float:
        return weighted_l2_norm(Field(a.values - b.values, g), w) / nh

    lhs = semigroups.composite_apply(
        p, 0.5, semigroups.composite_apply(p, 0.5, h, q), q)
    rhs = semigroups.composite_apply(p, 1.0, h, q)
    checks.append(CheckResult("field/semigroup_law[t=s=0.5]", rel(lhs, rhs), tol))

    for t in (0.25, 1.0):
        a = semigroups.composite_apply(p, t, h, q, "heat_after_transport")
        b = semigroups.composite_apply(p, t, h, q, "transport_after_heat")
        checks.append(
            CheckResult(f"field/ordering_equivalence[t={t:g}]", rel(a, b), tol))

    t = 0.5
    gfun = g.sigma_nodes ** 2 / 4.0
    gflow = coeffs.flow(p, t, g.sigma_nodes) ** 2 / 4.0
    lhs = semigroups.transport_apply(p, t, semigroups.heat_apply(gfun, h, q))
    rhs = semigroups.heat_apply(gflow, semigroups.transport_apply(p, t, h), q)
    checks.append(CheckResult("field/cross_commutation[g=sigma^2/4]",
                              rel(lhs, rhs), tol))

    return SuiteReport("identities", tuple(checks), _fingerprint(p, g))


# ---------------------------------------------------------------------------
# analytic test profiles

@dataclass(frozen=True)
class SmoothProfile:
    """Separable analytic test datum phi(sigma) * psi(x) with exact
    sigma-derivative, for identity checks that need analytic derivatives.

    heat_psi, when given, is the exact heat-with-drift action on psi as a
    function (tau, x) -> values (available in closed form e.g. for Gaussian
    psi); it lets oracle comparisons bypass quadrature and interpolation
    entirely.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    psi: Callable[[np.ndarray], np.ndarray]
    heat_psi: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def composite_exact(self, p: ModelParams, t: float, g: Grid2D) -> Field:
        """Closed-form composite semigroup value phi(delta_t(sigma)) *
        (e^{D(t,sigma)B} psi)(x); requires heat_psi."""
        if self.heat_psi is None:
            raise ValueError("profile has no closed-form heat action")
        tau = coeffs.variance(p, t, g.sigma_nodes)
        moved = self.phi(coeffs.flow(p, t, g.sigma_nodes))
        rows = self.heat_psi(tau[:, None], g.x_nodes[None, :])
        return Field(moved[:, None] * rows, g)

    def sample(self, g: Grid2D) -> Field:
        return Field(np.outer(self.phi(g.sigma_nodes), self.psi(g.x_nodes)), g)

    def sample_dsigma(self, g: Grid2D) -> Field:
        return Field(np.outer(self.dphi(g.sigma_nodes), self.psi(g.x_nodes)), g)

    def sample_transported(self, p: ModelParams, t: float, g: Grid2D) -> Field:
        d = coeffs.flow(p, t, g.sigma_nodes)
        return Field(np.outer(self.phi(d), self.psi(g.x_nodes)), g)

    def sample_dsigma_transported(self, p: ModelParams, t: float, g: Grid2D) -> Field:
        d = coeffs.flow(p, t, g.sigma_nodes)
        return Field(np.outer(self.dphi(d), self.psi(g.x_nodes)), g)


def flow_compatible_band(p: ModelParams, horizon: float,
                         margin: float = 0.005) -> tuple[float, float]:
    """Largest sigma-band (a, b) such that data supported in it keeps the
    exact solution zero on the sigma-boundary rows up to the horizon: the
    flow images of alpha and beta never enter the band."""
    a = float(coeffs.flow(p, horizon, p.alpha)) + margin
    b = float(coeffs.flow(p, horizon, p.beta)) - margin
    if not a < b:
        raise ValueError("no flow-compatible band: horizon too long for the "
                         "volatility interval")
    return a, b


def oracle_profile(p: ModelParams, horizon: float,
                   x_width: float = 0.8) -> SmoothProfile:
    """Boundary-compatible analytic datum for oracle comparisons: sin^4
    sigma-arch on the flow-compatible band times a Gaussian in x whose heat
    action is known in closed form."""
    a, b = flow_compatible_band(p, horizon)
    scale = np.pi / (b - a)

    def phi(s):
        u = np.clip((np.asarray(s, dtype=float) - a) / (b - a), 0.0, 1.0)
        return np.sin(np.pi * u) ** 4

    def dphi(s):
        u = np.clip((np.asarray(s, dtype=float) - a) / (b - a), 0.0, 1.0)
        return 4.0 * scale * np.sin(np.pi * u) ** 3 * np.cos(np.pi * u)

    return SmoothProfile(
        phi=phi, dphi=dphi,
        psi=lambda x: np.exp(-(np.asarray(x, dtype=float) / x_width) ** 2 / 2.0),
        heat_psi=lambda tau, x: semigroups.heat_gaussian_closed_form(
            tau, x, 0.0, x_width))


def _default_psi():
    """Gaussian x-profile exp(-x^2) together with its closed-form heat
    action (width 1/sqrt(2) in the heat_gaussian_closed_form convention)."""
    w = 1.0 / np.sqrt(2.0)
    return (lambda x: np.exp(-np.asarray(x, dtype=float) ** 2),
            lambda tau, x: semigroups.heat_gaussian_closed_form(tau, x, 0.0, w))


def sigma_poly_profile(degree: int, psi=None) -> SmoothProfile:
    heat_psi = None
    if psi is None:
        psi, heat_psi = _default_psi()
    return SmoothProfile(phi=lambda s: s ** degree,
                         dphi=lambda s: degree * s ** (degree - 1)
                         if degree > 0 else np.zeros_like(s),
                         psi=psi, heat_psi=heat_psi)


def sigma_gaussian_profile(center: float, width: float, psi=None) -> SmoothProfile:
    heat_psi = None
    if psi is None:
        psi, heat_psi = _default_psi()

    def phi(s):
        z = (s - center) / width
        return np.exp(-z * z / 2.0)

    def dphi(s):
        z = (s - center) / width
        return -z / width * np.exp(-z * z / 2.0)

    return SmoothProfile(phi=phi, dphi=dphi, psi=psi, heat_psi=heat_psi)


def check_hadamard(p: ModelParams, t: float, profile: SmoothProfile,
                   g: Grid2D) -> float:
    """Residual of the transport/derivative commutation
    e^{tA} d_sigma = e^{kappa t} d_sigma e^{tA} on an analytic profile.

    Both sides are evaluated with analytic sigma-derivatives (the identity
    is exact: d_sigma[h(delta_t(sigma))] = e^{-kappa t} h'(delta_t(sigma))),
    so the residual is rounding only.
    """
    lhs = profile.sample_dsigma_transported(p, t, g)
    # d_sigma (e^{tA} h) via the chain rule: flow'(sigma) = e^{-kappa t}
    dflow = np.exp(-p.kappa * t)
    rhs_vals = np.exp(p.kappa * t) * dflow * lhs.values
    scale = max(float(np.max(np.abs(lhs.values))), 1e-300)
    return float(np.max(np.abs(lhs.values - rhs_vals))) / scale


def check_corrected_derivative(p: ModelParams, t: float,
                               profile: SmoothProfile, g: Grid2D,
                               q: QuadratureSpec | None = None) -> float:
    """Residual of the derivative-propagation identity
    d_sigma S(t) xi = e^{-kappa t} S(t) d_sigma xi
                      + (dD/dsigma) B S(t) xi,
    with d_sigma of the left side by centered differencing across rows, B by
    centered x-differences, and the transported data sampled analytically.
    Residual is O(h^2) under grid refinement (profiles carrying a
    closed-form heat action avoid a quadrature floor)."""
    if profile.heat_psi is not None:
        u = profile.composite_exact(p, t, g)
        d = coeffs.flow(p, t, g.sigma_nodes)
        tau = coeffs.variance(p, t, g.sigma_nodes)
        rows = profile.heat_psi(tau[:, None], g.x_nodes[None, :])
        udd = Field(profile.dphi(d)[:, None] * rows, g)
    else:
        u = semigroups.composite_apply_rows(
            p, t, profile.sample_transported(p, t, g), q)
        udd = semigroups.composite_apply_rows(
            p, t, profile.sample_dsigma_transported(p, t, g), q)

    sig = g.sigma_nodes
    hx = g.dx
    v = u.values
    # centered d_sigma of S(t)xi on interior rows (uniform sigma grid assumed
    # for the check; Grid2D.regular grids are uniform)
    dsig = (v[2:, :] - v[:-2, :]) / (sig[2:] - sig[:-2])[:, None]
    # B = d_x^2 - d_x by centered differences, interior columns
    bxx = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / hx ** 2
    bx = (v[:, 2:] - v[:, :-2]) / (2.0 * hx)
    bu = bxx - bx
    dvar = coeffs.variance_sigma_derivative(p, t, sig)
    rhs = (np.exp(-p.kappa * t) * udd.values[1:-1, 1:-1]
           + dvar[1:-1, None] * bu[1:-1, :])
    lhs = dsig[:, 1:-1]
    scale = max(float(np.max(np.abs(lhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs))) / scale


# ---------------------------------------------------------------------------
# error-scaling study

@dataclass(frozen=True)
class ErrorStudyReport:
    """(nu, error) pairs with the fitted log-log slope.

    fd_floor is the pure discretization error at nu = 0; the study is valid
    only when it sits well below the measured errors.
    """

    nu_values: tuple[float, ...]
    errors: tuple[float, ...]
    fitted_slope: float | None
    fd_floor: float
    constant_primary: float     # max e / (nu (||h|| + nu ||d_sigma h||))
    constant_alternate: float   # max e / (nu (||h|| + ||d_sigma h||))
    status: str                 # 'ok' | 'invalid'
    fingerprint: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "nu_values": list(self.nu_values),
            "errors": list(self.errors),
            "fitted_slope": self.fitted_slope,
            "fd_floor": self.fd_floor,
            "constant_primary": self.constant_primary,
            "constant_alternate": self.constant_alternate,
            "status": self.status,
            "fingerprint": self.fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def smooth_bump(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """C^inf bump supported on (lo, hi): exp(1 - 1/(1 - u^2)) with
    u = (2z - lo - hi)/(hi - lo)."""
    u = (2.0 * np.asarray(z, dtype=float) - lo - hi) / (hi - lo)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def default_study_params() -> ModelParams:
    return ModelParams(kappa=1.0, theta=0.2, nu=0.0, rho=0.3,
                       alpha=0.05, beta=0.6, lam=0.0)


def default_study_payoff(g: Grid2D, p: ModelParams,
                         horizon: float = 1.0) -> Payoff:
    """Gaussian bump in x (center 0, width 0.5) times a sin^4 sigma-arch on
    the flow-compatible band, so the zero Dirichlet rows stay exact up to
    the horizon."""
    prof = oracle_profile(p, horizon, x_width=0.5)
    return Payoff.gaussian_bump(0.0, 0.5,
                                sigma_profile=prof.phi(g.sigma_nodes))


def _dsigma_norm(h: Field, w: WeightSpec) -> float:
    sig = h.grid.sigma_nodes
    d = (h.values[2:, :] - h.values[:-2, :]) / (sig[2:] - sig[:-2])[:, None]
    inner = Field(np.pad(d, ((1, 1), (0, 0))), h.grid)
    return weighted_l2_norm(inner, w)


def run_error_study(p_base: ModelParams, nu_list, t: float, g: Grid2D,
                    scheme: fdsolver.ThetaScheme, h: Field,
                    q: QuadratureSpec | None = None,
                    reference: Field | None = None) -> ErrorStudyReport:
    """Compare the finite-difference solution of the full generator with the
    exact zero-volvol semigroup across a volvol sweep.

    For each nu, solve du/dt = L u to horizon t and measure the weighted L2
    distance to the exact zero-volvol evolution of the same datum.  The
    nu = 0 run measures the pure discretization floor.  The slope is fitted
    by OLS on log-log points with errors above 5x the floor excluded only
    when contaminated.
    """
    nu_list = sorted(float(v) for v in nu_list)
    if any(v <= 0 for v in nu_list):
        raise ValueError("nu values must be > 0 (the floor run is implicit)")
    w = WeightSpec(p_base.lam)
    if reference is None:
        reference = semigroups.composite_apply(p_base, t, h, q)
    n_steps = int(round(t / scheme.dt))
    if abs(n_steps * scheme.dt - t) > 1e-12 * max(t, 1.0):
        raise ValueError("horizon must be an integer multiple of dt")

    def fd_error(nu: float) -> float:
        pn = p_base.with_nu(nu)
        op = fdsolver.assemble(pn, g, "L")
        u = fdsolver.step(op, scheme, h, n_steps)
        return weighted_l2_norm(Field(u.values - reference.values, g), w)

    fd_floor = fd_error(0.0)
    errors = [fd_error(nu) for nu in nu_list]

    status = "ok" if fd_floor < min(errors) / 5.0 else "invalid"
    usable = [(nu, e) for nu, e in zip(nu_list, errors) if e > 5.0 * fd_floor]
    slope = None
    if len(usable) >= 2:
        ln = np.log([nu for nu, _ in usable])
        le = np.log([e for _, e in usable])
        slope = float(np.polyfit(ln, le, 1)[0])

    nh = weighted_l2_norm(h, w)
    nd = _dsigma_norm(h, w)
    c_primary = max(e / (nu * (nh + nu * nd)) for nu, e in zip(nu_list, errors))
    c_alt = max(e / (nu * (nh + nd)) for nu, e in zip(nu_list, errors))

    return ErrorStudyReport(
        nu_values=tuple(nu_list), errors=tuple(errors), fitted_slope=slope,
        fd_floor=fd_floor, constant_primary=float(c_primary),
        constant_alternate=float(c_alt), status=status,
        fingerprint=_fingerprint(p_base, g) | {
            "t": t, "dt": scheme.dt, "theta_weight": scheme.theta_weight})


# ---------------------------------------------------------------------------
# smoothing decay

@dataclass(frozen=True)
class SmoothingReport:
    exponents: dict         # k -> fitted log-log exponent
    ratios: dict            # k -> list of (t, ||d_x^k S(t) h|| / ||h||)
    bound_ok: dict          # k -> exponent >= -k/2 - 0.15

    def to_dict(self) -> dict:
        return {
            "exponents": {str(k): v for k, v in self.exponents.items()},
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "bound_ok": {str(k): v for k, v in self.bound_ok.items()},
        }


def check_smoothing_decay(p: ModelParams, strike: float, g: Grid2D,
                          ks=(1, 2), times=None) -> SmoothingReport:
    """Measure ||d_x^k S(t) h|| / ||h|| for the call payoff across dyadic
    times and fit the log-log decay exponent.

    The composite action on the sigma-independent call is evaluated in
    closed form; derivatives are centered differences on the grid.  The
    assertion recorded is that the measured exponent does not blow up
    faster than the operator bound t^{-k/2}.
    """
    if times is None:
        times = 2.0 ** np.arange(-8, 0)
    w = WeightSpec(p.lam)
    h = payoff_sample(Payoff.call(strike), g)
    nh = weighted_l2_norm(h, w)
    hx = g.dx
    exponents, ratios, bound_ok = {}, {}, {}
    for k in ks:
        pts = []
        for t in times:
            tau = coeffs.variance(p, t, g.sigma_nodes)
            u = heat_call_field(tau, g, strike)
            d = u.values
            for _ in range(k):
                d = np.gradient(d, hx, axis=1)
            nrm = weighted_l2_norm(Field(d, g), w)
            pts.append((float(t), nrm / nh))
        ratios[k] = pts
        lt = np.log([t for t, _ in pts])
        lr = np.log([r for _, r in pts])
        expo = float(np.polyfit(lt, lr, 1)[0])
        exponents[k] = expo
        bound_ok[k] = expo >= -k / 2.0 - 0.15
    return SmoothingReport(exponents=exponents, ratios=ratios, bound_ok=bound_ok)


def heat_call_field(tau: np.ndarray, g: Grid2D, strike: float) -> Field:
    """Rows of the closed-form heat action on the call, one tau per row."""
    vals = semigroups.heat_call_closed_form(
        np.asarray(tau)[:, None], g.x_nodes[None, :], strike)
    return Field(vals, g)


# ---------------------------------------------------------------------------
# triple oracle

def triple_oracle_check(p: ModelParams, g: Grid2D, t: float,
                        scheme: fdsolver.ThetaScheme,
                        profile: SmoothProfile,
                        q: QuadratureSpec | None = None) -> dict:
    """Three independent computations of the degenerate semigroup on the
    same datum: closed-form composite, dense matrix exponential of the
    discretized generator, and theta-scheme stepping.  Returns pairwise
    weighted-L2 differences relative to ||h||."""
    w = WeightSpec(p.lam)
    h = profile.sample(g)
    nh = weighted_l2_norm(h, w)
    if profile.heat_psi is not None:
        closed = profile.composite_exact(p, t, g)
    else:
        closed = semigroups.composite_apply_rows(
            p, t, profile.sample_transported(p, t, g), q)
    op = fdsolver.assemble(p, g, "L0")
    dense = fdsolver.expm_apply(op, t, h)
    stepped = fdsolver.step(op, scheme, h, int(round(t / scheme.dt)))

    def rel(a, b):
        return weighted_l2_norm(Field(a.values - b.values, g), w) / nh

    return {
        "closed_vs_expm": rel(closed, dense),
        "closed_vs_step": rel(closed, stepped),
        "expm_vs_step": rel(dense, stepped),
    }
