"""Exact semigroup actions for the zero-volvol factorization.

heat_apply       : Gaussian convolution in x with a per-sigma time change
                   (variance 2*tau, drift -tau), i.e. the heat-with-drift
                   factor.
transport_apply  : composition with the mean-reversion flow in sigma.
composite_apply  : the product semigroup, in either operator ordering.
kernel_density   : the Gaussian pricing kernel.
price_zero_volvol: closed-form call price under the composite semigroup.

All operations are pure and stateless; rows of heat_apply are independent
and summed in a fixed order, so results do not depend on scheduling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtr

from . import coeffs
from .model import Field, Grid2D, ModelParams

__all__ = [
    "QuadratureSpec",
    "TruncationWarning",
    "heat_apply",
    "heat_call_closed_form",
    "heat_gaussian_closed_form",
    "transport_apply",
    "composite_apply",
    "kernel_density",
    "price_zero_volvol",
]


class TruncationWarning(UserWarning):
    """Raised (as a warning) when the truncated convolution tail estimate
    exceeds the accepted tolerance relative to the input field."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Rule controlling the Gaussian-convolution accuracy.

    rule 'trapezoid': m points on a window of c standard deviations.
    rule 'gauss_hermite': order-n Gauss-Hermite rule.
    """

    rule: str = "trapezoid"
    n: int = 64
    m: int = 801
    c: float = 8.0

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss_hermite"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.n < 8:
            raise ValueError("gauss_hermite order must be >= 8")
        if self.m < 51 or self.m % 2 == 0:
            raise ValueError("trapezoid point count must be odd and >= 51")
        if self.c < 4:
            raise ValueError("truncation width must be >= 4 standard deviations")


_TRUNCATION_TOL = 1e-10


def _heat_row(row: np.ndarray, x: np.ndarray, tau: float,
              q: QuadratureSpec) -> np.ndarray:
    """Convolve one row with the Gaussian kernel of variance 2*tau and
    drift -tau; off-grid values by linear interpolation with flat
    extrapolation (np.interp semantics)."""
    std = np.sqrt(2.0 * tau)
    if q.rule == "gauss_hermite":
        u, w = np.polynomial.hermite.hermgauss(q.n)
        y = x[:, None] - tau + np.sqrt(2.0) * std * u[None, :]
        vals = np.interp(y.ravel(), x, row).reshape(y.shape)
        return vals @ (w / np.sqrt(np.pi))
    s = np.linspace(-q.c * std, q.c * std, q.m)
    ds = s[1] - s[0]
    w = np.exp(-s * s / (4.0 * tau)) / np.sqrt(4.0 * np.pi * tau) * ds
    w[0] *= 0.5
    w[-1] *= 0.5
    y = x[:, None] + (s[None, :] - tau)
    vals = np.interp(y.ravel(), x, row).reshape(y.shape)
    return vals @ w


def heat_apply(tau, h: Field, q: QuadratureSpec | None = None) -> Field:
    """Apply the heat-with-drift factor row by row.

    tau is a scalar or an array of per-sigma-node times (>= 0).  Rows with
    tau = 0 pass through unchanged.  If the Gaussian tail outside the
    truncation window is estimated above 1e-10 * max|h|, a
    TruncationWarning is issued (the result is still returned).
    """
    if q is None:
        q = QuadratureSpec()
    g = h.grid
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (g.n_sigma,))
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0 at every sigma node")
    if q.rule == "trapezoid" and np.any(h.values):
        tail = erfc(q.c / np.sqrt(2.0))
        if tail > _TRUNCATION_TOL:
            warnings.warn(
                f"truncated convolution tail estimate {tail:.3e} exceeds "
                f"{_TRUNCATION_TOL:.0e} of the field scale", TruncationWarning)
    out = np.empty_like(h.values)
    x = g.x_nodes
    for i in range(g.n_sigma):
        if tau[i] == 0.0:
            out[i] = h.values[i]
        else:
            out[i] = _heat_row(h.values[i], x, float(tau[i]), q)
    return Field(out, g)


def heat_gaussian_closed_form(tau, x, center, width):
    """Heat-with-drift factor applied to the Gaussian datum
    exp(-(y-center)^2 / (2 width^2)): another Gaussian,
    width/sqrt(width^2+2 tau) * exp(-(x - tau - center)^2/(2(width^2+2 tau))).
    """
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    if not width > 0:
        raise ValueError("width must be > 0")
    v = width * width + 2.0 * tau
    out = width / np.sqrt(v) * np.exp(-((x - tau - center) ** 2) / (2.0 * v))
    return out if out.ndim else float(out)


def heat_call_closed_form(tau, x, strike):
    """Heat-with-drift factor applied to the call payoff max(e^x - K, 0):
    e^x Phi(d+) - K Phi(d-) with d+- = (x - ln K +- tau)/sqrt(2 tau)."""
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be > 0 (at tau = 0 use the payoff itself)")
    if not strike > 0:
        raise ValueError("strike must be > 0")
    root = np.sqrt(2.0 * tau)
    m = x - np.log(strike)
    out = np.exp(x) * ndtr((m + tau) / root) - strike * ndtr((m - tau) / root)
    return out if out.ndim else float(out)


def transport_apply(p: ModelParams, t: float, h: Field) -> Field:
    """Compose with the mean-reversion flow: output row at sigma is h
    evaluated at delta_t(sigma), linearly interpolated between grid rows.

    The flow maps [alpha, beta] into itself, so no extrapolation occurs.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    g = h.grid
    dest = coeffs.flow(p, t, g.sigma_nodes)
    s = g.sigma_nodes
    idx = np.clip(np.searchsorted(s, dest) - 1, 0, g.n_sigma - 2)
    w = (dest - s[idx]) / (s[idx + 1] - s[idx])
    w = np.clip(w, 0.0, 1.0)
    vals = (1.0 - w)[:, None] * h.values[idx] + w[:, None] * h.values[idx + 1]
    return Field(vals, g)


def composite_apply(p: ModelParams, t: float, h: Field,
                    q: QuadratureSpec | None = None,
                    ordering: str = "heat_after_transport") -> Field:
    """The composite zero-volvol semigroup.

    'heat_after_transport' computes heat(variance(t, .)) o transport(t);
    'transport_after_heat' computes transport(t) o heat(variance_dual(t, .)).
    The two agree up to quadrature/interpolation tolerance; at t = 0 both
    are the identity.
    """
    if ordering not in ("heat_after_transport", "transport_after_heat"):
        raise ValueError(f"unknown ordering {ordering!r}")
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0:
        return Field(h.values.copy(), h.grid)
    sig = h.grid.sigma_nodes
    if ordering == "heat_after_transport":
        tau = coeffs.variance(p, t, sig)
        return heat_apply(tau, transport_apply(p, t, h), q)
    tau = coeffs.variance_dual(p, t, sig)
    return transport_apply(p, t, heat_apply(tau, h, q))


def composite_apply_rows(p: ModelParams, t: float, transported: Field,
                         q: QuadratureSpec | None = None) -> Field:
    """Composite action when the transported datum h(delta_t(sigma), x) has
    already been sampled exactly (e.g. from an analytic profile); applies
    only the heat factor with tau = variance(t, sigma)."""
    if t == 0:
        return Field(transported.values.copy(), transported.grid)
    tau = coeffs.variance(p, t, transported.grid.sigma_nodes)
    return heat_apply(tau, transported, q)


def kernel_density(p: ModelParams, t: float, sigma, x, y):
    """Gaussian pricing-kernel density
    (4 pi D)^{-1/2} exp(-(x - y - D)^2 / (4 D)) with D = variance(t, sigma).

    Undefined at t = 0 (point mass), hence t > 0 is required.  Maximized
    over y at y = x - D and integrates to 1 in y.
    """
    if not t > 0:
        raise ValueError("kernel density requires t > 0")
    d = coeffs.variance(p, t, np.asarray(sigma, dtype=float))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - y - d
    out = np.exp(-z * z / (4.0 * d)) / np.sqrt(4.0 * np.pi * d)
    return out if out.ndim else float(out)


def price_zero_volvol(p: ModelParams, t: float, strike: float, sigma, x):
    """Zero-volvol call price: the call payoff is sigma-independent, so the
    transport factor is inert and the price is the closed-form heat value at
    tau = variance(t, sigma); at t = 0 it is the payoff itself."""
    if t < 0:
        raise ValueError("time must be >= 0")
    if not strike > 0:
        raise ValueError("strike must be > 0")
    sigma = np.asarray(sigma, dtype=float)
    x = np.asarray(x, dtype=float)
    if t == 0:
        out = np.maximum(np.exp(x) - strike, 0.0) + 0.0 * sigma
        return out if out.ndim else float(out)
    tau = coeffs.variance(p, t, sigma)
    return heat_call_closed_form(tau, x, strike)
