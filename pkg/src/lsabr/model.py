"""Domain types: model parameters, tensor-product grids, sampled fields,
payoffs, and exponentially weighted L2 norms.

All types are immutable after construction and all operations are pure, so
everything here is safe to share across threads.

Weight convention: the weighted norm of a field f is the plain L2 norm of
e^{-lam*<x>} f, where <x> = sqrt(1+x^2).  A larger lam therefore means a
*smaller* norm for the same f.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ModelParams",
    "Grid2D",
    "Field",
    "Payoff",
    "WeightSpec",
    "japanese_bracket",
    "weighted_l2_norm",
    "payoff_sample",
    "field_to_csv",
    "field_from_csv",
]

_CSV_HEADER = "sigma,x,value"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the mean-reverting SABR generator.

    kappa : mean-reversion speed, > 0
    theta : long-run volatility level, > 0
    nu    : volvol, >= 0
    rho   : correlation, |rho| < 1
    alpha, beta : volatility interval endpoints, 0 < alpha < theta < beta
    lam   : weight exponent of the exponentially weighted L2 space, >= 0
    """

    kappa: float
    theta: float
    nu: float = 0.0
    rho: float = 0.0
    alpha: float = 0.05
    beta: float = 0.6
    lam: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not (0 < self.alpha < self.theta < self.beta < np.inf):
            raise ValueError(
                "volatility interval must satisfy 0 < alpha < theta < beta, "
                f"got alpha={self.alpha}, theta={self.theta}, beta={self.beta}"
            )
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    def with_nu(self, nu: float) -> "ModelParams":
        return ModelParams(self.kappa, self.theta, nu, self.rho,
                           self.alpha, self.beta, self.lam)

    def with_kappa(self, kappa: float) -> "ModelParams":
        return ModelParams(kappa, self.theta, self.nu, self.rho,
                           self.alpha, self.beta, self.lam)


@dataclass(frozen=True)
class Grid2D:
    """Tensor-product (sigma, x) grid.

    sigma_nodes are strictly increasing; x_nodes are strictly increasing and
    uniformly spaced (relative tolerance 1e-12 on the spacing).
    """

    sigma_nodes: np.ndarray
    x_nodes: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma_nodes, dtype=float)
        x = np.asarray(self.x_nodes, dtype=float)
        object.__setattr__(self, "sigma_nodes", s)
        object.__setattr__(self, "x_nodes", x)
        if s.ndim != 1 or s.size < 3:
            raise ValueError("need at least 3 sigma nodes")
        if x.ndim != 1 or x.size < 3:
            raise ValueError("need at least 3 x nodes")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sigma nodes must be strictly increasing")
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise ValueError("x nodes must be strictly increasing")
        h = dx[0]
        if np.max(np.abs(dx - h)) > 1e-12 * max(abs(h), 1.0):
            raise ValueError("x nodes must be uniformly spaced")
        s.setflags(write=False)
        x.setflags(write=False)

    @property
    def n_sigma(self) -> int:
        return self.sigma_nodes.size

    @property
    def n_x(self) -> int:
        return self.x_nodes.size

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_sigma, self.n_x)

    @staticmethod
    def regular(p: ModelParams, n_sigma: int, n_x: int,
                x_min: float, x_max: float) -> "Grid2D":
        """Uniform grid covering the full strip [alpha,beta] x [x_min,x_max]."""
        return Grid2D(np.linspace(p.alpha, p.beta, n_sigma),
                      np.linspace(x_min, x_max, n_x))


@dataclass(frozen=True)
class Field:
    """Function values sampled on a Grid2D, indexed (sigma, x)."""

    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        v.setflags(write=False)

    @staticmethod
    def from_function(g: Grid2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        """Sample f(sigma, x) on the grid (f must broadcast)."""
        s = g.sigma_nodes[:, None]
        x = g.x_nodes[None, :]
        return Field(np.broadcast_to(np.asarray(f(s, x), dtype=float), g.shape).copy(), g)


@dataclass(frozen=True)
class WeightSpec:
    """Exponential weight e^{lam*<x>} with <x> the Japanese bracket."""

    lam: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    def weight(self, x: np.ndarray) -> np.ndarray:
        """Weight value e^{lam*<x>}; strictly positive."""
        return np.exp(self.lam * japanese_bracket(x))


def japanese_bracket(x):
    """<x> = sqrt(1 + x^2).  Even, >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.sqrt(1.0 + x * x)
    return out if out.ndim else float(out)


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.empty_like(nodes)
    w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    w[0] = 0.5 * (nodes[1] - nodes[0])
    w[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return w


def weighted_l2_norm(f: Field, w: WeightSpec | None = None) -> float:
    """Trapezoid approximation of the L2 norm of e^{-lam*<x>} f over the grid."""
    if w is None:
        w = WeightSpec(0.0)
    g = f.grid
    damp = np.exp(-w.lam * japanese_bracket(g.x_nodes))
    ws = _trapezoid_weights(g.sigma_nodes)
    wx = _trapezoid_weights(g.x_nodes)
    sq = (f.values * damp[None, :]) ** 2
    return float(np.sqrt(ws @ sq @ wx))


def weighted_l2_distance(f: Field, g: Field, w: WeightSpec | None = None) -> float:
    """Weighted norm of f - g; the two fields must share a grid."""
    if f.grid is not g.grid and (
            not np.array_equal(f.grid.sigma_nodes, g.grid.sigma_nodes)
            or not np.array_equal(f.grid.x_nodes, g.grid.x_nodes)):
        raise ValueError("fields live on different grids")
    return weighted_l2_norm(Field(f.values - g.values, f.grid), w)


@dataclass(frozen=True)
class Payoff:
    """Initial datum for the pricing problem.

    kind is one of 'call', 'gaussian_bump', 'exp_x', 'constant', 'tabulated'.
    sigma_profile, if given, is a per-sigma-node factor multiplying the
    x-profile (it must match the sampling grid's sigma axis).
    """

    kind: str
    strike: float = 0.0
    center: float = 0.0
    width: float = 0.0
    value: float = 0.0
    table: Field | None = None
    sigma_profile: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("call", "gaussian_bump", "exp_x", "constant", "tabulated"):
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "call" and not self.strike > 0:
            raise ValueError("call strike must be > 0")
        if self.kind == "gaussian_bump" and not self.width > 0:
            raise ValueError("gaussian bump width must be > 0")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated payoff needs a table")
        if self.sigma_profile is not None:
            prof = np.asarray(self.sigma_profile, dtype=float)
            object.__setattr__(self, "sigma_profile", prof)
            prof.setflags(write=False)

    @staticmethod
    def call(strike: float, sigma_profile=None) -> "Payoff":
        return Payoff("call", strike=strike, sigma_profile=sigma_profile)

    @staticmethod
    def gaussian_bump(center: float, width: float, sigma_profile=None) -> "Payoff":
        return Payoff("gaussian_bump", center=center, width=width,
                      sigma_profile=sigma_profile)

    @staticmethod
    def exp_x(sigma_profile=None) -> "Payoff":
        return Payoff("exp_x", sigma_profile=sigma_profile)

    @staticmethod
    def constant(c: float, sigma_profile=None) -> "Payoff":
        return Payoff("constant", value=c, sigma_profile=sigma_profile)

    @staticmethod
    def tabulated(table: Field) -> "Payoff":
        return Payoff("tabulated", table=table)


def payoff_sample(p: Payoff, g: Grid2D) -> Field:
    """Evaluate the payoff pointwise on the grid."""
    x = g.x_nodes
    if p.kind == "call":
        row = np.maximum(np.exp(x) - p.strike, 0.0)
    elif p.kind == "gaussian_bump":
        row = np.exp(-((x - p.center) / p.width) ** 2 / 2.0)
    elif p.kind == "exp_x":
        row = np.exp(x)
    elif p.kind == "constant":
        row = np.full_like(x, p.value)
    else:  # tabulated
        if p.table.grid.shape != g.shape:
            raise ValueError("tabulated payoff grid does not match sampling grid")
        return Field(p.table.values.copy(), g)
    vals = np.tile(row, (g.n_sigma, 1))
    if p.sigma_profile is not None:
        prof = np.asarray(p.sigma_profile, dtype=float)
        if prof.shape != (g.n_sigma,):
            raise ValueError("sigma_profile length does not match grid")
        vals = vals * prof[:, None]
    return Field(vals, g)


def field_to_csv(f: Field, path_or_buf, header_comment: str | None = None) -> None:
    """Write a field as 'sigma,x,value' rows, row-major over sigma then x,
    with 17 significant digits."""
    own = isinstance(path_or_buf, (str, bytes))
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(_CSV_HEADER + "\n")
        g = f.grid
        for i, s in enumerate(g.sigma_nodes):
            for j, x in enumerate(g.x_nodes):
                fh.write(f"{s:.17g},{x:.17g},{f.values[i, j]:.17g}\n")
    finally:
        if own:
            fh.close()


def field_from_csv(path_or_buf) -> Field:
    """Read a field written by field_to_csv.  A leading '# ...' metadata line
    is skipped (and ignored here; see fdsolver checkpoints for its use)."""
    own = isinstance(path_or_buf, (str, bytes))
    fh = open(path_or_buf) if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    if not lines or lines[0].strip() != _CSV_HEADER:
        raise ValueError(f"expected header {_CSV_HEADER!r}")
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",")
    sig = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    if sig.size * x.size != data.shape[0]:
        raise ValueError("CSV rows do not form a tensor-product grid")
    vals = data[:, 2].reshape(sig.size, x.size)
    return Field(vals, Grid2D(sig, x))
