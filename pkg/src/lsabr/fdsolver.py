"""Finite-difference discretization of the pricing generators on the strip
[alpha, beta] x [x_min, x_max] with zero Dirichlet boundary conditions,
theta-scheme time stepping, a dense matrix-exponential oracle for small
grids, and discrete energy (dissipativity/coercivity) checks.

Generator tags:
    'A'  : kappa*(theta - sigma) d_sigma          (transport)
    'B'  : d_x^2 - d_x                            (heat with drift, x only)
    'L0' : A + (sigma^2/2) B                      (degenerate, zero volvol)
    'L1' : rho*sigma^2 d_x d_sigma                (cross term, no nu factor)
    'L2' : (sigma^2/2) d_sigma^2                  (no nu factor)
    'L'  : A + (sigma^2/2) B + nu*L1 + nu^2*L2    (full generator)

Stencils are second-order centered (3-point in each axis, 4-point cross),
except that the transport term's sigma-derivative switches to first-order
one-sided differences on the interior rows adjacent to the sigma boundary,
pointing into the interior: the characteristics are incoming there, so
those rows must not reference the Dirichlet data.

Unknown ordering is lexicographic sigma-major, keeping the x-direction
bands of the dominant heat term contiguous.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from .model import Field, Grid2D, ModelParams, japanese_bracket

__all__ = [
    "FDOperator",
    "ThetaScheme",
    "GardingReport",
    "assemble",
    "step",
    "expm_oracle",
    "garding_check",
    "save_checkpoint",
    "load_checkpoint",
]

GENERATORS = ("A", "B", "L0", "L1", "L2", "L")

_EXPM_MAX_UNKNOWNS = 4000


def _d1_matrix(nodes: np.ndarray, one_sided_edges: bool) -> sp.csr_matrix:
    """First-derivative stencil on possibly nonuniform nodes; rows are
    defined on interior nodes only (boundary rows are zero).  With
    one_sided_edges the first/last interior rows use first-order inward
    differences that do not touch the boundary nodes."""
    n = nodes.size
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        hm = nodes[i] - nodes[i - 1]
        hp = nodes[i + 1] - nodes[i]
        m[i, i - 1] = -hp / (hm * (hm + hp))
        m[i, i] = (hp - hm) / (hm * hp)
        m[i, i + 1] = hm / (hp * (hm + hp))
    if one_sided_edges and n >= 4:
        hp = nodes[2] - nodes[1]
        m[1, :] = 0.0
        m[1, 1] = -1.0 / hp
        m[1, 2] = 1.0 / hp
        i = n - 2
        hm = nodes[i] - nodes[i - 1]
        m[i, :] = 0.0
        m[i, i - 1] = -1.0 / hm
        m[i, i] = 1.0 / hm
    return m.tocsr()


def _d2_matrix(nodes: np.ndarray) -> sp.csr_matrix:
    n = nodes.size
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        hm = nodes[i] - nodes[i - 1]
        hp = nodes[i + 1] - nodes[i]
        m[i, i - 1] = 2.0 / (hm * (hm + hp))
        m[i, i] = -2.0 / (hm * hp)
        m[i, i + 1] = 2.0 / (hp * (hm + hp))
    return m.tocsr()


@dataclass(frozen=True)
class FDOperator:
    """Sparse discretization of one generator.

    full holds the stencil over all grid nodes with zero rows on the
    boundary; matrix restricts to interior unknowns (zero Dirichlet data
    eliminated) and boundary_matrix carries the interior-from-boundary
    coupling for nonzero Dirichlet values.
    """

    full: sp.csr_matrix
    grid: Grid2D
    generator: str
    params: ModelParams

    @cached_property
    def interior_index(self) -> np.ndarray:
        ns, nx = self.grid.shape
        mask = np.zeros((ns, nx), dtype=bool)
        mask[1:-1, 1:-1] = True
        return np.flatnonzero(mask.ravel())

    @cached_property
    def boundary_index(self) -> np.ndarray:
        ns, nx = self.grid.shape
        mask = np.ones((ns, nx), dtype=bool)
        mask[1:-1, 1:-1] = False
        return np.flatnonzero(mask.ravel())

    @property
    def n_interior(self) -> int:
        return (self.grid.n_sigma - 2) * (self.grid.n_x - 2)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        idx = self.interior_index
        return self.full[idx][:, idx].tocsr()

    @cached_property
    def boundary_matrix(self) -> sp.csr_matrix:
        return self.full[self.interior_index][:, self.boundary_index].tocsr()

    def apply(self, u: Field) -> Field:
        """Apply the raw stencil to a full field (uses the field's actual
        boundary values; output is zero on boundary rows).  Intended for
        consistency tests, not for solving."""
        out = self.full @ u.values.ravel()
        return Field(out.reshape(self.grid.shape), self.grid)


def assemble(p: ModelParams, g: Grid2D, which: str,
             require_elliptic: bool = False) -> FDOperator:
    """Assemble the sparse stencil for one generator tag."""
    if which not in GENERATORS:
        raise ValueError(f"unknown generator {which!r}; expected one of {GENERATORS}")
    if which == "L" and require_elliptic:
        if p.nu == 0:
            raise ValueError("nu = 0 makes the full generator degenerate; "
                             "use 'L0' or drop the ellipticity requirement")
        # diffusion determinant (nu^2 sigma^4 / 4)(1 - rho^2) > 0 needs |rho| < 1,
        # which ModelParams already enforces
    sig = g.sigma_nodes
    x = g.x_nodes
    ns, nx = g.shape

    dx1 = _d1_matrix(x, one_sided_edges=False)
    dx2 = _d2_matrix(x)
    dsig_a = _d1_matrix(sig, one_sided_edges=True)
    dsig_c = _d1_matrix(sig, one_sided_edges=False)
    dsig2 = _d2_matrix(sig)
    ix = sp.identity(nx, format="csr")
    b1d = (dx2 - dx1).tocsr()

    def a_part():
        c = sp.diags(p.kappa * (p.theta - sig))
        return sp.kron(c @ dsig_a, ix)

    def b_part():  # plain B, no sigma^2 factor
        return sp.kron(sp.identity(ns, format="csr"), b1d)

    def sig2_b_part():
        return sp.kron(sp.diags(0.5 * sig ** 2), b1d)

    def l1_part():  # rho sigma^2 d_x d_sigma
        return p.rho * sp.kron(sp.diags(sig ** 2) @ dsig_c, dx1)

    def l2_part():  # (sigma^2/2) d_sigma^2
        return sp.kron(sp.diags(0.5 * sig ** 2) @ dsig2, ix)

    if which == "A":
        full = a_part()
    elif which == "B":
        full = b_part()
    elif which == "L0":
        full = a_part() + sig2_b_part()
    elif which == "L1":
        full = l1_part()
    elif which == "L2":
        full = l2_part()
    else:
        full = a_part() + sig2_b_part() + p.nu * l1_part() + p.nu ** 2 * l2_part()

    # zero out boundary rows (Dirichlet rows are not evolved)
    mask = np.ones((ns, nx))
    mask[0, :] = mask[-1, :] = 0.0
    mask[:, 0] = mask[:, -1] = 0.0
    full = (sp.diags(mask.ravel()) @ full).tocsr()
    full.eliminate_zeros()
    return FDOperator(full=full, grid=g, generator=which, params=p)


@dataclass(frozen=True)
class ThetaScheme:
    """Theta time-stepping scheme: 0 explicit, 1/2 Crank-Nicolson, 1 implicit."""

    theta_weight: float = 0.5
    dt: float = 1e-3
    solver_tol: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.theta_weight <= 1.0:
            raise ValueError("theta_weight must be in [0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")


def _gershgorin_radius(m: sp.csr_matrix) -> float:
    return float(np.max(np.abs(m).sum(axis=1))) if m.shape[0] else 0.0


def step(op: FDOperator, scheme: ThetaScheme, u: Field, n_steps: int) -> Field:
    """Advance n_steps of the theta-scheme for du/dt = op u.

    Boundary values of u are held fixed (constant Dirichlet data; zero in
    the default setup).  Linear systems are solved by a direct sparse
    factorization, with one step of iterative refinement if the residual
    exceeds scheme.solver_tol relative to the right-hand side.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if u.grid.shape != op.grid.shape:
        raise ValueError("field grid does not match operator grid")
    th, dt = scheme.theta_weight, scheme.dt
    m = op.matrix
    if th < 0.5:
        radius = _gershgorin_radius(m)
        limit = 2.0 / ((1.0 - 2.0 * th) * radius) if radius > 0 else np.inf
        if dt > limit:
            raise ValueError(
                f"dt={dt} violates the explicit stability bound {limit:.3e} "
                f"estimated from the Gershgorin radius")
    n = op.n_interior
    eye = sp.identity(n, format="csr")
    lhs = (eye - th * dt * m).tocsc()
    rhs_mat = (eye + (1.0 - th) * dt * m).tocsr()
    lu = splu(lhs)
    flat = u.values.ravel()
    v = flat[op.interior_index].copy()
    ub = flat[op.boundary_index]
    bterm = dt * (op.boundary_matrix @ ub)
    for k in range(n_steps):
        b = rhs_mat @ v + bterm
        v = lu.solve(b)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite solution at step {k + 1}")
        res = np.linalg.norm(lhs @ v - b)
        if res > scheme.solver_tol * max(np.linalg.norm(b), 1.0):
            v = v + lu.solve(b - lhs @ v)
            res = np.linalg.norm(lhs @ v - b)
            if res > scheme.solver_tol * max(np.linalg.norm(b), 1.0):
                raise RuntimeError(
                    f"linear solve did not converge at step {k + 1}: "
                    f"residual {res:.3e}")
    out = flat.copy()
    out[op.interior_index] = v
    return Field(out.reshape(op.grid.shape), op.grid)


def expm_oracle(op: FDOperator, t: float) -> np.ndarray:
    """Dense matrix exponential e^{t M} of the interior operator, by
    scaling-and-squaring with Pade approximation.  Brute-force semigroup
    reference for small grids only."""
    if op.n_interior > _EXPM_MAX_UNKNOWNS:
        raise ValueError(
            f"grid too large for the dense oracle: {op.n_interior} interior "
            f"unknowns exceeds {_EXPM_MAX_UNKNOWNS}")
    if t < 0:
        raise ValueError("time must be >= 0")
    return expm(t * op.matrix.toarray())


def expm_apply(op: FDOperator, t: float, u: Field) -> Field:
    """Apply the dense exponential oracle to a field (zero Dirichlet)."""
    e = expm_oracle(op, t)
    flat = u.values.ravel()
    out = np.zeros_like(flat)
    out[op.interior_index] = e @ flat[op.interior_index]
    return Field(out.reshape(op.grid.shape), op.grid)


@dataclass(frozen=True)
class GardingReport:
    """Empirical energy-inequality constants over seeded random fields.

    The report certifies (L u, u) <= -c1 |u|_{H1}^2 + c2 ||u||^2 on every
    trial, with c1 the least-squares slope of the Rayleigh quotient against
    the H1 ratio and c2 the smallest intercept valid on all trials.
    """

    generator: str
    trials: int
    seed: int
    c1: float
    c2: float
    max_rayleigh: float
    min_h1_ratio: float

    @property
    def quasi_dissipative(self) -> bool:
        return np.isfinite(self.c2)


def _quadrature_weights_2d(g: Grid2D, lam: float) -> np.ndarray:
    def trap(nodes):
        w = np.empty_like(nodes)
        w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
        w[0] = 0.5 * (nodes[1] - nodes[0])
        w[-1] = 0.5 * (nodes[-1] - nodes[-2])
        return w
    ws = trap(g.sigma_nodes)
    wx = trap(g.x_nodes) * np.exp(-2.0 * lam * japanese_bracket(g.x_nodes))
    return np.outer(ws, wx)


def garding_check(op: FDOperator, trials: int = 200, seed: int = 0) -> GardingReport:
    """Probe the discrete energy inequality with seeded random interior
    fields.  Inner products carry the trapezoid cell weights and the
    diagonal weight e^{-2 lam <x>}; the H1 part uses forward difference
    quotients in both directions."""
    g = op.grid
    lam = op.params.lam
    w2 = _quadrature_weights_2d(g, lam)
    rng = np.random.default_rng(seed)
    ns, nx = g.shape
    hs = np.diff(g.sigma_nodes)
    hx = g.dx
    ys, xs = [], []
    for _ in range(trials):
        u = np.zeros((ns, nx))
        u[1:-1, 1:-1] = rng.standard_normal((ns - 2, nx - 2))
        lu = (op.full @ u.ravel()).reshape(ns, nx)
        num = float(np.sum(w2 * u * lu))
        nrm2 = float(np.sum(w2 * u * u))
        dudx = (u[:, 1:] - u[:, :-1]) / hx
        duds = (u[1:, :] - u[:-1, :]) / hs[:, None]
        h1 = float(np.sum(w2[:, :-1] * dudx * dudx)
                   + np.sum(w2[:-1, :] * duds * duds))
        ys.append(num / nrm2)
        xs.append(h1 / nrm2)
    xs = np.array(xs)
    ys = np.array(ys)
    slope, _ = np.polyfit(xs, ys, 1)
    c1 = -float(slope)
    c2 = float(np.max(ys + c1 * xs))
    return GardingReport(generator=op.generator, trials=trials, seed=seed,
                         c1=c1, c2=c2, max_rayleigh=float(np.max(ys)),
                         min_h1_ratio=float(np.min(xs)))


def params_hash(p: ModelParams) -> str:
    key = ",".join(f"{v:.17g}" for v in
                   (p.kappa, p.theta, p.nu, p.rho, p.alpha, p.beta, p.lam))
    return hashlib.sha256(key.encode()).hexdigest()[:12]


def save_checkpoint(path: str, u: Field, t: float, scheme: ThetaScheme,
                    generator: str, p: ModelParams) -> None:
    """Field CSV with an adjoined metadata header line."""
    from .model import field_to_csv
    meta = (f"t={t:.17g} dt={scheme.dt:.17g} generator={generator} "
            f"params={params_hash(p)}")
    field_to_csv(u, path, header_comment=meta)


def load_checkpoint(path: str) -> tuple[Field, dict]:
    """Read a checkpoint; returns the field and the parsed metadata."""
    with open(path) as fh:
        first = fh.readline()
    meta = {}
    if first.startswith("#"):
        for tok in first[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
    from .model import field_from_csv
    return field_from_csv(path), meta
