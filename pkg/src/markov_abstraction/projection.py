"""Piecewise interpolation of densities and the projected density recursion.

Internally every scheme uses a Lagrange nodal basis on each cell, so the
interpolation matrix of every cell is the identity and the coefficients of a
projected function are its values at the interpolation nodes.  Nodes on a
shared cell face are stored once and reused by all adjacent cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .geometry import Partition
from .quadrature import QuadratureSpec, integrate_boxes
from .truncation import kappa, truncation_error


@dataclass(frozen=True)
class InterpScheme:
    """Per-cell tensor Lagrange interpolation.

    ``kind`` is ``"constant"`` (one node at ``position`` inside each cell,
    relative coordinates), ``"polynomial"`` (1D, ``nodes_per_axis`` equally
    spaced nodes including both endpoints) or ``"multilinear"`` (cell
    corners: bilinear in 2D, trilinear in 3D).
    """

    dim: int
    kind: str
    nodes_per_axis: int = 1
    position: tuple = ()

    def __post_init__(self):
        if self.kind == "constant":
            pos = tuple(float(p) for p in np.broadcast_to(self.position or 0.5, (self.dim,)))
            if any(not 0.0 <= p <= 1.0 for p in pos):
                raise ValueError("representative position must lie in the closed cell")
            object.__setattr__(self, "position", pos)
            object.__setattr__(self, "nodes_per_axis", 1)
        elif self.kind == "polynomial":
            if self.dim != 1 or self.nodes_per_axis < 2:
                raise ValueError("polynomial schemes are 1D with at least two nodes")
        elif self.kind == "multilinear":
            if self.dim not in (1, 2, 3):
                raise ValueError("multilinear schemes support dimensions 1 to 3")
            object.__setattr__(self, "nodes_per_axis", 2)
        else:
            raise ValueError(f"unknown scheme kind {self.kind!r}")

    @classmethod
    def constant(cls, dim: int = 1, position=0.5) -> "InterpScheme":
        return cls(dim, "constant", 1, tuple(np.broadcast_to(position, (dim,))))

    @classmethod
    def polynomial_1d(cls, h: int) -> "InterpScheme":
        if h == 2:
            return cls(1, "multilinear")
        return cls(1, "polynomial", h)

    @classmethod
    def bilinear(cls) -> "InterpScheme":
        return cls(2, "multilinear")

    @classmethod
    def trilinear(cls) -> "InterpScheme":
        return cls(3, "multilinear")

    @property
    def h(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @cached_property
    def reference_axis_nodes(self) -> np.ndarray:
        if self.is_constant:
            return np.array([0.5])
        return np.linspace(0.0, 1.0, self.nodes_per_axis)

    @cached_property
    def local_multi_index(self) -> np.ndarray:
        return np.array(list(product(range(self.nodes_per_axis), repeat=self.dim)), dtype=int)

    @cached_property
    def reference_nodes(self) -> np.ndarray:
        """Node coordinates on the unit cell, shape ``(h, dim)``."""
        if self.is_constant:
            return np.asarray(self.position)[None, :]
        return self.reference_axis_nodes[self.local_multi_index]

    def basis(self, u) -> np.ndarray:
        """Nodal basis at reference coordinates ``u (..., dim)`` -> ``(..., h)``."""
        u = np.asarray(u, dtype=float)
        if self.is_constant:
            return np.ones(u.shape[:-1] + (1,))
        z = self.reference_axis_nodes
        p = self.nodes_per_axis
        # 1D Lagrange polynomials per axis: (..., dim, p)
        ell = np.ones(u.shape + (p,))
        for j in range(p):
            for m in range(p):
                if m != j:
                    ell[..., j] *= (u - z[m]) / (z[j] - z[m])
        out = np.ones(u.shape[:-1] + (self.h,))
        for k in range(self.dim):
            out *= ell[..., k, :][..., self.local_multi_index[:, k]]
        return out

    def monomial_exponents(self) -> np.ndarray:
        """Exponents of the monomial basis spanning the same space, ``(h, dim)``."""
        return self.local_multi_index.copy() if not self.is_constant else np.zeros((1, self.dim), dtype=int)

    def interpolation_matrix(self, lower, upper, basis: str = "nodal") -> np.ndarray:
        """``Q[v, j] = phi_j(s_v)`` for one cell, for the nodal or monomial basis."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if basis == "nodal":
            return self.basis(self.reference_nodes)
        if basis == "monomial":
            pts = lower + self.reference_nodes * (upper - lower)
            exps = self.monomial_exponents()
            return np.prod(pts[:, None, :] ** exps[None, :, :], axis=-1)
        raise ValueError(f"unknown basis {basis!r}")


class NodeLayout:
    """Global interpolation nodes of a scheme on a partition."""

    def __init__(self, partition: Partition, scheme: InterpScheme):
        if scheme.dim != partition.dim:
            raise ValueError("scheme and partition dimensions differ")
        self.partition = partition
        self.scheme = scheme
        lower, width = partition.cell_lower, partition.cell_upper - partition.cell_lower
        if scheme.is_constant:
            self.points = lower + np.asarray(scheme.position) * width
            self.cell_nodes = np.arange(partition.n)[:, None]
            return
        p = scheme.nodes_per_axis
        sizes = [c * (p - 1) + 1 for c in partition.counts]
        axes = [np.linspace(lo, hi, s) for lo, hi, s in zip(partition.domain.lower, partition.domain.upper, sizes)]
        grids = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([g.ravel() for g in grids], axis=-1)
        cell_mi = partition._multi_index
        local = scheme.local_multi_index
        gmi = cell_mi[:, None, :] * (p - 1) + local[None, :, :]
        self.cell_nodes = np.ravel_multi_index(tuple(gmi[..., k] for k in range(partition.dim)), sizes)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class DensityApprox:
    """Piecewise interpolant ``sum_i sum_j alpha_ij phi_ij 1_{A_i}``, zero outside the domain.

    ``node_values`` holds one value per global node; per-cell coefficients
    are gathered through the node layout.
    """

    partition: Partition
    scheme: InterpScheme
    node_values: np.ndarray
    t: int = 0
    budget: object = None
    layout: NodeLayout = field(default=None, repr=False)

    def __post_init__(self):
        if self.layout is None:
            object.__setattr__(self, "layout", NodeLayout(self.partition, self.scheme))
        vals = np.asarray(self.node_values, dtype=float)
        if vals.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} node values, got {vals.shape}")
        object.__setattr__(self, "node_values", vals)

    @property
    def coefficients(self) -> np.ndarray:
        return self.node_values[self.layout.cell_nodes]

    def __call__(self, points) -> np.ndarray:
        part = self.partition
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and part.dim == 1:
            pts = pts[:, None]
        pts = np.atleast_2d(pts)
        idx = part.locate(pts)
        inside = idx < part.n
        out = np.zeros(pts.shape[0])
        i = idx[inside]
        lo = part.cell_lower[i]
        u = (pts[inside] - lo) / (part.cell_upper[i] - lo)
        out[inside] = np.sum(self.scheme.basis(u) * self.coefficients[i], axis=-1)
        return out

    def integral(self) -> float:
        """Exact integral of the interpolant (Gauss rule of sufficient order per cell)."""
        from .quadrature import gauss_legendre_unit

        nodes, weights = gauss_legendre_unit(max(1, self.scheme.nodes_per_axis), self.partition.dim)
        b = self.scheme.basis(nodes)
        per_cell = self.coefficients @ (b.T @ weights)
        return float(np.sum(per_cell * self.partition.volumes))


def project(f, partition: Partition, scheme: InterpScheme) -> DensityApprox:
    """Interpolate ``f(points (G, d)) -> (G,)`` on every cell."""
    layout = NodeLayout(partition, scheme)
    vals = np.asarray(f(layout.points), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite at every interpolation node")
    return DensityApprox(partition, scheme, vals, layout=layout)


def monomial_to_nodal(partition: Partition, scheme: InterpScheme, coefficients) -> DensityApprox:
    """Convert per-cell monomial coefficients ``(n, h)`` into a nodal interpolant.

    Values at shared nodes must agree between cells (continuous data).
    """
    layout = NodeLayout(partition, scheme)
    coefficients = np.asarray(coefficients, dtype=float)
    vals = np.full(layout.size, np.nan)
    for i in range(partition.n):
        Q = scheme.interpolation_matrix(partition.cell_lower[i], partition.cell_upper[i], "monomial")
        local = Q @ coefficients[i]
        prev = vals[layout.cell_nodes[i]]
        clash = ~np.isnan(prev) & ~np.isclose(prev, local, rtol=1e-9, atol=1e-12)
        if np.any(clash):
            raise ValueError(f"monomial data discontinuous at a node of cell {i}")
        vals[layout.cell_nodes[i]] = local
    return DensityApprox(partition, scheme, vals, layout=layout)


def nodal_to_monomial(approx: DensityApprox) -> np.ndarray:
    part, scheme = approx.partition, approx.scheme
    out = np.empty((part.n, scheme.h))
    coeffs = approx.coefficients
    for i in range(part.n):
        Q = scheme.interpolation_matrix(part.cell_lower[i], part.cell_upper[i], "monomial")
        out[i] = np.linalg.solve(Q, coeffs[i])
    return out


def interp_error_1d(m_h: float, h: int, delta: float) -> float:
    """Sup-norm interpolation error bound for degree ``h-1`` on equally spaced nodes."""
    if h < 2:
        raise ValueError("h < 2: use the piecewise-constant bound lambda_f * delta")
    if m_h < 0 or delta < 0:
        raise ValueError("inputs must be nonnegative")
    return m_h / (4.0 * h) * (delta / (h - 1)) ** h


def interp_error_2d(bounds, delta: float) -> float:
    """Bilinear interpolation error bound; ``delta`` is the cell diagonal."""
    m2 = bounds.second
    m3 = bounds.third_mixed
    return delta**2 / 16.0 * (m2[0] + m2[1]) + delta**3 / (8.0 * math.sqrt(2.0)) * (m3[0][1] + m3[1][0])


def interp_error_3d(bounds, delta: float) -> float:
    """Trilinear interpolation error bound; ``delta`` is the cell diagonal."""
    m2 = bounds.second
    m3 = bounds.third_mixed
    mixed = sum(m3[i][j] for i in range(3) for j in range(3) if i != j)
    cross = bounds.third_cross or 0.0
    return delta**2 / 24.0 * sum(m2[:3]) + delta**3 / (12.0 * math.sqrt(3.0)) * (mixed + 3.0 * cross)


def scheme_error(kernel, partition: Partition, scheme: InterpScheme) -> float:
    """One-step projection error of the kernel for this scheme and partition."""
    delta = partition.delta
    if scheme.is_constant:
        return kernel.lambda_f * delta
    bounds = kernel.derivative_bounds
    if bounds is None:
        raise ValueError("derivative bounds required for higher-order schemes")
    if scheme.dim == 1:
        h = scheme.h
        return interp_error_1d(bounds.require_order(h), h, delta)
    if scheme.dim == 2:
        if len(bounds.second) < 2 or len(bounds.third_mixed) < 2:
            raise ValueError("bilinear bound needs second and mixed third derivative bounds")
        return interp_error_2d(bounds, delta)
    if len(bounds.second) < 3 or len(bounds.third_mixed) < 3:
        raise ValueError("trilinear bound needs second and mixed third derivative bounds")
    return interp_error_3d(bounds, delta)


def estimate_mfh(kernel, partition: Partition, scheme: InterpScheme, sample_grid=None,
                 quad_points: int = 16) -> tuple[float, bool]:
    """Bound on ``int |Pi(t(s'|.))(s)| ds`` over ``s'``; flag tells whether it is certified.

    Constant and multilinear schemes interpolate with nonnegative weights
    summing to one, so ``m_f`` itself bounds the integral.  For other
    schemes the integral is sampled over ``sample_grid`` (uncertified).
    """
    if scheme.is_constant or scheme.kind == "multilinear":
        return kernel.m_f, kernel.m_f_certified
    from .quadrature import gauss_legendre_unit

    layout = NodeLayout(partition, scheme)
    if sample_grid is None:
        sample_grid = np.linspace(partition.domain.lower[0], partition.domain.upper[0], 1001)[:, None]
    sample_grid = np.asarray(sample_grid, dtype=float).reshape(-1, partition.dim)
    gx, gw = gauss_legendre_unit(quad_points, partition.dim)
    lo, hi = partition.cell_lower, partition.cell_upper
    s = (lo[:, None, :] + gx[None] * (hi - lo)[:, None, :]).reshape(-1, partition.dim)
    w = (gw[None, :] * partition.volumes[:, None]).ravel()
    # t(node | s) for every node and quadrature point: (G, S)
    tn = kernel.density(layout.points[:, None, :], s[None, :, :])
    idx = partition.locate(sample_grid)
    best = 0.0
    for x, i in zip(sample_grid, idx):
        if i >= partition.n:
            continue
        u = (x - lo[i]) / (hi[i] - lo[i])
        phi = scheme.basis(u[None, :])[0]
        proj = phi @ tn[layout.cell_nodes[i]]
        best = max(best, float(np.abs(proj) @ w))
    return best, False


def projection_error_recursion(e_h: float, m_fh: float, horizon: int) -> list[float]:
    """``E_{t+1} = m_fh E_t + e_h`` from ``E_0 = 0``; list ``[E_0, ..., E_N]``."""
    if e_h < 0 or m_fh < 0:
        raise ValueError("inputs must be nonnegative")
    vals = [0.0]
    for _ in range(horizon):
        vals.append(m_fh * vals[-1] + e_h)
    return vals


def projection_error_closed(e_h: float, m_fh: float, t: int) -> float:
    return e_h * kappa(t, m_fh)


def _initial_mass_boxes(init, partition: Partition):
    """Cells clipped to the initial support (where ``mu_0`` is nonzero)."""
    lo = np.maximum(partition.cell_lower, init.support.lower)
    hi = np.minimum(partition.cell_upper, init.support.upper)
    keep = np.all(hi > lo, axis=-1)
    return lo[keep], hi[keep]


def _initial_node_values(kernel, init, partition, nodes, spec):
    """``int t(x_g | s) mu_0(s) ds`` over the domain for every node ``x_g``."""
    lo, hi = _initial_mass_boxes(init, partition)
    G, m = nodes.shape[0], lo.shape[0]
    if m == 0:
        return np.zeros(G)
    blo = np.tile(lo, (G, 1))
    bhi = np.tile(hi, (G, 1))

    def f(x, owner):
        g = owner // m
        return kernel.density(nodes[g][:, None, :], x) * init.density(x)

    vals = integrate_boxes(f, blo, bhi, spec)
    return vals.reshape(G, m).sum(axis=1)


def _budgets(kernel, init, e_h, m_fh, certified, horizon, epsilon_truncation=True):
    from .abstraction import ErrorBudget

    sched = truncation_error(kernel.epsilon_tail, init.epsilon_0, kernel.m_f, horizon)
    out = []
    for t in range(horizon + 1):
        out.append(ErrorBudget(
            eps_t=sched[t] if epsilon_truncation else 0.0,
            e_t=projection_error_closed(e_h, m_fh, t),
            inputs={"scheme_error": e_h, "m_fh": m_fh, "t": t, "lambda_f": kernel.lambda_f,
                    "m_f": kernel.m_f, "epsilon": kernel.epsilon_tail},
            certified=certified,
        ))
    return out


def assemble_projected_operator(kernel, partition: Partition, scheme: InterpScheme,
                                spec: QuadratureSpec = QuadratureSpec(), layout: NodeLayout | None = None):
    """``M[g', g] = sum over (i, j) at node g' of int_{A_i} t(x_g | s) phi_ij(s) ds``.

    One step of the projected recursion on node values is ``beta @ M``.
    """
    layout = layout or NodeLayout(partition, scheme)
    X = layout.points
    G, n = X.shape[0], partition.n
    lo_c, hi_c = partition.cell_lower, partition.cell_upper
    blo = np.tile(lo_c, (G, 1))
    bhi = np.tile(hi_c, (G, 1))

    def f(x, owner):
        g, i = owner // n, owner % n
        u = (x - lo_c[i][:, None, :]) / (hi_c[i] - lo_c[i])[:, None, :]
        return kernel.density(X[g][:, None, :], x)[..., None] * scheme.basis(u)

    T = integrate_boxes(f, blo, bhi, spec)
    T = T.reshape(G, n, scheme.h)
    M = np.zeros((G, G))
    cols = layout.cell_nodes  # (n, h)
    for j in range(scheme.h):
        np.add.at(M, (np.arange(G)[:, None], cols[None, :, j]), T[:, :, j])
    return M.T.copy()


def algorithm1(kernel, init, partition: Partition, scheme: InterpScheme, horizon: int,
               spec: QuadratureSpec = QuadratureSpec(), sample_grid=None) -> list[DensityApprox]:
    """Projected density recursion for a general nodal scheme; returns ``psi_1 ... psi_N``.

    Node values start from the exact one-step integrals against ``mu_0`` and
    are advanced with the assembled operator.  Each result carries its error
    budget (truncation plus projection).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    e_h = scheme_error(kernel, partition, scheme)
    m_fh, certified = estimate_mfh(kernel, partition, scheme, sample_grid)
    certified = certified and kernel.m_f_certified
    layout = NodeLayout(partition, scheme)
    M = assemble_projected_operator(kernel, partition, scheme, spec, layout)
    beta = _initial_node_values(kernel, init, partition, layout.points, spec)
    budgets = _budgets(kernel, init, e_h, m_fh, certified, horizon)
    out = []
    for t in range(1, horizon + 1):
        out.append(DensityApprox(partition, scheme, beta, t, budgets[t], layout))
        if t < horizon:
            beta = beta @ M
    return out


def algorithm2(kernel, init, partition: Partition, representative_points=None, horizon: int = 1,
               spec: QuadratureSpec = QuadratureSpec()) -> list[DensityApprox]:
    """Piecewise-constant recursion with one representative point per cell.

    ``P[i, j] = int_{A_i} t(s_j | s) ds`` and ``alpha_{t+1} = alpha_t @ P``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = partition.n
    lo_c, hi_c = partition.cell_lower, partition.cell_upper
    if representative_points is None:
        reps = partition.midpoints
    else:
        reps = np.asarray(representative_points, dtype=float).reshape(n, partition.dim)
        if np.any(reps < lo_c) or np.any(reps > hi_c):
            raise ValueError("representative point outside its cell")
    rel = (reps - lo_c) / (hi_c - lo_c)
    scheme = InterpScheme(partition.dim, "constant", position=tuple(rel[0]))
    if not np.allclose(rel, rel[0]):
        scheme = InterpScheme.constant(partition.dim)
    layout = NodeLayout(partition, scheme)
    layout.points = reps

    blo = np.tile(lo_c, (n, 1))
    bhi = np.tile(hi_c, (n, 1))

    def f(x, owner):
        j = owner // n
        return kernel.density(reps[j][:, None, :], x)

    P = integrate_boxes(f, blo, bhi, spec).reshape(n, n).T.copy()
    alpha = _initial_node_values(kernel, init, partition, reps, spec)
    budgets = _budgets(kernel, init, kernel.lambda_f * partition.delta, kernel.m_f,
                       kernel.m_f_certified, horizon)
    out = []
    for t in range(1, horizon + 1):
        out.append(DensityApprox(partition, scheme, alpha, t, budgets[t], layout))
        if t < horizon:
            alpha = alpha @ P
    return out
