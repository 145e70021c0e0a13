"""Finite Markov chain abstraction over a partition, with certified error bounds."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Partition
from .projection import DensityApprox, InterpScheme
from .quadrature import QuadratureError, QuadratureSpec, integrate_boxes
from .truncation import kappa, truncation_error

THREADS_ENV = "MARKOV_ABSTRACTION_THREADS"
ROW_SUM_FACTOR = 100.0


class AbstractionError(RuntimeError):
    """Raised when an assembled chain fails its stochasticity check."""


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ErrorBudget:
    """Truncation error ``eps_t`` plus abstraction error ``e_t`` at one time step.

    ``extra`` carries error terms not covered by the certificate (for
    instance mass dropped by sparsification) and forces ``certified`` off.
    """

    eps_t: float
    e_t: float
    inputs: dict = field(default_factory=dict)
    certified: bool = True
    extra: float = 0.0

    def __post_init__(self):
        if self.extra > 0 and self.certified:
            object.__setattr__(self, "certified", False)

    @property
    def total(self) -> float:
        return self.eps_t + self.e_t + self.extra


@dataclass(frozen=True, eq=False)
class FiniteAbstraction:
    """``(n+1) x (n+1)`` transition matrix over the partition cells plus sink.

    ``kind`` is ``"averaged"`` (cell-averaged transitions) or
    ``"representative"`` (transitions from one point per cell).
    """

    partition: Partition
    matrix: np.ndarray
    kind: str
    quad_tol: float
    dropped_mass: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def sink(self) -> int:
        return self.partition.n

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def sparsified(self, threshold: float) -> "FiniteAbstraction":
        """Drop entries below ``threshold``; the dropped row mass is recorded, not redistributed."""
        P = self.matrix.copy()
        small = P < threshold
        np.fill_diagonal(small[self.sink:, self.sink:], False)
        dropped = np.where(small, P, 0.0).sum(axis=1)
        P[small] = 0.0
        prior = 0.0 if self.dropped_mass is None else self.dropped_mass
        return FiniteAbstraction(self.partition, P, self.kind, self.quad_tol, dropped + prior)

    def sparsification_error(self, t: int) -> float:
        """Sup-norm density error from dropped mass after ``t`` steps (uncertified)."""
        if self.dropped_mass is None:
            return 0.0
        return t * float(np.max(self.dropped_mass)) / float(np.min(self.partition.volumes))


@dataclass(frozen=True)
class Pmf:
    values: np.ndarray
    t: int = 0

    @property
    def mass_in_domain(self) -> float:
        return float(np.sum(self.values[:-1]))

    @property
    def sink_mass(self) -> float:
        return float(self.values[-1])


def _finish_rows(inner: np.ndarray, quad_tol: float, kind: str) -> np.ndarray:
    n = inner.shape[0]
    sums = inner.sum(axis=1)
    limit = 1.0 + ROW_SUM_FACTOR * (n + 1) * quad_tol
    bad = np.flatnonzero(sums > limit)
    if bad.size:
        i = int(bad[0])
        raise AbstractionError(
            f"{kind} chain row {i} sums to {sums[i]:.12g} inside the domain; "
            "the kernel is not a sub-probability density or quadrature failed"
        )
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = inner
    # Mass leaving the domain goes to the sink; the sink is absorbing.
    P[:n, n] = np.clip(1.0 - sums, 0.0, None)
    P[n, n] = 1.0
    return P


def _assemble_rows(row_fn, n: int, block: int):
    blocks = [(r0, min(n, r0 + block)) for r0 in range(0, n, block)]
    threads = _threads()
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: row_fn(*b), blocks))
    else:
        parts = [row_fn(*b) for b in blocks]
    return np.vstack(parts)


def build_chain_averaged(kernel, partition: Partition, quad_tol: float = 1e-8,
                         spec: QuadratureSpec | None = None) -> FiniteAbstraction:
    """Cell-averaged transition probabilities ``P_ij = (1/|A_i|) int_{A_j} int_{A_i} t ds ds'``.

    Each entry is one ``2d``-dimensional tensor integral over ``A_j x A_i``.
    """
    spec = spec or QuadratureSpec(tol=quad_tol)
    n, d = partition.n, partition.dim
    lo_c, hi_c, vol = partition.cell_lower, partition.cell_upper, partition.volumes
    block = max(1, 200_000 // n)

    def rows(r0, r1):
        m = r1 - r0
        i = np.repeat(np.arange(r0, r1), n)
        j = np.tile(np.arange(n), m)
        lo = np.concatenate([lo_c[j], lo_c[i]], axis=1)
        hi = np.concatenate([hi_c[j], hi_c[i]], axis=1)

        def f(x, owner):
            return kernel.density(x[..., :d], x[..., d:])

        try:
            vals = integrate_boxes(f, lo, hi, spec, tol=quad_tol * vol[i])
        except QuadratureError as exc:
            b = exc.box_index
            raise QuadratureError(
                f"averaged entry ({int(i[b])}, {int(j[b])}): {exc}", box_index=(int(i[b]), int(j[b]))
            ) from exc
        return vals.reshape(m, n) / vol[r0:r1, None]

    inner = _assemble_rows(rows, n, block)
    return FiniteAbstraction(partition, _finish_rows(inner, quad_tol, "averaged"), "averaged", quad_tol)


def build_chain_representative(kernel, partition: Partition, representative_points=None,
                               quad_tol: float = 1e-8, spec: QuadratureSpec | None = None) -> FiniteAbstraction:
    """Transitions from one point per cell, ``P_ij = int_{A_j} t(s' | s_i) ds'``."""
    spec = spec or QuadratureSpec(tol=quad_tol)
    n = partition.n
    lo_c, hi_c = partition.cell_lower, partition.cell_upper
    reps = partition.midpoints if representative_points is None else np.asarray(representative_points, dtype=float)
    reps = reps.reshape(n, partition.dim)
    if np.any(reps < lo_c) or np.any(reps > hi_c):
        raise ValueError("representative point outside its cell")
    block = max(1, 400_000 // n)

    def rows(r0, r1):
        m = r1 - r0
        i = np.repeat(np.arange(r0, r1), n)
        j = np.tile(np.arange(n), m)

        def f(x, owner):
            return kernel.density(x, reps[i[owner]][:, None, :])

        try:
            vals = integrate_boxes(f, lo_c[j], hi_c[j], spec)
        except QuadratureError as exc:
            b = exc.box_index
            raise QuadratureError(
                f"representative entry ({int(i[b])}, {int(j[b])}): {exc}", box_index=(int(i[b]), int(j[b]))
            ) from exc
        return vals.reshape(m, n)

    inner = _assemble_rows(rows, n, block)
    return FiniteAbstraction(partition, _finish_rows(inner, quad_tol, "representative"), "representative", quad_tol)


def initial_pmf(init, partition: Partition, spec: QuadratureSpec = QuadratureSpec()) -> Pmf:
    """Cell masses of the initial density restricted to its support; the rest is not counted."""
    n = partition.n
    lo = np.maximum(partition.cell_lower, init.support.lower)
    hi = np.minimum(partition.cell_upper, init.support.upper)
    keep = np.flatnonzero(np.all(hi > lo, axis=-1))
    vals = np.zeros(n + 1)
    if keep.size:
        vals[keep] = integrate_boxes(lambda x, owner: init.density(x), lo[keep], hi[keep], spec)
    # Mass of mu_0 outside the domain starts in the sink.
    total = integrate_boxes(lambda x, owner: init.density(x), init.support.lower, init.support.upper, spec)[0]
    vals[n] = max(0.0, total - vals[:n].sum())
    return Pmf(vals, 0)


def initial_pmf_relaxed(kernel, init, partition: Partition, spec: QuadratureSpec = QuadratureSpec()) -> Pmf:
    """One-step pmf ``p_1(i) = int_{A_i} int t(s'|s) mu_0(s) ds ds'`` (time 1)."""
    n, d = partition.n, partition.dim
    lo_s = np.maximum(partition.cell_lower, init.support.lower)
    hi_s = np.minimum(partition.cell_upper, init.support.upper)
    src = np.flatnonzero(np.all(hi_s > lo_s, axis=-1))
    vals = np.zeros(n + 1)
    if src.size == 0:
        return Pmf(vals, 1)
    m = src.size
    j = np.repeat(np.arange(n), m)
    k = np.tile(src, n)
    lo = np.concatenate([partition.cell_lower[j], lo_s[k]], axis=1)
    hi = np.concatenate([partition.cell_upper[j], hi_s[k]], axis=1)

    def f(x, owner):
        return kernel.density(x[..., :d], x[..., d:]) * init.density(x[..., d:])

    inner = integrate_boxes(f, lo, hi, spec).reshape(n, m).sum(axis=1)
    mass0 = initial_pmf(init, partition, spec).values[:n].sum()
    vals[:n] = inner
    vals[n] = max(0.0, mass0 - inner.sum())
    return Pmf(vals, 1)


def propagate(pmf: Pmf, abstraction: FiniteAbstraction, steps: int) -> Pmf:
    """``p_{t+steps} = p_t P^steps``; never renormalized."""
    P = abstraction.matrix
    if pmf.values.shape[0] != P.shape[0]:
        raise ValueError("pmf length does not match the chain")
    p = pmf.values
    for _ in range(steps):
        p = p @ P
    return Pmf(p, pmf.t + steps)


def propagate_all(pmf: Pmf, abstraction: FiniteAbstraction, steps: int) -> list[Pmf]:
    out = [pmf]
    for _ in range(steps):
        out.append(propagate(out[-1], abstraction, 1))
    return out


def density_estimate(pmf: Pmf, partition: Partition) -> DensityApprox:
    """Piecewise-constant density ``p_t(i) / |A_i|`` on each cell, zero outside."""
    vals = pmf.values[: partition.n] / partition.volumes
    return DensityApprox(partition, InterpScheme.constant(partition.dim), vals, pmf.t)


def error_bound(lambda_0: float, lambda_f: float, m_f: float, delta: float, t: int, relaxed: bool = False) -> float:
    """Abstraction error ``[kappa(t, m_f) lambda_f + m_f^t lambda_0] delta`` (``lambda_0`` dropped if relaxed)."""
    if min(lambda_0, lambda_f, delta) < 0 or not m_f > 0:
        raise ValueError("inputs must be nonnegative and m_f positive")
    lead = 0.0 if relaxed else m_f**t * lambda_0
    return (kappa(t, m_f) * lambda_f + lead) * delta


def error_bound_recursive(lambda_0: float, lambda_f: float, m_f: float, delta: float, t: int,
                          relaxed: bool = False) -> float:
    e = 0.0 if relaxed else lambda_0 * delta
    for _ in range(t):
        e = m_f * e + lambda_f * delta
    return e


def error_budget(kernel, init, delta: float, t: int, relaxed: bool = False,
                 abstraction: FiniteAbstraction | None = None) -> ErrorBudget:
    sched = truncation_error(kernel.epsilon_tail, init.epsilon_0, kernel.m_f, t)
    e_t = error_bound(init.lambda_0, kernel.lambda_f, kernel.m_f, delta, t, relaxed)
    extra = abstraction.sparsification_error(t) if abstraction is not None else 0.0
    return ErrorBudget(
        eps_t=sched[t],
        e_t=e_t,
        inputs={"lambda_0": init.lambda_0, "lambda_f": kernel.lambda_f, "m_f": kernel.m_f,
                "delta": delta, "t": t, "epsilon": kernel.epsilon_tail, "relaxed": relaxed},
        certified=kernel.m_f_certified,
        extra=extra,
    )
