"""Finite-horizon probabilistic invariance, forward (densities) and backward (value functions)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .abstraction import build_chain_averaged, build_chain_representative, initial_pmf, propagate_all
from .geometry import Box, partition_uniform
from .truncation import kappa

DEFAULT_MAX_CELLS = 20_000


class CertificateUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class InvarianceProblem:
    safe_set: Box
    horizon: int
    kernel: object
    init: object

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.safe_set.dim != self.kernel.dim:
            raise ValueError("safe set and kernel dimensions differ")


@dataclass(frozen=True)
class InvarianceResult:
    estimate: float
    bound: float
    method: str
    delta: float
    n_cells: int
    diagnostics: dict = field(default_factory=dict)
    certified: bool = True

    @property
    def interval(self) -> tuple[float, float]:
        return max(0.0, self.estimate - self.bound), min(1.0, self.estimate + self.bound)


def forward_bound(kernel, safe_set: Box, horizon: int, delta: float) -> float:
    return kappa(horizon, kernel.m_f) * kernel.lambda_f * delta * safe_set.volume


def backward_bound(kernel, safe_set: Box, horizon: int, delta: float) -> float:
    if kernel.lambda_b is None:
        raise ValueError("backward bound needs lambda_b")
    m_b = 1.0 if kernel.m_b is None else kernel.m_b
    return kappa(horizon, m_b) * kernel.lambda_b * delta * safe_set.volume


def _partition(problem: InvarianceProblem, delta: float, max_cells: int):
    part = partition_uniform(problem.safe_set, target_delta=delta)
    if part.n > max_cells:
        mem = 8.0 * (part.n + 1) ** 2 / 2**20
        raise MemoryError(
            f"delta={delta:g} needs {part.n} cells (dense matrix ~{mem:.0f} MiB); "
            f"limit is {max_cells} cells"
        )
    return part


def forward_invariance(problem: InvarianceProblem, delta: float, max_cells: int = DEFAULT_MAX_CELLS,
                       quad_tol: float = 1e-8) -> InvarianceResult:
    """Propagate the cell-averaged chain built on the safe set; in-set mass at the horizon."""
    part = _partition(problem, delta, max_cells)
    chain = build_chain_averaged(problem.kernel, part, quad_tol)
    pmfs = propagate_all(initial_pmf(problem.init, part), chain, problem.horizon)
    masses = [p.mass_in_domain for p in pmfs]
    return InvarianceResult(
        estimate=masses[-1],
        bound=forward_bound(problem.kernel, problem.safe_set, problem.horizon, part.delta),
        method="forward",
        delta=part.delta,
        n_cells=part.n,
        diagnostics={"mass": masses},
        certified=problem.kernel.m_f_certified,
    )


def backward_invariance(problem: InvarianceProblem, delta: float, representative_points=None,
                        max_cells: int = DEFAULT_MAX_CELLS, quad_tol: float = 1e-8) -> InvarianceResult:
    """Value iteration on the representative-point chain, weighted by the initial cell masses."""
    part = _partition(problem, delta, max_cells)
    chain = build_chain_representative(problem.kernel, part, representative_points, quad_tol)
    n = part.n
    P = chain.matrix[:n, :n]
    v = np.ones(n)
    values = [v]
    for _ in range(problem.horizon):
        v = P @ v
        values.append(v)
    values.reverse()  # values[t] is the value function at time t
    p0 = initial_pmf(problem.init, part).values[:n]
    return InvarianceResult(
        estimate=float(values[0] @ p0),
        bound=backward_bound(problem.kernel, problem.safe_set, problem.horizon, part.delta),
        method="backward",
        delta=part.delta,
        n_cells=n,
        diagnostics={
            "value_min": [float(x.min()) for x in values],
            "value_max": [float(x.max()) for x in values],
            "values": values,
        },
    )


@dataclass(frozen=True)
class ComparisonReport:
    rows: list
    winner: str
    estimate_gap: float

    def table(self) -> str:
        head = f"{'method':<10}{'estimate':>14}{'bound':>12}  constants"
        lines = [head]
        for r in self.rows:
            consts = ", ".join(f"{k}={v:.6g}" for k, v in r["constants"].items())
            lines.append(f"{r['method']:<10}{r['estimate']:>14.8f}{r['bound']:>12.6f}  {consts}")
        lines.append(f"smaller bound: {self.winner}; |forward - backward| = {self.estimate_gap:.3e}")
        return "\n".join(lines)


def compare_methods(problem: InvarianceProblem, delta: float, run_chains: bool = True, **kw) -> ComparisonReport:
    """Forward and backward side by side; with ``run_chains=False`` only the bounds are evaluated."""
    k = problem.kernel
    m_b = 1.0 if k.m_b is None else k.m_b
    if run_chains:
        fwd = forward_invariance(problem, delta, **kw)
        bwd = backward_invariance(problem, delta, **kw)
        est_f, est_b = fwd.estimate, bwd.estimate
        ef, eb = fwd.bound, bwd.bound
    else:
        est_f = est_b = math.nan
        ef = forward_bound(k, problem.safe_set, problem.horizon, delta)
        eb = backward_bound(k, problem.safe_set, problem.horizon, delta)
    rows = [
        {"method": "forward", "estimate": est_f, "bound": ef,
         "constants": {"lambda_f": k.lambda_f, "m_f": k.m_f}},
        {"method": "backward", "estimate": est_b, "bound": eb,
         "constants": {"lambda_b": k.lambda_b, "m_b": m_b}},
    ]
    if ef < eb:
        winner = "forward"
    elif eb < ef:
        winner = "backward"
    else:
        winner = "tie"
    return ComparisonReport(rows, winner, abs(est_f - est_b))


def convergence_certificate(kernel, init_sup: float, safe_set: Box, t: int) -> float:
    """Upper bound ``|A| sup(pi_0) m_f^t`` on the probability of being in ``safe_set`` at time ``t``."""
    if not kernel.m_f < 1:
        raise CertificateUnavailable(f"not applicable: m_f = {kernel.m_f:g} >= 1")
    if not math.isfinite(init_sup) or init_sup < 0:
        raise ValueError("init_sup must be finite and nonnegative")
    return safe_set.volume * init_sup * kernel.m_f**t
