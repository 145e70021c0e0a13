"""Adaptive tensor-product Gauss-Legendre quadrature over axis-aligned boxes.

Every integral in the abstraction and projection code goes through
:func:`integrate_boxes`, which integrates a batch of boxes at once.  Each box
is compared against the sum of its ``2**D`` dyadic children; boxes whose
two-level difference exceeds their tolerance are split and re-examined, the
children inheriting ``tol / 2**D`` each.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

# Rough cap on the number of integrand evaluations held in memory at once.
_MAX_POINTS_PER_CHUNK = 2_000_000


class QuadratureError(RuntimeError):
    """Adaptive refinement ran out of depth before meeting the tolerance."""

    def __init__(self, message, box_index=None, error_estimate=None):
        super().__init__(message)
        self.box_index = box_index
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class QuadratureSpec:
    points: int = 8
    max_depth: int = 12
    tol: float = 1e-8

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("need at least one Gauss point per axis")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@lru_cache(maxsize=None)
def gauss_legendre_unit(points: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes ``(P, dim)`` and weights ``(P,)`` on ``[0, 1]**dim``."""
    x, w = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def _child_offsets(dim: int) -> np.ndarray:
    corners = np.array(np.meshgrid(*([[0.0, 0.5]] * dim), indexing="ij"))
    return corners.reshape(dim, -1).T.copy()


def _apply_rule(f, lower, upper, owner, nodes, weights, ncomp):
    """Plain (non-adaptive) rule on each box; returns ``(B, ncomp)``."""
    out = np.empty((lower.shape[0], ncomp))
    npts = nodes.shape[0]
    step = max(1, _MAX_POINTS_PER_CHUNK // npts)
    for start in range(0, lower.shape[0], step):
        lo = lower[start:start + step]
        hi = upper[start:start + step]
        width = hi - lo
        x = lo[:, None, :] + width[:, None, :] * nodes[None, :, :]
        vals = np.asarray(f(x, owner[start:start + step]), dtype=float)
        if vals.ndim == 2:
            vals = vals[..., None]
        vol = np.prod(width, axis=-1)
        out[start:start + step] = np.einsum("bpk,p->bk", vals, weights) * vol[:, None]
    return out


def _probe_components(f, lower, upper, owner):
    x = 0.5 * (lower[:1] + upper[:1])[:, None, :]
    vals = np.asarray(f(x, owner[:1]), dtype=float)
    if vals.ndim == 2:
        return 1, True
    return vals.shape[-1], False


def integrate_boxes(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lower,
    upper,
    spec: QuadratureSpec = QuadratureSpec(),
    tol=None,
    return_error: bool = False,
):
    """Integrate ``f`` over each box ``[lower[b], upper[b]]``.

    ``f(x, owner)`` receives points ``x`` of shape ``(B, P, D)`` together with
    the index of the originating box for each row and must return ``(B, P)``
    or ``(B, P, k)`` values.  ``tol`` overrides ``spec.tol`` and may be given
    per box.  Returns an array of shape ``(nboxes,)`` or ``(nboxes, k)``.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    nbox, dim = lower.shape
    if np.any(upper < lower):
        raise ValueError("upper corner below lower corner")
    tol = np.broadcast_to(np.asarray(spec.tol if tol is None else tol, dtype=float), (nbox,))

    owner = np.arange(nbox)
    if nbox == 0:
        return (np.zeros(0), np.zeros(0)) if return_error else np.zeros(0)
    ncomp, scalar = _probe_components(f, lower, upper, owner)
    nodes, weights = gauss_legendre_unit(spec.points, dim)
    offsets = _child_offsets(dim)
    nchild = offsets.shape[0]

    total = np.zeros((nbox, ncomp))
    err_total = np.zeros(nbox)
    coarse = _apply_rule(f, lower, upper, owner, nodes, weights, ncomp)
    active_lo, active_hi, active_owner, active_tol = lower, upper, owner, tol.copy()

    for depth in range(1, spec.max_depth + 1):
        width = active_hi - active_lo
        child_lo = (active_lo[:, None, :] + offsets[None, :, :] * width[:, None, :]).reshape(-1, dim)
        child_hi = child_lo + np.repeat(0.5 * width, nchild, axis=0)
        child_owner = np.repeat(active_owner, nchild)
        child_vals = _apply_rule(f, child_lo, child_hi, child_owner, nodes, weights, ncomp)
        fine = child_vals.reshape(-1, nchild, ncomp).sum(axis=1)
        err = np.max(np.abs(fine - coarse), axis=-1)
        done = err <= active_tol
        np.add.at(total, active_owner[done], fine[done])
        np.add.at(err_total, active_owner[done], err[done])
        if np.all(done):
            break
        if depth == spec.max_depth:
            bad = int(np.argmax(np.where(done, -np.inf, err - active_tol)))
            box = int(active_owner[bad])
            raise QuadratureError(
                f"quadrature did not converge on box {box} "
                f"(estimate {err[bad]:.3e} > tol {active_tol[bad]:.3e})",
                box_index=box,
                error_estimate=float(err[bad]),
            )
        keep = np.repeat(~done, nchild)
        active_lo = child_lo[keep]
        active_hi = child_hi[keep]
        active_owner = child_owner[keep]
        active_tol = np.repeat(active_tol[~done] / nchild, nchild)
        coarse = child_vals[keep]

    if scalar:
        total = total[:, 0]
    if return_error:
        return total, err_total
    return total


def integrate_cell(f: Callable[[np.ndarray], np.ndarray], box, spec: QuadratureSpec = QuadratureSpec()):
    """Integrate a scalar ``f(points (P, D)) -> (P,)`` over one box.

    Returns ``(value, error_estimate)``.
    """
    lower = np.atleast_1d(np.asarray(box.lower if hasattr(box, "lower") else box[0], dtype=float))
    upper = np.atleast_1d(np.asarray(box.upper if hasattr(box, "upper") else box[1], dtype=float))
    val, err = integrate_boxes(
        lambda x, owner: f(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1]),
        lower[None, :],
        upper[None, :],
        spec,
        return_error=True,
    )
    return float(val[0]), float(err[0])
