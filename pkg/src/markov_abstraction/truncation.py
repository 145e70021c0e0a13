"""Truncation error schedule and a grid reference for the truncated recursion."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .quadrature import gauss_legendre_unit

KAPPA_UNIT_TOL = 1e-9


def kappa(t: int, m: float) -> float:
    """Partial geometric sum ``1 + m + ... + m**(t-1)`` (equals ``t`` at ``m == 1``)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if abs(m - 1.0) < KAPPA_UNIT_TOL:
        return float(t)
    return (1.0 - m**t) / (1.0 - m)


@dataclass(frozen=True)
class TruncationSchedule:
    epsilon: float
    epsilon_0: float
    m_f: float
    horizon: int
    values: tuple

    def __getitem__(self, t: int) -> float:
        return self.values[t]

    def closed_form(self, t: int) -> float:
        return kappa(t, self.m_f) * self.epsilon + self.m_f**t * self.epsilon_0


def truncation_error(epsilon: float, epsilon_0: float, m_f: float, horizon: int) -> TruncationSchedule:
    """``eps_{t+1} = epsilon + m_f eps_t`` starting from ``epsilon_0``, for ``t <= horizon``."""
    if epsilon < 0 or epsilon_0 < 0:
        raise ValueError("tail bounds must be nonnegative")
    if not m_f > 0:
        raise ValueError("m_f must be positive")
    vals = [float(epsilon_0)]
    for _ in range(horizon):
        vals.append(epsilon + m_f * vals[-1])
    return TruncationSchedule(epsilon, epsilon_0, m_f, horizon, tuple(vals))


def truncated_propagate(kernel, init, domain: Box, horizon: int, points_per_axis: int = 400,
                        panels: int | None = None):
    """Grid reference for ``mu_{t+1}(x) = int_domain t(x|s) mu_t(s) ds``.

    The domain is split into panels, each carrying a Gauss-Legendre rule; the
    nodes double as the evaluation grid.  Panel edges include the initial
    support endpoints so the indicator in ``mu_0`` is integrated exactly.
    Test oracle only; it carries no certificate.  Returns ``(nodes, weights,
    [mu_0, ..., mu_N])``.
    """
    if domain.dim != 1:
        raise NotImplementedError("grid reference implemented for 1D models")
    lo, hi = float(domain.lower[0]), float(domain.upper[0])
    panels = panels or max(1, points_per_axis // 8)
    breaks = np.linspace(lo, hi, panels + 1)
    extra = [x for x in (init.support.lower[0], init.support.upper[0]) if lo < x < hi]
    breaks = np.unique(np.concatenate([breaks, extra]))
    gx, gw = gauss_legendre_unit(8, 1)
    widths = np.diff(breaks)
    nodes = (breaks[:-1, None] + widths[:, None] * gx[None, :, 0]).ravel()
    weights = (widths[:, None] * gw[None, :]).ravel()

    if kernel.band is not None:
        bw = float(kernel.band.half_width[0])
        if np.max(widths) / 8 > bw / 4:
            warnings.warn("grid is coarse relative to the kernel band width", stacklevel=2)

    pts = nodes[:, None]
    K = kernel.density(pts[:, None, :], pts[None, :, :])
    mu = np.where(init.support.contains(pts), init.density(pts), 0.0)
    out = [mu]
    for _ in range(horizon):
        mu = K @ (weights * mu)
        out.append(mu)
    return nodes, weights, out
