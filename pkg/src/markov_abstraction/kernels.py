"""Transition kernels, initial densities and their certified constants.

Evaluators follow one convention: ``density(s_next, s)`` takes arrays whose
last axis is the state dimension, broadcasts them against each other and
returns the density with that axis removed.  Evaluators must be pure, so the
assembly code may call them from several threads at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e

from .geometry import BandMap, Box

SQRT2PI = math.sqrt(2.0 * math.pi)


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / SQRT2PI


def gaussian_derivative_peak(order: int) -> float:
    """``max_z |d^order/dz^order phi_1(z)|`` for the standard normal pdf.

    The derivative is ``(-1)^m He_m(z) phi_1(z)`` and its extrema sit at the
    roots of ``He_{m+1}``, so the maximum is taken over finitely many points.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order == 0:
        return 1.0 / SQRT2PI
    roots = hermite_e.hermeroots([0] * (order + 1) + [1]).real
    he = hermite_e.hermeval(roots, [0] * order + [1])
    return float(np.max(np.abs(he) * std_normal_pdf(roots)))


@dataclass(frozen=True)
class DerivativeBounds:
    """Bounds on derivatives of the kernel in the next state.

    ``order`` maps ``h`` to the 1D bound on the ``h``-th derivative,
    ``second[k]`` bounds the pure second derivative along axis ``k``,
    ``third_mixed[i][j]`` bounds the derivative twice along ``i`` and once
    along ``j`` (diagonal unused) and ``third_cross`` the 3D derivative
    along all three axes once each.
    """

    order: dict = field(default_factory=dict)
    second: tuple = ()
    third_mixed: tuple = ()
    third_cross: float | None = None

    def __post_init__(self):
        values = list(self.order.values()) + list(self.second)
        values += [v for row in self.third_mixed for v in row]
        if self.third_cross is not None:
            values.append(self.third_cross)
        if any(v < 0 for v in values):
            raise ValueError("derivative bounds must be nonnegative")

    def require_order(self, h: int) -> float:
        if h not in self.order:
            raise ValueError(f"no bound on the order-{h} derivative supplied")
        return self.order[h]


@dataclass(frozen=True)
class NoiseDensity:
    """Additive noise density ``t_w`` with its Lipschitz constant.

    ``sampler(rng, size)`` is optional and only used by the Monte-Carlo oracle.
    """

    dim: int
    density: Callable[[np.ndarray], np.ndarray]
    lipschitz: float | None
    derivative_bounds: DerivativeBounds | None = None
    sampler: Callable | None = None


def gaussian_noise(sigma) -> NoiseDensity:
    """Zero-mean Gaussian noise with independent components of std ``sigma``."""
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(sig <= 0):
        raise ValueError("sigma must be positive")
    d = sig.shape[0]
    norm = 1.0 / np.prod(sig * SQRT2PI)

    def density(w):
        z = np.asarray(w, dtype=float) / sig
        return norm * np.exp(-0.5 * np.sum(z * z, axis=-1))

    # sup |grad| is reached along the axis of smallest variance at one std.
    lip = float(norm * math.exp(-0.5) / sig.min())

    def peak(axis_orders):
        out = 1.0
        for k in range(d):
            m = axis_orders.get(k, 0)
            out *= gaussian_derivative_peak(m) / sig[k] ** (m + 1)
        return float(out)

    order = {}
    if d == 1:
        order = {h: peak({0: h}) for h in range(1, 9)}
    second = tuple(peak({k: 2}) for k in range(d))
    mixed = tuple(
        tuple(0.0 if i == j else peak({i: 2, j: 1}) for j in range(d)) for i in range(d)
    )
    cross = peak({0: 1, 1: 1, 2: 1}) if d == 3 else None
    bounds = DerivativeBounds(order=order, second=second, third_mixed=mixed, third_cross=cross)

    def sampler(rng, size):
        return rng.standard_normal((*np.atleast_1d(size), d)) * sig

    return NoiseDensity(d, density, lip, bounds, sampler)


@dataclass(frozen=True)
class Kernel:
    """Conditional density ``t(s_next | s)`` plus the constants the error bounds use.

    ``lambda_f`` is the Lipschitz constant in the next state, ``lambda_b`` the
    one in the current state (over the safe set), ``m_f`` bounds the integral
    of the density over the current state and ``m_b`` the one-step probability
    of staying in the safe set.  ``m_f_certified`` is False when ``m_f`` came
    from sampling rather than an analytic bound.
    """

    dim: int
    density: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lambda_f: float
    m_f: float
    lambda_b: float | None = None
    m_b: float | None = None
    derivative_bounds: DerivativeBounds | None = None
    band: BandMap | None = None
    epsilon_tail: float = 0.0
    m_f_certified: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    # (F, g, noise) when the kernel is s' = F s + g + w; used by the Monte-Carlo oracle.
    linear_form: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.lambda_f < 0 or (self.lambda_b is not None and self.lambda_b < 0):
            raise ValueError("Lipschitz constants must be nonnegative")
        if not self.m_f > 0:
            raise ValueError("m_f must be positive")
        if self.m_b is not None and not 0 < self.m_b <= 1:
            raise ValueError("m_b must lie in (0, 1]")
        if self.epsilon_tail < 0:
            raise ValueError("epsilon_tail must be nonnegative")
        if self.band is not None and self.band.dim != self.dim:
            raise ValueError("band dimension differs from kernel dimension")

    def __call__(self, s_next, s):
        return self.density(s_next, s)

    def constants(self) -> dict:
        return {
            "lambda_f": self.lambda_f,
            "lambda_b": self.lambda_b,
            "m_f": self.m_f,
            "m_b": self.m_b,
            "epsilon": self.epsilon_tail,
            "m_f_certified": self.m_f_certified,
        }


@dataclass(frozen=True)
class InitialDensity:
    """Initial density with Lipschitz constant, support box and tail bound."""

    density: Callable[[np.ndarray], np.ndarray]
    lambda_0: float
    support: Box
    epsilon_0: float = 0.0
    sup: float | None = None
    sampler: Callable | None = field(default=None, compare=False, repr=False)

    def __call__(self, s):
        return self.density(s)

    @property
    def dim(self) -> int:
        return self.support.dim


def uniform_initial(support: Box) -> InitialDensity:
    """Uniform density on a box: zero Lipschitz constant inside, zero tail."""
    height = 1.0 / support.volume

    def density(s):
        return np.where(support.contains(s), height, 0.0)

    def sampler(rng, size):
        u = rng.random((*np.atleast_1d(size), support.dim))
        return support.lower + u * support.widths

    return InitialDensity(density, 0.0, support, 0.0, sup=height, sampler=sampler)


def linear_gaussian_1d(a: float, b: float, sigma: float, alpha: float, init) -> tuple[Kernel, InitialDensity]:
    """Kernel of ``s' = a s + b + sigma w`` with standard normal ``w`` and a uniform start.

    ``alpha`` sets the support band ``|s' - a s - b| <= alpha sigma`` and the
    tail bound ``phi_1(alpha) / sigma`` outside it.
    """
    if a == 0:
        raise ValueError("a = 0 gives a degenerate kernel (m_f undefined)")
    if not sigma > 0 or not alpha > 0:
        raise ValueError("sigma and alpha must be positive")
    lo, hi = (init.lower, init.upper) if isinstance(init, Box) else init
    support = init if isinstance(init, Box) else Box([lo], [hi])

    noise = gaussian_noise(sigma)
    lambda_f = 1.0 / (sigma**2 * math.sqrt(2.0 * math.pi * math.e))

    def density(s_next, s):
        u = (np.asarray(s_next)[..., 0] - a * np.asarray(s)[..., 0] - b) / sigma
        return np.exp(-0.5 * u * u) / (sigma * SQRT2PI)

    band = BandMap([[a]], [b], [alpha * sigma])
    kernel = Kernel(
        dim=1,
        density=density,
        lambda_f=lambda_f,
        m_f=1.0 / abs(a),
        lambda_b=abs(a) * lambda_f,
        m_b=None,
        derivative_bounds=noise.derivative_bounds,
        band=band,
        epsilon_tail=float(std_normal_pdf(alpha) / sigma),
        name="linear_gaussian_1d",
        params={"a": a, "b": b, "sigma": sigma, "alpha": alpha},
        linear_form=(np.array([[a]]), np.array([b]), noise),
    )
    return kernel, uniform_initial(support)


def linear_system_kernel(A, noise: NoiseDensity, offset=None, band_half_width=None, epsilon_tail=0.0) -> Kernel:
    """Kernel of ``s' = A s (+ offset) + w``; ``m_f = 1 / |det A|``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d) or noise.dim != d:
        raise ValueError("A must be square and match the noise dimension")
    det = np.linalg.det(A)
    if abs(det) < 1e-300 or np.linalg.matrix_rank(A) < d:
        raise ValueError("singular A: kernel has no finite m_f")
    if noise.lipschitz is None:
        raise ValueError("noise Lipschitz constant required")
    g = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)
    At = A.T.copy()

    def density(s_next, s):
        return noise.density(np.asarray(s_next) - np.asarray(s) @ At - g)

    band = None
    if band_half_width is not None:
        band = BandMap(A, g, band_half_width)
    return Kernel(
        dim=d,
        density=density,
        lambda_f=noise.lipschitz,
        m_f=1.0 / abs(det),
        # Lipschitz in s through the chain rule with the operator norm of A.
        lambda_b=noise.lipschitz * float(np.linalg.norm(A, 2)),
        derivative_bounds=noise.derivative_bounds,
        band=band,
        epsilon_tail=epsilon_tail,
        name="linear_system",
        params={"A": A.tolist(), "offset": g.tolist()},
        linear_form=(A, g, noise),
    )


def additive_noise_kernel(f_a: Callable, lip_fa: float, noise: NoiseDensity, m_f: float | None = None,
                          m_f_probe=None) -> Kernel:
    """Kernel of ``s' = f_a(s) + w``.

    ``lambda_f`` is the noise Lipschitz constant and ``lambda_b`` its product
    with ``lip_fa``.  Without an explicit ``m_f`` a sampled estimate is taken
    over ``m_f_probe = (box, n_points)`` and the kernel is marked uncertified.
    """
    if noise.lipschitz is None:
        raise ValueError("noise Lipschitz constant required")
    if not math.isfinite(lip_fa) or lip_fa < 0:
        raise ValueError("lip_fa must be finite and nonnegative")

    def density(s_next, s):
        return noise.density(np.asarray(s_next) - f_a(np.asarray(s)))

    certified = m_f is not None
    if m_f is None:
        if m_f_probe is None:
            raise ValueError("m_f must be supplied or estimated from a probe box")
        m_f = estimate_m_f(density, *m_f_probe)
    return Kernel(
        dim=noise.dim,
        density=density,
        lambda_f=noise.lipschitz,
        m_f=m_f,
        lambda_b=noise.lipschitz * lip_fa,
        derivative_bounds=noise.derivative_bounds,
        m_f_certified=certified,
        name="additive_noise",
    )


def estimate_m_f(density, box: Box, n_points: int = 64, quad_points: int = 400) -> float:
    """Sampled ``max_{s'} integral density(s', s) ds`` over ``box`` (not a certificate)."""
    from .quadrature import gauss_legendre_unit

    d = box.dim
    per_axis = max(2, int(round(quad_points ** (1.0 / d))))
    nodes, weights = gauss_legendre_unit(per_axis, d)
    s = box.lower + nodes * box.widths
    w = weights * box.volume
    probe_axes = [np.linspace(lo, hi, max(2, int(round(n_points ** (1.0 / d))))) for lo, hi in zip(box.lower, box.upper)]
    grids = np.meshgrid(*probe_axes, indexing="ij")
    probes = np.stack([g.ravel() for g in grids], axis=-1)
    vals = density(probes[:, None, :], s[None, :, :]) @ w
    return float(np.max(vals))
