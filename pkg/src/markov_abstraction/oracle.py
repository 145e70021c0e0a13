"""Independent references: closed-form linear-Gaussian densities and Monte-Carlo invariance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .geometry import Box
from .truncation import kappa

MC_BLOCK = 65_536


@dataclass(frozen=True)
class AnalyticLinGauss:
    """``s' = a s + b + sigma w`` started uniformly on ``[beta0, gamma0]``."""

    a: float
    b: float
    sigma: float
    beta0: float
    gamma0: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("closed form implemented for a > 0 only")
        if not self.gamma0 > self.beta0:
            raise ValueError("empty initial interval")

    def drift(self, t: int) -> float:
        return self.b * kappa(t, self.a)

    def std(self, t: int) -> float:
        return self.sigma * math.sqrt(kappa(t, self.a * self.a))

    def density(self, t: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        width = self.gamma0 - self.beta0
        if t == 0:
            return np.where((x >= self.beta0) & (x <= self.gamma0), 1.0 / width, 0.0)
        at = self.a**t
        c, st = self.drift(t), self.std(t)
        return (ndtr((x - c - at * self.beta0) / st) - ndtr((x - c - at * self.gamma0) / st)) / (at * width)

    def mass(self, t: int, lo: float, hi: float) -> float:
        """Probability that ``s(t)`` lies in ``[lo, hi]`` (numerical quadrature of the density)."""
        from scipy.integrate import quad

        return quad(lambda x: float(self.density(t, x)), lo, hi, limit=200, epsabs=1e-12)[0]


def analytic_density(params: AnalyticLinGauss, t: int, x) -> np.ndarray:
    return params.density(t, x)


def mc_invariance(kernel, init, safe_set: Box, horizon: int, trials: int = 1_000_000, rng_seed: int = 0):
    """Monte-Carlo estimate of the probability of staying in ``safe_set`` for ``horizon`` steps.

    Needs a kernel of the form ``s' = F s + g + w`` with a noise sampler and
    an initial density with a sampler.  Trajectories are simulated in blocks
    of ``MC_BLOCK``; block ``k`` draws from ``SeedSequence(rng_seed).spawn``'s
    ``k``-th child stream (PCG64), so results do not depend on the order in
    which blocks are run.  Returns ``(estimate, stderr)``.
    """
    if trials < 10_000:
        raise ValueError("use at least 10^4 trials")
    if kernel.linear_form is None:
        raise ValueError("kernel has no simulable linear form")
    F, g, noise = kernel.linear_form
    if noise.sampler is None or init.sampler is None:
        raise ValueError("noise and initial density need samplers")
    nblocks = -(-trials // MC_BLOCK)
    seeds = np.random.SeedSequence(rng_seed).spawn(nblocks)
    safe = 0
    for k, seq in enumerate(seeds):
        m = min(MC_BLOCK, trials - k * MC_BLOCK)
        rng = np.random.Generator(np.random.PCG64(seq))
        s = init.sampler(rng, m)
        alive = safe_set.contains(s)
        for _ in range(horizon):
            s = s @ F.T + g + noise.sampler(rng, m)
            alive &= safe_set.contains(s)
        safe += int(np.count_nonzero(alive))
    p = safe / trials
    return p, math.sqrt(p * (1.0 - p) / trials)
