"""Boxes, affine support bands, the support-set recursion and uniform partitions."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def _vec(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[lower, upper]`` with nonempty interior."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lower), _vec(self.upper)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"empty box: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, points, closed: bool = True) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if closed:
            inside = (pts >= self.lower) & (pts <= self.upper)
        else:
            inside = (pts > self.lower) & (pts < self.upper)
        return np.all(inside, axis=-1)

    def issubset(self, other: "Box", atol: float = 0.0) -> bool:
        return bool(np.all(self.lower >= other.lower - atol) and np.all(self.upper <= other.upper + atol))

    def hull(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if np.all(lo < hi):
            return Box(lo, hi)
        return None

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return bool(np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Box":
        return cls(data["lower"], data["upper"])


@dataclass(frozen=True, eq=False)
class BandMap:
    """Support band ``{(s, s') : |s' - (F s + g)| <= half_width}`` (componentwise).

    ``xi(s)`` is the box of admissible next states.  The image of a box is
    the box hull of ``F @ box + g`` widened by ``half_width``; it is exact for
    diagonal ``F``.
    """

    matrix: np.ndarray
    offset: np.ndarray
    half_width: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.matrix, dtype=float)).copy()
        g = _vec(self.offset)
        w = _vec(self.half_width)
        d = F.shape[0]
        if F.shape != (d, d) or g.shape != (d,) or w.shape != (d,):
            raise ValueError("band matrix, offset and half_width dimensions disagree")
        if np.any(w < 0):
            raise ValueError("half_width must be nonnegative")
        F.setflags(write=False)
        object.__setattr__(self, "matrix", F)
        object.__setattr__(self, "offset", g)
        object.__setattr__(self, "half_width", w)

    @property
    def dim(self) -> int:
        return self.offset.shape[0]

    def center(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) @ self.matrix.T + self.offset

    def xi(self, s) -> tuple[np.ndarray, np.ndarray]:
        c = self.center(s)
        return c - self.half_width, c + self.half_width

    def contains(self, s_next, s) -> np.ndarray:
        return np.all(np.abs(np.asarray(s_next) - self.center(s)) <= self.half_width, axis=-1)

    def image_bounds(self, lower, upper) -> tuple[np.ndarray, np.ndarray]:
        F = self.matrix
        lo = np.minimum(F * lower, F * upper).sum(axis=1) + self.offset - self.half_width
        hi = np.maximum(F * lower, F * upper).sum(axis=1) + self.offset + self.half_width
        return lo, hi


def support_recursion(band: BandMap, initial_support: Box, horizon: int) -> list[Box]:
    """Support boxes ``[L_0, ..., L_N]`` with ``L_{t+1}`` the hull of the band image of ``L_t``."""
    if not isinstance(band, BandMap):
        raise TypeError("only affine band maps are supported for the support recursion")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if band.dim != initial_support.dim:
        raise ValueError("band and initial support dimensions differ")
    boxes = [initial_support]
    lo, hi = initial_support.lower, initial_support.upper
    for _ in range(horizon):
        lo, hi = band.image_bounds(lo, hi)
        boxes.append(_box_allow_degenerate(lo, hi))
    return boxes


def _box_allow_degenerate(lo, hi) -> Box:
    # A zero-width band on a contracting map can collapse an axis; keep a sliver.
    hi = np.where(hi > lo, hi, np.nextafter(lo, np.inf))
    return Box(lo, hi)


def truncated_domain(supports: list[Box]) -> Box:
    """Smallest box containing every support box."""
    if not supports:
        raise ValueError("need at least one support box")
    lo = np.min([b.lower for b in supports], axis=0)
    hi = np.max([b.upper for b in supports], axis=0)
    return Box(lo, hi)


@dataclass(frozen=True, eq=False)
class Partition:
    """Regular grid of ``n`` cells over ``domain``; index ``n`` is the sink (outside).

    Cells are half-open on their upper faces except along the domain's upper
    boundary, so every point of the closed domain has exactly one cell.
    """

    domain: Box
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(counts) != self.domain.dim or min(counts) < 1:
            raise ValueError("need one positive cell count per axis")
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n(self) -> int:
        return int(np.prod(self.counts))

    @property
    def sink_index(self) -> int:
        return self.n

    @cached_property
    def edges(self) -> list[np.ndarray]:
        return [
            np.linspace(lo, hi, c + 1)
            for lo, hi, c in zip(self.domain.lower, self.domain.upper, self.counts)
        ]

    @cached_property
    def cell_widths(self) -> np.ndarray:
        return self.domain.widths / np.asarray(self.counts)

    @cached_property
    def _multi_index(self) -> np.ndarray:
        grids = np.meshgrid(*[np.arange(c) for c in self.counts], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def cell_lower(self) -> np.ndarray:
        mi = self._multi_index
        arr = np.stack([self.edges[k][mi[:, k]] for k in range(self.dim)], axis=-1)
        arr.setflags(write=False)
        return arr

    @cached_property
    def cell_upper(self) -> np.ndarray:
        mi = self._multi_index
        arr = np.stack([self.edges[k][mi[:, k] + 1] for k in range(self.dim)], axis=-1)
        arr.setflags(write=False)
        return arr

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.prod(self.cell_upper - self.cell_lower, axis=-1)

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.linalg.norm(self.cell_upper - self.cell_lower, axis=-1)

    @property
    def delta(self) -> float:
        return float(np.max(self.diameters))

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.cell_lower + self.cell_upper)

    @property
    def cells(self) -> list[Box]:
        return [Box(lo, hi) for lo, hi in zip(self.cell_lower, self.cell_upper)]

    def cell(self, i: int) -> Box:
        return Box(self.cell_lower[i], self.cell_upper[i])

    def locate(self, points) -> np.ndarray:
        """Cell index of each point; points outside the closed domain map to the sink."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.dim == 1:
            pts = pts[:, None]
        pts = np.atleast_2d(pts)
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        inside = self.domain.contains(pts)
        stride = 1
        for k in reversed(range(self.dim)):
            c = self.counts[k]
            j = np.searchsorted(self.edges[k], pts[:, k], side="right") - 1
            j = np.clip(j, 0, c - 1)
            idx += j * stride
            stride *= c
        idx[~inside] = self.sink_index
        return idx

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "counts": list(self.counts)}


def partition_uniform(domain: Box, target_delta: float | None = None, cells_per_axis=None) -> Partition:
    """Regular grid with either the given counts or cell diameter at most ``target_delta``."""
    if (target_delta is None) == (cells_per_axis is None):
        raise ValueError("give exactly one of target_delta or cells_per_axis")
    if cells_per_axis is not None:
        counts = np.broadcast_to(np.asarray(cells_per_axis, dtype=int), (domain.dim,))
        return Partition(domain, tuple(counts))
    if not target_delta > 0:
        raise ValueError("target_delta must be positive")
    if target_delta >= domain.diameter:
        warnings.warn("target_delta exceeds the domain diameter; using a single cell", stacklevel=2)
        return Partition(domain, (1,) * domain.dim)
    # Per-axis width target_delta / sqrt(d) keeps every cell diagonal below target_delta.
    per_axis = target_delta / math.sqrt(domain.dim)
    counts = np.ceil(domain.widths / per_axis * (1 - 1e-12)).astype(int)
    counts = np.maximum(counts, 1)
    return Partition(domain, tuple(counts))
