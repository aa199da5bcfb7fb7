"""Spatial and temporal geometry for the bulk-surface heat system.

The spatial domain is the interval (0, length) on a uniform grid of
``n_cells + 1`` nodes.  A field is a single nodal vector ``u`` of length
``n_cells + 1``; its boundary trace is the pair ``(u[0], u[-1])``.  The
state space pairs the bulk L2 integral with unit point masses at the two
boundary nodes, so the squared norm of a field is

    |u|^2  =  sum_i w_i u_i^2  +  u_0^2  +  u_n^2,

with ``w`` the trapezoidal bulk quadrature weights (h/2 at the ends, h
elsewhere).  Bulk and boundary contributions are kept as separate sums;
the endpoints carry both a bulk weight and a boundary point mass.

Control geometry is a finite union of disjoint open subintervals of the
bulk (the spatial control region) and of the time axis (the time control
set).  All measure arithmetic on these unions is exact interval
arithmetic, no quadrature involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError


def _validate_intervals(intervals, lo, hi, what):
    out = []
    for pair in intervals:
        if len(pair) != 2:
            raise ConfigurationError(f"{what}: interval needs two endpoints, got {pair!r}")
        a, b = float(pair[0]), float(pair[1])
        if not a < b:
            raise ConfigurationError(f"{what}: empty interval ({a}, {b})")
        if a < lo - 1e-12 or b > hi + 1e-12:
            raise ConfigurationError(f"{what}: interval ({a}, {b}) outside ({lo}, {hi})")
        out.append((a, b))
    out.sort()
    for (a0, b0), (a1, b1) in zip(out, out[1:]):
        if a1 < b0:
            raise ConfigurationError(f"{what}: intervals ({a0},{b0}) and ({a1},{b1}) overlap")
    return tuple(out)


@dataclass(frozen=True)
class DomainConfig:
    """Uniform grid on (0, length) with bulk and boundary quadrature."""

    length: float
    n_cells: int
    nodes: np.ndarray = field(init=False, repr=False)
    bulk_weights: np.ndarray = field(init=False, repr=False)
    boundary_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"length must be positive, got {self.length}")
        if self.n_cells < 1:
            raise ConfigurationError(f"n_cells must be positive, got {self.n_cells}")
        n = self.n_cells
        h = self.length / n
        nodes = np.linspace(0.0, self.length, n + 1)
        bulk = np.full(n + 1, h)
        bulk[0] = bulk[-1] = h / 2.0
        bnd = np.zeros(n + 1)
        bnd[0] = bnd[-1] = 1.0
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "bulk_weights", bulk)
        object.__setattr__(self, "boundary_weights", bnd)

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def combined_weights(self) -> np.ndarray:
        """Weights of the full product norm (bulk plus boundary masses)."""
        return self.bulk_weights + self.boundary_weights

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n_nodes:
            raise DimensionError(
                f"field has {u.shape[-1]} nodes, grid has {self.n_nodes}")
        return u

    def inner_product(self, u, v) -> float:
        """Product-space inner product: bulk quadrature plus boundary point sum."""
        u, v = self._check(u), self._check(v)
        return float(np.sum(self.combined_weights * u * v))

    def norm(self, u) -> float:
        return np.sqrt(max(self.inner_product(u, u), 0.0))

    def bulk_inner(self, u, v) -> float:
        u, v = self._check(u), self._check(v)
        return float(np.sum(self.bulk_weights * u * v))

    def bulk_norm(self, u) -> float:
        return np.sqrt(max(self.bulk_inner(u, u), 0.0))

    def boundary_norm(self, u) -> float:
        u = self._check(u)
        return float(np.sqrt(u[0] ** 2 + u[-1] ** 2))

    def g0_norm(self, u, region: "ControlRegion") -> float:
        """L2 norm of the bulk part of ``u`` restricted to the control region.

        Boundary point masses are excluded: the observation reads the bulk
        values on the region only.  Quadrature weights are exact overlaps of
        the nodes' dual cells with the region, which keeps the restriction
        second-order accurate whatever the region endpoints.
        """
        u = self._check(u)
        w = region.quadrature_weights(self)
        return float(np.sqrt(np.sum(w * u * u)))


@dataclass(frozen=True)
class ControlRegion:
    """Finite union of disjoint open subintervals of the bulk."""

    intervals: tuple

    def __post_init__(self):
        if not self.intervals:
            raise ConfigurationError("control region must be nonempty")
        object.__setattr__(self, "intervals", tuple(tuple(p) for p in self.intervals))

    @classmethod
    def validated(cls, intervals, domain: DomainConfig) -> "ControlRegion":
        return cls(_validate_intervals(intervals, 0.0, domain.length, "control region"))

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def indicator(self, domain: DomainConfig) -> np.ndarray:
        """0/1 node mask by membership of the node in the open union."""
        x = domain.nodes
        mask = np.zeros_like(x)
        for a, b in self.intervals:
            mask[(x > a) & (x < b)] = 1.0
        return mask

    def quadrature_weights(self, domain: DomainConfig) -> np.ndarray:
        """Exact overlap of each node's dual cell with the region.

        The dual cell of node i is (x_i - h/2, x_i + h/2) clipped to the
        domain, so with the full domain as region these weights reduce to
        the bulk trapezoid weights, and they always sum to the region
        measure.  Raises if the region holds no grid node at all.
        """
        x = domain.nodes
        h = domain.h
        lo = np.maximum(x - h / 2.0, 0.0)
        hi = np.minimum(x + h / 2.0, domain.length)
        w = np.zeros_like(x)
        for a, b in self.intervals:
            w += np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        if not self.indicator(domain).any():
            raise ConfigurationError(
                "control region contains no grid node; refine the grid or widen it")
        return w


@dataclass(frozen=True)
class TimeSet:
    """Horizon T and a finite union of disjoint subintervals of (0, T)."""

    horizon: float
    intervals: tuple

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        ivs = _validate_intervals(self.intervals, 0.0, self.horizon, "time control set")
        object.__setattr__(self, "intervals", ivs)
        if self.measure <= 0:
            raise ConfigurationError("time control set must have positive measure")

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def intersect(self, s: float, t: float) -> tuple:
        """Components of the set clipped to (s, t), exact interval arithmetic."""
        if s >= t:
            raise ValueError(f"need s < t, got s={s}, t={t}")
        out = []
        for a, b in self.intervals:
            lo, hi = max(a, s), min(b, t)
            if lo < hi:
                out.append((lo, hi))
        return tuple(out)

    def intersection_measure(self, s: float, t: float) -> float:
        return float(sum(b - a for a, b in self.intersect(s, t)))

    def largest_component_in(self, s: float, t: float):
        """Largest clipped component in (s, t), or None; ties pick the earliest."""
        comps = self.intersect(s, t)
        if not comps:
            return None
        return max(comps, key=lambda iv: iv[1] - iv[0])

    def covers_tail(self, tol: float = 1e-12) -> bool:
        """True iff every left tail (s, T) meets the set with positive measure.

        For a finite interval union this holds exactly when the last interval
        reaches the horizon.
        """
        return self.intervals[-1][1] >= self.horizon - tol

    def contains(self, t: float) -> bool:
        return any(a < t < b for a, b in self.intervals)
