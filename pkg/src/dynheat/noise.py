"""Coefficient processes, Brownian sampling, and the shared noise factor.

The zero-order coefficients a(t), b(t) are deterministic piecewise-constant
functions of time.  Because they multiply the whole state (bulk and surface
alike), the noise enters every eigenmode through one common scalar factor,
the stochastic exponential

    M(t) = exp( int_0^t b dW  -  1/2 int_0^t b^2 ds ),

a positive martingale with M(0) = 1 and E M(t) = 1.  With b piecewise
constant on the step grid, the Ito integral over a step is exactly
b(t_k) (W(t_{k+1}) - W(t_k)), so M is computed pathwise exactly from the
stored increments; there is no discretization error in M itself.

Brownian paths are reproducible and order-independent: path p draws from a
generator seeded by hashing (master seed, p), so any contiguous or
scattered subset of paths can be regenerated identically, which keeps
chunked or parallel simulation bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on [0, T].

    ``breakpoints`` is the full knot vector (first entry 0, last entry T);
    ``values[i]`` holds on [breakpoints[i], breakpoints[i+1]).
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) != len(vals) + 1:
            raise ConfigurationError(
                f"need one more breakpoint than values, got {len(bp)} vs {len(vals)}")
        if any(t1 <= t0 for t0, t1 in zip(bp, bp[1:])):
            raise ConfigurationError(f"breakpoints must be strictly increasing: {bp}")
        if bp[0] != 0.0:
            raise ConfigurationError(f"first breakpoint must be 0, got {bp[0]}")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, horizon: float) -> "PiecewiseConstant":
        return cls((0.0, float(horizon)), (float(value),))

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1]

    @property
    def sup(self) -> float:
        return max(abs(v) for v in self.values)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1,
                      0, len(self.values) - 1)
        out = np.asarray(self.values)[idx]
        return float(out) if out.ndim == 0 else out

    def integral(self, s: float, t: float) -> float:
        """Exact integral over (s, t); sign-aware for s > t."""
        if s > t:
            return -self.integral(t, s)
        total = 0.0
        for i, v in enumerate(self.values):
            lo = max(s, self.breakpoints[i])
            hi = min(t, self.breakpoints[i + 1])
            if lo < hi:
                total += v * (hi - lo)
        return total

    def squared(self) -> "PiecewiseConstant":
        return PiecewiseConstant(self.breakpoints, tuple(v * v for v in self.values))

    def pieces_in(self, s: float, t: float):
        """Breakdown of (s, t) into maximal subintervals of constant value."""
        out = []
        for i, v in enumerate(self.values):
            lo = max(s, self.breakpoints[i])
            hi = min(t, self.breakpoints[i + 1])
            if lo < hi:
                out.append((lo, hi, v))
        return out

    def aligned_to(self, dt: float, tol: float = 1e-9) -> bool:
        return all(abs(t / dt - round(t / dt)) <= tol for t in self.breakpoints)


@dataclass(frozen=True)
class CoefficientPair:
    """Drift coefficient a(t), diffusion coefficient b(t), and their bound.

    ``delta`` is the dissipation margin 2 |a|_inf + |b|_inf^2 entering the
    high-mode decay estimates.
    """

    a: PiecewiseConstant
    b: PiecewiseConstant

    def __post_init__(self):
        if abs(self.a.horizon - self.b.horizon) > 1e-12:
            raise ConfigurationError(
                f"a and b live on different horizons: {self.a.horizon} vs {self.b.horizon}")

    @classmethod
    def constant(cls, a: float, b: float, horizon: float) -> "CoefficientPair":
        return cls(PiecewiseConstant.constant(a, horizon),
                   PiecewiseConstant.constant(b, horizon))

    @property
    def horizon(self) -> float:
        return self.a.horizon

    @property
    def a_sup(self) -> float:
        return self.a.sup

    @property
    def b_sup(self) -> float:
        return self.b.sup

    @property
    def delta(self) -> float:
        return 2.0 * self.a_sup + self.b_sup ** 2


def _path_rng(seed: int, path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path,)))


def path_increments(seed: int, paths, n_steps: int, dt: float) -> np.ndarray:
    """Increments for an explicit list of path indices (chunk-friendly)."""
    paths = np.atleast_1d(np.asarray(paths, dtype=int))
    out = np.empty((len(paths), n_steps))
    sq = np.sqrt(dt)
    for row, p in enumerate(paths):
        out[row] = _path_rng(seed, int(p)).standard_normal(n_steps) * sq
    return out


@dataclass(frozen=True)
class BrownianBundle:
    """Seeded Brownian increments, one independent stream per path."""

    seed: int
    n_steps: int
    paths: int
    horizon: float
    increments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_steps < 1 or self.paths < 1:
            raise ConfigurationError("need n_steps >= 1 and paths >= 1")
        inc = path_increments(self.seed, np.arange(self.paths), self.n_steps, self.dt)
        object.__setattr__(self, "increments", inc)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def wiener_values(self) -> np.ndarray:
        """W at grid times, shape (paths, n_steps + 1), W(0) = 0."""
        W = np.zeros((self.paths, self.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=W[:, 1:])
        return W


def sample_brownian(seed: int, n_steps: int, paths: int, horizon: float) -> BrownianBundle:
    return BrownianBundle(seed=seed, n_steps=n_steps, paths=paths, horizon=horizon)


@dataclass(frozen=True)
class NoiseFactor:
    """Pathwise values of the stochastic exponential on the step grid."""

    values: np.ndarray
    times: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def stochastic_factor(bundle: BrownianBundle, coeffs: CoefficientPair) -> NoiseFactor:
    """Exact pathwise stochastic exponential of the diffusion coefficient.

    Requires the breakpoints of b to sit on the step grid, so that the
    left-point Ito sums are exact.
    """
    if abs(coeffs.horizon - bundle.horizon) > 1e-12:
        raise ConfigurationError("coefficient horizon differs from bundle horizon")
    if not coeffs.b.aligned_to(bundle.dt):
        raise ConfigurationError(
            "breakpoints of b must be multiples of dt for an exact noise factor")
    t_left = bundle.times[:-1]
    b_left = np.atleast_1d(coeffs.b(t_left))
    logM = np.zeros((bundle.paths, bundle.n_steps + 1))
    np.cumsum(b_left[None, :] * bundle.increments
              - 0.5 * b_left[None, :] ** 2 * bundle.dt, axis=1, out=logM[:, 1:])
    return NoiseFactor(values=np.exp(logM), times=bundle.times)


def second_moment_factor(coeffs: CoefficientPair, t: float) -> float:
    """E M(t)^2 = exp(int_0^t b^2 ds), available in closed form."""
    return float(np.exp(coeffs.b.squared().integral(0.0, t)))
