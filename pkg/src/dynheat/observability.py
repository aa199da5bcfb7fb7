"""Observability estimates for the backward adjoint system.

Everything here works in the closed-form adjoint regime: deterministic
terminal data, so each mode decays backward as z_j(t) = z_j^T g_j(t) with
g_j(t) = exp(-lambda_j (T - t) + int_t^T a ds), and expectations reduce to
finite sums.  The module verifies, at desk scale, the chain that turns the
window restriction inequality into an observability inequality:

  * high-mode decay: the energy above a spectral threshold r at time t is
    bounded by exp((-2r + delta)(T - t)) times the full terminal energy,
    where delta = 2 |a|_inf + |b|_inf^2;
  * an interpolation bound: the full state energy at t is controlled by the
    geometric mean of the region observation at t and the terminal energy,
    with a constant of the shape C exp(C / (T - t));
  * a time-slicing sequence accumulating inside the time control set whose
    gaps shrink geometrically, along which the interpolation bounds
    telescope into the L1-in-time observability inequality;
  * the resulting observability constant, estimated by maximizing the
    energy-to-observation ratio over terminal states on the unit sphere.

Failure of the construction when the time control set stays clear of the
horizon is demonstrated by the counterexample generator in dynheat.control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ControlRegion, DomainConfig, TimeSet
from .errors import DimensionError, MeasureConditionError
from .noise import CoefficientPair
from .solvers import ModeState, decay_profile

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------------------
# quadrature of backward profiles

def _panels(lo: float, hi: float, lam_max: float, base: int = 8):
    """Panel subdivision of (lo, hi) refined geometrically toward hi.

    Backward profiles grow like exp(-lam (t_end - t)) toward the right
    endpoint; halving the last panel until it resolves 1 / lam_max keeps a
    fixed-order Gauss rule accurate there.
    """
    edges = list(np.linspace(lo, hi, base + 1))
    target = max((hi - lo) * 1e-9, 0.2 / max(lam_max, 1.0))
    while edges[-1] - edges[-2] > target:
        edges.insert(-1, 0.5 * (edges[-2] + edges[-1]))
    return np.asarray(edges)


def quad_nodes(intervals, lam_max: float, cuts=()):
    """Gauss nodes and weights over a union of intervals, layer-refined.

    ``cuts`` lists interior points where the integrand loses smoothness
    (drift breakpoints); panels never straddle them, so the fixed-order
    rule keeps its full accuracy piecewise.
    """
    nodes, weights = [], []
    for lo, hi in intervals:
        inner = sorted({lo, hi} | {c for c in cuts if lo < c < hi})
        for p, q in zip(inner[:-1], inner[1:]):
            edges = _panels(p, q, lam_max)
            for a0, b0 in zip(edges[:-1], edges[1:]):
                half = 0.5 * (b0 - a0)
                nodes.append(0.5 * (a0 + b0) + half * _GAUSS_NODES)
                weights.append(half * _GAUSS_WEIGHTS)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _mass_factor(mass: np.ndarray) -> np.ndarray:
    """Factor F with F^T F = mass for a symmetric PSD region mass matrix."""
    d, Q = np.linalg.eigh(0.5 * (mass + mass.T))
    d = np.clip(d, 0.0, None)
    return np.sqrt(d)[:, None] * Q.T


# ---------------------------------------------------------------------------
# high-mode decay and interpolation

def highmode_decay(zT: ModeState, lambdas, r: float, t: float,
                   cpair: CoefficientPair):
    """Both sides of the high-mode energy bound at time t.

    lhs: energy of the modes above r at time t (closed form);
    rhs: exp((-2r + delta)(T - t)) times the full terminal energy.
    The bound holds for every admissible state since delta >= 2 |a|_inf.
    """
    if zT.is_random:
        raise ValueError("high-mode decay check runs in the deterministic regime")
    lam = np.asarray(lambdas, dtype=float)
    if len(lam) != zT.n_modes:
        raise DimensionError(f"{zT.n_modes} modes vs {len(lam)} eigenvalues")
    T = zT.time_stamp
    if not t < T:
        raise ValueError(f"need t < T, got t={t}, T={T}")
    g = decay_profile(lam, t, T, cpair)
    high = lam > r
    lhs = float(np.sum((zT.coeffs[high] * g[high]) ** 2))
    rhs = float(np.exp((-2.0 * r + cpair.delta) * (T - t)) * np.sum(zT.coeffs ** 2))
    return lhs, rhs


@dataclass
class InterpolationSample:
    t: float
    gap: float
    state_energy: float          # |z(t)|^2 in the product norm
    region_energy: float         # |z(t)|^2 restricted to the region (bulk)
    terminal_energy: float       # |z(T)|^2
    ratio: float                 # state / sqrt(region * terminal)
    amplitude: float             # sqrt(region / terminal), bounded by the energy estimate


def interpolation_ratio(zT: ModeState, t: float, region: ControlRegion,
                        basis, cpair: CoefficientPair) -> InterpolationSample:
    """Ratio tested against the C exp(C / (T - t)) interpolation bound."""
    if zT.is_random:
        raise ValueError("interpolation check runs in the deterministic regime")
    T = zT.time_stamp
    if not t < T:
        raise ValueError(f"need t < T, got t={t}, T={T}")
    lam = basis.lambdas[:zT.n_modes]
    zt = zT.coeffs * decay_profile(lam, t, T, cpair)
    state = float(np.sum(zt ** 2))
    nodal = basis.vectors[:, :zT.n_modes] @ zt
    reg = basis.domain.g0_norm(nodal, region) ** 2
    terminal = float(np.sum(zT.coeffs ** 2))
    denom = np.sqrt(reg * terminal)
    ratio = state / denom if denom > 0 else np.inf
    amp = np.sqrt(reg / terminal) if terminal > 0 else 0.0
    return InterpolationSample(t=t, gap=T - t, state_energy=state, region_energy=reg,
                               terminal_energy=terminal, ratio=ratio, amplitude=amp)


def implied_constant(ratio: float, gap: float) -> float:
    """Smallest C >= 0 with C exp(C / gap) >= ratio (monotone, bisected)."""
    if not np.isfinite(ratio):
        return np.inf
    if ratio <= 0.0:
        return 0.0
    f = lambda c: c * np.exp(c / gap) - ratio
    hi = 1.0
    while f(hi) < 0.0 and hi < 1e12:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def interpolation_profile(states, t_grid, region: ControlRegion, basis,
                          cpair: CoefficientPair):
    """Sweep of interpolation ratios and the fitted constant.

    Returns (samples, fitted_C, slope, intercept, rms_residual): fitted_C is
    the largest implied constant over the sweep; the linear fit is of
    log(ratio) against 1 / (T - t), whose slope bounding finite confirms the
    predicted growth shape.
    """
    samples = []
    for zT in states:
        for t in t_grid:
            samples.append(interpolation_ratio(zT, t, region, basis, cpair))
    finite = [s for s in samples if np.isfinite(s.ratio) and s.ratio > 0]
    xs = np.array([1.0 / s.gap for s in finite])
    ys = np.log([s.ratio for s in finite])
    coef = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - np.polyval(coef, xs)) ** 2)))
    fitted = max(implied_constant(s.ratio, s.gap) for s in finite)
    return samples, float(fitted), float(coef[0]), float(coef[1]), resid


# ---------------------------------------------------------------------------
# time-slicing sequence

@dataclass
class SlicingSequence:
    """Geometric accumulation times inside one component of the control set.

    Gaps satisfy d_{i+1} = rho d_i exactly; each slice (t_i, t_{i+1}) lies
    inside the control set, so the slice-measure inequalities hold with
    maximal margins.  The infinite tail of the construction is truncated at
    the first gap below the resolution dt.
    """

    t_tilde: float
    rho: float
    times: np.ndarray
    etas: np.ndarray
    truncation: int

    def gaps(self) -> np.ndarray:
        return np.diff(self.times)

    def verify(self, E: TimeSet):
        """Exact interval-arithmetic check of the slice invariants.

        Returns per-slice records (i, gap, measure of E in the slice,
        measure of E in (t_i, eta_i), ratio defect of consecutive gaps).
        """
        rows = []
        d = self.gaps()
        for i in range(len(d)):
            t0, t1 = self.times[i], self.times[i + 1]
            m_slice = E.intersection_measure(t0, t1)
            m_eta = E.intersection_measure(t0, self.etas[i])
            ratio_def = abs(d[i + 1] - self.rho * d[i]) if i + 1 < len(d) else 0.0
            rows.append({
                "i": i + 1, "gap": d[i],
                "slice_measure": m_slice, "eta_measure": m_eta,
                "slice_ok": m_slice >= (1.0 / 3.0) * d[i] - 1e-12,
                "eta_ok": m_eta >= (1.0 / 6.0) * d[i] - 1e-12,
                "ratio_defect": ratio_def,
                "ratio_ok": ratio_def <= 1e-9 * max(d[i], 1e-30),
            })
        return rows


def build_slicing(E: TimeSet, s: float, c_fit: float, dt: float) -> SlicingSequence:
    """Construct the accumulation sequence with ratio tied to the constant.

    rho = (c_fit + 1/2) / (c_fit + 1); the sequence fills the largest
    component of the control set after s, accumulating at a point just
    below its right end, and is truncated once gaps drop below dt.
    """
    T = E.horizon
    if not 0.0 <= s < T:
        raise ValueError(f"need 0 <= s < T, got s={s}")
    if E.intersection_measure(s, T) <= 0.0:
        raise MeasureConditionError(
            f"the time control set has zero measure in ({s}, {T}); "
            "no accumulation sequence exists there")
    rho = (c_fit + 0.5) / (c_fit + 1.0)
    comps = sorted(E.intersect(s, T), key=lambda iv: iv[1] - iv[0], reverse=True)
    last_err = None
    for alpha, beta in comps:
        t_tilde = beta - min(dt, (beta - alpha) / 10.0)
        t1 = max(alpha, s)
        if t_tilde <= t1:
            continue
        d1 = (t_tilde - t1) * (1.0 - rho)
        gaps = [d1]
        while gaps[-1] * rho >= dt:
            gaps.append(gaps[-1] * rho)
        if len(gaps) < 2:
            continue
        times = t1 + np.concatenate([[0.0], np.cumsum(gaps)])
        etas = times[1:] - np.diff(times) / 6.0
        seq = SlicingSequence(t_tilde=t_tilde, rho=rho, times=times, etas=etas,
                              truncation=len(gaps))
        rows = seq.verify(E)
        if all(r["slice_ok"] and r["eta_ok"] and r["ratio_ok"] for r in rows):
            return seq
        last_err = f"invariants failed on component ({alpha}, {beta})"
    raise MeasureConditionError(
        last_err or f"no component of the control set in ({s}, {T}) resolves dt={dt}")


# ---------------------------------------------------------------------------
# observability constant

@dataclass
class ObservabilityReport:
    constant_estimate: float
    ratio_samples: list
    regime: str                      # "holds" or "fails"
    witness: np.ndarray | None = None
    best_state: np.ndarray | None = None
    config_digest: str | None = None


class _RatioObjective:
    """Energy-to-observation ratio over unit terminal coefficient vectors.

    numerator(z)   = |z(s)|^2 = sum_j (zeta_j g_j(s))^2
    denominator(z) = ( int over E of |z(t)|_{L2(region)} dt )^2
    Both are homogeneous of degree two, so the ratio lives on the sphere.
    """

    def __init__(self, E: TimeSet, region: ControlRegion, s: float, basis,
                 cpair: CoefficientPair, n_modes: int):
        self.lams = basis.lambdas[:n_modes]
        self.gs = decay_profile(self.lams, s, cpair.horizon, cpair)
        mass = basis.g0_mass(region, indices=np.arange(n_modes))
        self.factor = _mass_factor(mass)
        comps = E.intersect(s, cpair.horizon)
        self.nodes, self.weights = quad_nodes(
            comps, float(np.max(self.lams)) if len(self.lams) else 1.0,
            cuts=cpair.a.breakpoints)
        T = cpair.horizon
        self.G = np.empty((len(self.nodes), n_modes))
        for i, t in enumerate(self.nodes):
            self.G[i] = decay_profile(self.lams, t, T, cpair)

    def numerator(self, Z: np.ndarray) -> np.ndarray:
        return np.sum((self.gs[:, None] * Z) ** 2, axis=0)

    def denominator(self, Z: np.ndarray) -> np.ndarray:
        # (t, i, c): region-metric image of the window state at each node
        V = np.einsum("im,tm,mc->tic", self.factor, self.G, Z)
        norms = np.sqrt(np.maximum(np.sum(V ** 2, axis=1), 0.0))
        return (self.weights @ norms) ** 2

    def ratio(self, Z: np.ndarray) -> np.ndarray:
        num = self.numerator(Z)
        den = self.denominator(Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0.0, num / den, np.inf)


def _coordinate_ascent(obj: _RatioObjective, zeta0: np.ndarray,
                       max_sweeps: int, tol: float):
    n = len(zeta0)
    zeta = zeta0 / np.linalg.norm(zeta0)
    best = float(obj.ratio(zeta[:, None])[0])
    thetas = np.linspace(-np.pi / 2, np.pi / 2, 41)[1:-1]
    for _ in range(max_sweeps):
        improved = 0.0
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            cand = np.cos(thetas)[None, :] * zeta[:, None] + np.sin(thetas)[None, :] * e[:, None]
            vals = obj.ratio(cand)
            k = int(np.argmax(vals))
            if vals[k] > best * (1.0 + 1e-14):
                improved = max(improved, (vals[k] - best) / max(best, 1e-300))
                zeta = cand[:, k] / np.linalg.norm(cand[:, k])
                best = float(vals[k])
        if improved < tol:
            break
    return zeta, best


def estimate_observability_constant(E: TimeSet, region: ControlRegion, s: float,
                                    basis, cpair: CoefficientPair, n_modes: int,
                                    n_samples: int, seed: int = 0,
                                    extra_starts=None, max_sweeps: int = 40,
                                    tol: float = 1e-9) -> ObservabilityReport:
    """Estimate the best constant in the L1-in-time observability inequality.

    Maximizes |z(s)|^2 over unit terminal states in the first ``n_modes``
    modes against the squared L1-in-time region observation, by multi-start
    coordinate ascent on the coefficient sphere.  A terminal state with a
    vanishing observation is reported as a failure witness: for such a state
    no finite constant exists.
    """
    if n_modes > basis.count:
        raise DimensionError(f"n_modes={n_modes} exceeds basis size {basis.count}")
    T = cpair.horizon
    if E.intersection_measure(s, T) <= 0.0:
        witness = np.zeros(n_modes)
        witness[0] = 1.0
        return ObservabilityReport(constant_estimate=np.inf, ratio_samples=[],
                                   regime="fails", witness=witness)
    obj = _RatioObjective(E, region, s, basis, cpair, n_modes)
    rng = np.random.default_rng(seed)
    starts = [rng.standard_normal(n_modes) for _ in range(n_samples)]
    if extra_starts is not None:
        starts.extend(np.asarray(z, dtype=float) for z in extra_starts)
    samples = []
    best_val, best_zeta = -np.inf, None
    for sid, z0 in enumerate(starts):
        den0 = float(obj.denominator((z0 / np.linalg.norm(z0))[:, None])[0])
        if den0 == 0.0:
            return ObservabilityReport(constant_estimate=np.inf, ratio_samples=samples,
                                       regime="fails", witness=z0 / np.linalg.norm(z0))
        zeta, val = _coordinate_ascent(obj, z0, max_sweeps, tol)
        num = float(obj.numerator(zeta[:, None])[0])
        samples.append((sid, num, num / val if val > 0 else 0.0, val))
        if val > best_val:
            best_val, best_zeta = val, zeta
    return ObservabilityReport(constant_estimate=best_val, ratio_samples=samples,
                               regime="holds", best_state=best_zeta)


# ---------------------------------------------------------------------------
# unique continuation

@dataclass
class UniqueContinuationResult:
    sup_observation: float      # max |z| over the sampled control set grid
    l1_observation: float       # int over E of sqrt(E |z(t)|^2_{L2(region)}) dt
    terminal_norm: float
    holds: bool                 # (sup <= tol) implies (terminal <= tol * amplification)


def check_unique_continuation(E: TimeSet, region: ControlRegion, basis,
                              *, zT: ModeState | None = None,
                              cpair: CoefficientPair | None = None,
                              trajectory=None, times=None,
                              tol: float = 1e-9,
                              amplification: float = 1.0) -> UniqueContinuationResult:
    """Vanishing observation on the control set should force a zero state.

    Either supply deterministic terminal data (closed-form backward
    evolution) or an explicit mode trajectory on a time grid, e.g. the
    assembled counterexample adjoint, which is exactly the case where the
    implication fails.
    """
    domain = basis.domain
    mask = region.indicator(domain).astype(bool)
    if trajectory is None:
        if zT is None or cpair is None:
            raise ValueError("need either (zT, cpair) or (trajectory, times)")
        n_modes = zT.n_modes
        lam = basis.lambdas[:n_modes]
        T = zT.time_stamp
        nodes, weights = quad_nodes(E.intersect(0.0, T), float(np.max(lam)),
                                    cuts=cpair.a.breakpoints)
        sup_obs, l1_obs = 0.0, 0.0
        V = basis.vectors[mask, :n_modes]
        for t, w in zip(nodes, weights):
            zt = zT.coeffs * decay_profile(lam, t, T, cpair)
            vals = V @ zt
            sup_obs = max(sup_obs, float(np.max(np.abs(vals))) if len(vals) else 0.0)
            nodal = basis.vectors[:, :n_modes] @ zt
            l1_obs += w * domain.g0_norm(nodal, region)
        terminal = float(zT.norm())
    else:
        times = np.asarray(times, dtype=float)
        traj = np.asarray(trajectory, dtype=float)
        if traj.ndim == 2:
            traj = traj[None, :, :]
        n_modes = traj.shape[-1]
        V = basis.vectors[mask, :n_modes]
        w_region = region.quadrature_weights(domain)
        in_E = np.array([E.contains(t) for t in times])
        sup_obs = 0.0
        g0_rms = np.zeros(len(times))
        for k in np.nonzero(in_E)[0]:
            vals = traj[:, k, :] @ V.T
            if vals.size:
                sup_obs = max(sup_obs, float(np.max(np.abs(vals))))
            nodal = traj[:, k, :] @ basis.vectors[:, :n_modes].T
            g0_rms[k] = np.sqrt(np.mean(nodal ** 2 @ w_region))
        l1_obs = float(np.trapezoid(np.where(in_E, g0_rms, 0.0), times))
        terminal = float(np.sqrt(np.mean(np.sum(traj[:, -1, :] ** 2, axis=1))))
    implication_holds = (sup_obs > tol) or (terminal <= tol * amplification)
    return UniqueContinuationResult(sup_observation=sup_obs, l1_observation=l1_obs,
                                    terminal_norm=terminal, holds=implication_holds)


# ---------------------------------------------------------------------------
# telescoping chain

def telescoping_required_constant(zT: ModeState, slicing: SlicingSequence,
                                  E: TimeSet, region: ControlRegion, basis,
                                  cpair: CoefficientPair) -> dict:
    """Smallest constant closing the summed telescoping bound for one state.

    The bound reads |z(t_1)|^2 <= C exp((C + 1) / (t_2 - t_1)) times the
    squared L1-in-time region observation over (t_1, t_tilde).  The report
    carries the pieces so sweeps can fit and then verify a common constant.
    """
    lam = basis.lambdas[:zT.n_modes]
    T = zT.time_stamp
    t1 = float(slicing.times[0])
    d1 = float(slicing.times[1] - slicing.times[0])
    energy = float(np.sum((zT.coeffs * decay_profile(lam, t1, T, cpair)) ** 2))
    nodes, weights = quad_nodes(E.intersect(t1, slicing.t_tilde), float(np.max(lam)),
                                cuts=cpair.a.breakpoints)
    obs = 0.0
    for t, w in zip(nodes, weights):
        zt = zT.coeffs * decay_profile(lam, t, T, cpair)
        nodal = basis.vectors[:, :zT.n_modes] @ zt
        obs += w * basis.domain.g0_norm(nodal, region)
    den = obs ** 2
    if den <= 0.0:
        return {"energy": energy, "observation_sq": den, "required": np.inf,
                "t1": t1, "d1": d1}
    # solve C exp((C+1)/d1) den = energy for the smallest admissible C
    target = energy / den
    f = lambda c: c * np.exp((c + 1.0) / d1) - target
    hi = 1.0
    while f(hi) < 0.0 and hi < 1e12:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return {"energy": energy, "observation_sq": den, "required": hi,
            "t1": t1, "d1": d1}
