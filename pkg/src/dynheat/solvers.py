"""Spectral solvers for the controlled forward and adjoint backward systems.

With space-independent zero-order coefficients the bulk-surface system
diagonalizes in the eigenbasis of the coupling operator: each mode
coefficient y_j solves the scalar equation

    dy_j = (-lambda_j + a(t)) y_j dt + chi_E(t) u_j(t) dt + b(t) y_j dW.

For controls of the factored form u(t, x, w) = M(t, w) v(t, x) with v
deterministic and M the stochastic exponential of b, the substitution
y_j = M ytilde_j removes the noise pathwise (Ito's formula cancels the
dW and the quadratic-variation terms exactly), leaving the deterministic
system

    d ytilde_j / dt = (-lambda_j + a(t)) ytilde_j + chi_E(t) v_j(t).

The forward solver therefore propagates ytilde exactly -- the control
profiles are sums of exponentials in time, so every Duhamel integral has
a closed form -- and lifts pathwise by the exactly-computed factor M.
This is what makes pathwise statements about controlled terminal states
testable at roundoff level instead of quadrature level.

The backward adjoint with deterministic terminal data has the closed-form
solution z_j(t) = z_j^T exp(-lambda_j (T - t) + int_t^T a ds) with zero
martingale correction: the candidate satisfies the backward equation, and
uniqueness of the (z, Z) pair makes it *the* solution.  Terminal data in
the first Wiener chaos, z_j^T = c0 + c1 W(T), stays explicit through the
Gaussian conditional law of W(T) given W(t):

    z_j(t) = g_j(t) [ c0 + c1 ( W(t) + int_t^T b ds ) ],
    Z_j(t) = c1 g_j(t),            g_j(t) = exp(-lambda_j (T-t) + int_t^T a).

The drift int_t^T b enters through the measure change the stochastic
exponential induces on the conditional law; the correction Z is the
derivative of the conditional mean times g.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConfigurationError, DimensionError, UnsupportedControlError,
                     UnsupportedTerminalError)
from .noise import BrownianBundle, CoefficientPair, NoiseFactor, stochastic_factor


# ---------------------------------------------------------------------------
# exact exponential time integrals

def exp_integral(lo: float, hi: float, rate, offset):
    """Integral of exp(rate * s + offset) over (lo, hi), elementwise.

    Stable for any sign of rate as long as the exponent values at the
    endpoints are representable; the rate -> 0 limit is handled explicitly.
    """
    rate = np.asarray(rate, dtype=float)
    offset = np.asarray(offset, dtype=float)
    span = hi - lo
    v_lo = offset + rate * lo
    v_hi = offset + rate * hi
    x = rate * span
    mid = span * np.exp(0.5 * (v_lo + v_hi))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gen = (np.exp(v_hi) - np.exp(v_lo)) / rate
    return np.where(np.abs(x) < 1e-6, mid, gen)


def cross_profile_integral(lams_row, t_row: float, lams_col, t_col: float,
                           coeffs: CoefficientPair, lo: float, hi: float) -> np.ndarray:
    """Matrix of integrals of two backward exponential profiles.

    Entry (i, k) is

        int_lo^hi exp(-lr_i (t_row - s) + int_s^{t_row} a)
                * exp(-lc_k (t_col - s) + int_s^{t_col} a) ds,

    evaluated exactly piece by piece of the piecewise-constant drift a.
    """
    lr = np.atleast_1d(np.asarray(lams_row, dtype=float))[:, None]
    lc = np.atleast_1d(np.asarray(lams_col, dtype=float))[None, :]
    a = coeffs.a
    base = (-lr * t_row - lc * t_col
            + a.integral(0.0, t_row) + a.integral(0.0, t_col))
    out = np.zeros((lr.shape[0], lc.shape[1]))
    for p, q, val in a.pieces_in(lo, hi):
        # int_0^s a = int_0^p a + val (s - p) on this piece
        rate = lr + lc - 2.0 * val
        offset = base - 2.0 * a.integral(0.0, p) + 2.0 * val * p
        out += exp_integral(p, q, rate, offset)
    return out


def decay_profile(lambdas, t_from: float, t_to: float, coeffs: CoefficientPair) -> np.ndarray:
    """Free propagator exp(-lambda (t_to - t_from) + int a) per mode."""
    lam = np.asarray(lambdas, dtype=float)
    return np.exp(-lam * (t_to - t_from) + coeffs.a.integral(t_from, t_to))


# ---------------------------------------------------------------------------
# states and control signals

@dataclass
class ModeState:
    """State expressed by eigenmode coefficients.

    ``coeffs`` is (m,) for deterministic states or (paths, m) for pathwise
    random states.  Parseval for the orthonormal basis makes the product
    norm the plain Euclidean norm of the coefficients.
    """

    coeffs: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim not in (1, 2):
            raise DimensionError(f"mode coefficients must be 1- or 2-d, got {self.coeffs.ndim}-d")

    @property
    def is_random(self) -> bool:
        return self.coeffs.ndim == 2

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[-1]

    def norm(self):
        return np.sqrt(np.sum(self.coeffs ** 2, axis=-1))

    def to_nodal(self, basis) -> np.ndarray:
        return self.coeffs @ basis.vectors[:, :self.n_modes].T

    @classmethod
    def from_nodal(cls, u, basis, time_stamp: float = 0.0) -> "ModeState":
        return cls(coeffs=basis.coefficients(u), time_stamp=time_stamp)


@dataclass(frozen=True)
class ControlStage:
    """One control burst: an adjoint-profile load on a mode window.

    The spatial profile is the region-masked window combination
    sum_k zeta_k e_k(t) psi_k with e_k(t) = exp(-lambda_k (end - t)
    + int_t^end a); ``loads[j, k]`` holds the region inner product of
    psi_j with psi_k, so row j gives the load the burst induces on mode j.
    ``active`` lists the components of the time control set inside
    (start, end); the burst is off elsewhere.
    """

    start: float
    end: float
    active: tuple
    window: np.ndarray
    zeta: np.ndarray
    lambdas_window: np.ndarray
    loads: np.ndarray

    def profile_values(self, times, coeffs: CoefficientPair) -> np.ndarray:
        """e_k(t) for each window mode, zero outside the active set."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        vals = np.zeros((len(times), len(self.lambdas_window)))
        on = np.zeros(len(times), dtype=bool)
        for a0, b0 in self.active:
            on |= (times >= a0 - 1e-14) & (times <= b0 + 1e-14)
        if on.any():
            ts = times[on]
            aint = np.array([coeffs.a.integral(t, self.end) for t in ts])
            vals[on] = np.exp(-self.lambdas_window[None, :] * (self.end - ts)[:, None]
                              + aint[:, None])
        return vals


@dataclass(frozen=True)
class ControlSignal:
    """Deterministic space-time profile v, realized as u = M(t) v(t, x)."""

    stages: tuple
    lambdas: np.ndarray
    coeffs: CoefficientPair

    def mode_loads(self, times) -> np.ndarray:
        """v_j(t) on the given times, shape (len(times), n_modes)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((len(times), len(self.lambdas)))
        for st in self.stages:
            prof = st.profile_values(times, self.coeffs) * st.zeta[None, :]
            out += prof @ st.loads.T
        return out

    def l2_space_norm(self, times) -> np.ndarray:
        """|v(t)|_{L2(bulk)} on the given times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros(len(times))
        for st in self.stages:
            block = st.loads[st.window, :]           # window rows: region mass block
            prof = st.profile_values(times, self.coeffs) * st.zeta[None, :]
            out += np.einsum("tk,kl,tl->t", prof, block, prof)
        return np.sqrt(np.maximum(out, 0.0))

    def squared_cost(self) -> float:
        """Exact int over the active sets of |v(t)|^2_{L2(bulk)} dt."""
        total = 0.0
        for st in self.stages:
            block = st.loads[st.window, :]
            tints = np.zeros_like(block)
            for a0, b0 in st.active:
                tints += cross_profile_integral(st.lambdas_window, st.end,
                                                st.lambdas_window, st.end,
                                                self.coeffs, a0, b0)
            total += float(st.zeta @ (block * tints) @ st.zeta)
        return total

    def nodal_profile(self, t: float, basis, region) -> np.ndarray:
        """v(t, x) on the grid (region-masked window combination)."""
        mask = region.indicator(basis.domain)
        out = np.zeros(basis.domain.n_nodes)
        for st in self.stages:
            prof = st.profile_values([t], self.coeffs)[0] * st.zeta
            out += basis.vectors[:, st.window] @ prof
        return out * mask

    def linf_stochastic_norm(self, times) -> float:
        """Ess-sup-in-time norm of the realized control u = M v.

        Since v is deterministic, the supremum over paths and time of the
        expected squared spatial norm reduces to
        sup_t |v(t)|_{L2(bulk)} (E M(t)^2)^{1/2}, evaluated on the grid.
        """
        from .noise import second_moment_factor
        times = np.atleast_1d(np.asarray(times, dtype=float))
        space = self.l2_space_norm(times)
        factors = np.sqrt([second_moment_factor(self.coeffs, t) for t in times])
        return float(np.max(space * factors))


def zero_signal(lambdas, coeffs: CoefficientPair) -> ControlSignal:
    return ControlSignal(stages=(), lambdas=np.asarray(lambdas, float), coeffs=coeffs)


# ---------------------------------------------------------------------------
# forward solvers

def _signal_step_load(signal: ControlSignal, t_end: float, lo: float, hi: float,
                      lambdas) -> np.ndarray:
    """Duhamel load sum_k int Phi(s -> t_end) v_j(s) ds over (lo, hi)."""
    total = np.zeros(len(lambdas))
    for st in signal.stages:
        for a0, b0 in st.active:
            p, q = max(a0, lo), min(b0, hi)
            if p < q:
                T = cross_profile_integral(lambdas, t_end, st.lambdas_window, st.end,
                                           signal.coeffs, p, q)
                total += (st.loads * T) @ st.zeta
    return total


def propagate_reduced(coeffs0, t0: float, t1: float, signal, cpair: CoefficientPair,
                      lambdas) -> np.ndarray:
    """Exact one-interval propagation of the factored deterministic system."""
    lam = np.asarray(lambdas, dtype=float)
    out = decay_profile(lam, t0, t1, cpair) * np.asarray(coeffs0, dtype=float)
    if signal is not None and signal.stages:
        out = out + _signal_step_load(signal, t1, t0, t1, lam)
    return out


@dataclass
class ForwardSolution:
    """Factored forward trajectory: deterministic reduced part plus noise factor."""

    times: np.ndarray
    reduced: np.ndarray
    factor: NoiseFactor
    coeffs: CoefficientPair
    lambdas: np.ndarray

    def terminal(self) -> ModeState:
        y = self.factor.terminal[:, None] * self.reduced[-1][None, :]
        return ModeState(coeffs=y, time_stamp=float(self.times[-1]))

    def reduced_terminal(self) -> ModeState:
        return ModeState(coeffs=self.reduced[-1].copy(), time_stamp=float(self.times[-1]))

    def pathwise_norms(self) -> np.ndarray:
        """|y(t)| per path and grid time, shape (paths, n_times)."""
        base = np.sqrt(np.sum(self.reduced ** 2, axis=1))
        return self.factor.values * base[None, :]

    def expected_terminal_sq(self) -> float:
        """E |y(T)|^2 in closed form: the factor contributes exp(int b^2)."""
        from .noise import second_moment_factor
        return second_moment_factor(self.coeffs, float(self.times[-1])) \
            * float(np.sum(self.reduced[-1] ** 2))


def solve_forward(y0: ModeState, signal, cpair: CoefficientPair,
                  bundle: BrownianBundle, lambdas) -> ForwardSolution:
    """Pathwise-exact forward evolution for factored controls.

    ``signal`` must be a ControlSignal (or None for the free system); any
    other control representation needs the Euler-Maruyama fallback
    ``solve_forward_em``.
    """
    if y0.is_random:
        raise ValueError("solve_forward needs a deterministic initial state")
    if signal is not None and not isinstance(signal, ControlSignal):
        raise UnsupportedControlError(
            "control is not in the factored form u = M(t) v(t, x); "
            "use solve_forward_em for gridded pathwise controls")
    lam = np.asarray(lambdas, dtype=float)
    if y0.n_modes != len(lam):
        raise DimensionError(f"state has {y0.n_modes} modes, lambdas has {len(lam)}")
    times = bundle.times
    reduced = np.empty((len(times), len(lam)))
    reduced[0] = y0.coeffs
    for k in range(len(times) - 1):
        reduced[k + 1] = propagate_reduced(reduced[k], times[k], times[k + 1],
                                           signal, cpair, lam)
    factor = stochastic_factor(bundle, cpair)
    return ForwardSolution(times=times, reduced=reduced, factor=factor,
                           coeffs=cpair, lambdas=lam)


def solve_forward_em(y0: ModeState, cpair: CoefficientPair, bundle: BrownianBundle,
                     lambdas, signal=None, u_loads=None, return_trajectory: bool = False):
    """Euler-Maruyama on mode coefficients; the general-control fallback.

    Controls enter as mode loads: either a ControlSignal (realized as
    M(t) v(t, x) on the grid) or a raw array ``u_loads`` of shape
    (n_steps + 1, m) or (paths, n_steps + 1, m) sampled at grid times
    (left-point values are used on each step).
    """
    if signal is not None and u_loads is not None:
        raise ValueError("pass either signal or u_loads, not both")
    lam = np.asarray(lambdas, dtype=float)
    dt = bundle.dt
    if not (cpair.a.aligned_to(dt) and cpair.b.aligned_to(dt)):
        raise ConfigurationError("coefficient breakpoints finer than the step grid")
    times = bundle.times
    a_left = np.atleast_1d(cpair.a(times[:-1]))
    b_left = np.atleast_1d(cpair.b(times[:-1]))
    factor = stochastic_factor(bundle, cpair) if signal is not None else None
    v_loads = signal.mode_loads(times) if signal is not None else None
    y = np.tile(np.asarray(y0.coeffs, dtype=float), (bundle.paths, 1))
    traj = None
    if return_trajectory:
        traj = np.empty((bundle.paths, len(times), len(lam)))
        traj[:, 0] = y
    for k in range(bundle.n_steps):
        drift = (-lam[None, :] + a_left[k]) * y
        if signal is not None:
            drift = drift + factor.values[:, k][:, None] * v_loads[k][None, :]
        elif u_loads is not None:
            uk = u_loads[k] if np.ndim(u_loads) == 2 else u_loads[:, k, :]
            drift = drift + uk
        y = y + drift * dt + b_left[k] * y * bundle.increments[:, k][:, None]
        if return_trajectory:
            traj[:, k + 1] = y
    terminal = ModeState(coeffs=y, time_stamp=float(times[-1]))
    return (terminal, times, traj) if return_trajectory else terminal


# ---------------------------------------------------------------------------
# backward solvers

@dataclass
class AdjointSolution:
    """Backward solution in mode coordinates on [start, T].

    Deterministic terminal data: z_j(t) = zT_j g_j(t), correction zero.
    First-chaos terminal data (c0 + c1 W(T) per mode): values depend on the
    path through W(t); the correction is c1 g_j(t).
    """

    lambdas: np.ndarray
    coeffs: CoefficientPair
    start: float
    horizon: float
    terminal_mean: np.ndarray
    terminal_slope: np.ndarray | None = None

    @property
    def is_chaos(self) -> bool:
        return self.terminal_slope is not None and np.any(self.terminal_slope != 0.0)

    def g(self, t: float) -> np.ndarray:
        return decay_profile(self.lambdas, t, self.horizon, self.coeffs)

    def values_at(self, t: float, w_values=None) -> np.ndarray:
        """z(t): shape (m,) deterministic, or (paths, m) given W(t) samples."""
        gt = self.g(t)
        if not self.is_chaos:
            return gt * self.terminal_mean
        if w_values is None:
            raise ValueError("first-chaos adjoint values need W(t) samples")
        w = np.atleast_1d(np.asarray(w_values, dtype=float))
        btail = self.coeffs.b.integral(t, self.horizon)
        return gt[None, :] * (self.terminal_mean[None, :]
                              + self.terminal_slope[None, :] * (w[:, None] + btail))

    def correction_at(self, t: float) -> np.ndarray:
        if not self.is_chaos:
            return np.zeros_like(self.lambdas)
        return self.terminal_slope * self.g(t)

    def expected_norm_sq(self, t: float) -> float:
        gt = self.g(t)
        if not self.is_chaos:
            return float(np.sum((gt * self.terminal_mean) ** 2))
        btail = self.coeffs.b.integral(t, self.horizon)
        mean = self.terminal_mean + self.terminal_slope * btail
        return float(np.sum(gt ** 2 * (mean ** 2 + self.terminal_slope ** 2 * t)))

    def residual(self, times) -> float:
        """Worst one-step defect of the exact backward propagation identity.

        For the deterministic closed form z(t_k) must equal
        Phi(t_k -> t_{k+1}) z(t_{k+1}) exactly; the defect is pure roundoff.
        """
        times = np.asarray(times, dtype=float)
        worst = 0.0
        scale = max(1.0, float(np.max(np.abs(self.terminal_mean))))
        for t0, t1 in zip(times[:-1], times[1:]):
            lhs = self.values_at(t0)
            rhs = decay_profile(self.lambdas, t0, t1, self.coeffs) * self.values_at(t1)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
        return worst


def solve_backward(zT: ModeState, cpair: CoefficientPair, lambdas,
                   s: float = 0.0) -> AdjointSolution:
    """Closed-form adjoint for deterministic terminal data (correction = 0)."""
    if zT.is_random:
        raise UnsupportedTerminalError(
            "terminal data is pathwise random; use solve_backward_mc "
            "for first-chaos data")
    T = zT.time_stamp
    if not s < T:
        raise ValueError(f"need s < T, got s={s}, T={T}")
    lam = np.asarray(lambdas, dtype=float)
    if len(lam) != zT.n_modes:
        raise DimensionError(f"{zT.n_modes} modes vs {len(lam)} eigenvalues")
    return AdjointSolution(lambdas=lam, coeffs=cpair, start=s,
                           horizon=T, terminal_mean=np.asarray(zT.coeffs, float))


def solve_backward_mc(terminal_mean, terminal_slope, cpair: CoefficientPair,
                      lambdas, horizon: float, s: float = 0.0) -> AdjointSolution:
    """Adjoint for first-chaos terminal data c0 + c1 W(T) per mode.

    Reduces to the deterministic solver exactly when the slope vanishes.
    Terminal data outside this class has no representation here.
    """
    c0 = np.asarray(terminal_mean, dtype=float)
    c1 = np.asarray(terminal_slope, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if not (c0.shape == c1.shape == lam.shape):
        raise DimensionError("terminal mean/slope/lambdas must share one shape")
    if not s < horizon:
        raise ValueError(f"need s < horizon, got s={s}, horizon={horizon}")
    return AdjointSolution(lambdas=lam, coeffs=cpair, start=s, horizon=horizon,
                           terminal_mean=c0, terminal_slope=c1)


def regress_correction(adjoint: AdjointSolution, bundle: BrownianBundle) -> np.ndarray:
    """Estimate the martingale correction from pathwise increments.

    Least-squares slope of the z increments against the Brownian increments,
    one estimate per step and mode; the analytic value is c1 g_j(t).
    """
    W = bundle.wiener_values()
    times = bundle.times
    out = np.empty((bundle.n_steps, len(adjoint.lambdas)))
    z_prev = adjoint.values_at(times[0], W[:, 0]) if adjoint.is_chaos \
        else np.tile(adjoint.values_at(times[0]), (bundle.paths, 1))
    for k in range(bundle.n_steps):
        z_next = adjoint.values_at(times[k + 1], W[:, k + 1]) if adjoint.is_chaos \
            else np.tile(adjoint.values_at(times[k + 1]), (bundle.paths, 1))
        dW = bundle.increments[:, k]
        dz = z_next - z_prev
        out[k] = (dW @ dz) / float(dW @ dW)
        z_prev = z_next
    return out


# ---------------------------------------------------------------------------
# duality identity

@dataclass
class DualityResult:
    lhs: float
    rhs: float
    residual: float
    stderr: float | None
    method: str

    def within(self, k: float = 3.0) -> bool:
        if self.stderr is None:
            return self.residual <= 1e-10
        return self.residual <= k * max(self.stderr, 1e-300)


def _exact_pairing_integral(signal: ControlSignal, adjoint: AdjointSolution) -> float:
    """Exact int over active sets of sum_j v_j(s) z_j(s) ds, deterministic z."""
    total = 0.0
    zT = adjoint.terminal_mean
    for st in signal.stages:
        for a0, b0 in st.active:
            T = cross_profile_integral(adjoint.lambdas, adjoint.horizon,
                                       st.lambdas_window, st.end,
                                       signal.coeffs, a0, b0)
            total += float(zT @ ((st.loads * T) @ st.zeta))
    return total


def check_duality(y0: ModeState, signal, adjoint: AdjointSolution,
                  cpair: CoefficientPair, bundle: BrownianBundle | None = None,
                  method: str = "exact") -> DualityResult:
    """Pairing identity between the forward terminal state and the adjoint.

    The identity states that the expected terminal pairing minus the initial
    pairing equals the expected control-observation product over the control
    set.  ``exact`` evaluates every expectation in closed form (deterministic
    adjoint only); ``mc`` averages pathwise differences over the bundle and
    reports the Monte Carlo standard error of the residual.
    """
    if adjoint.start != 0.0:
        raise ValueError("duality check expects the adjoint to start at 0")
    lam = adjoint.lambdas
    T = adjoint.horizon
    if method == "exact":
        if adjoint.is_chaos:
            raise UnsupportedTerminalError("exact duality needs a deterministic adjoint")
        yT = propagate_reduced(y0.coeffs, 0.0, T, signal, cpair, lam)
        lhs = float(yT @ adjoint.terminal_mean) - float(y0.coeffs @ adjoint.values_at(0.0))
        rhs = _exact_pairing_integral(signal, adjoint) if signal is not None else 0.0
        scale = max(1.0, abs(lhs), abs(rhs))
        return DualityResult(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs) / scale,
                             stderr=None, method="exact")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if bundle is None:
        raise ValueError("mc duality needs a Brownian bundle")
    if adjoint.is_chaos and signal is not None and signal.stages:
        raise UnsupportedTerminalError(
            "mc duality supports either a control with deterministic terminal "
            "data or first-chaos terminal data without control")
    times = bundle.times
    factor = stochastic_factor(bundle, cpair)
    fwd = solve_forward(y0, signal, cpair, bundle, lam)
    if adjoint.is_chaos:
        W = bundle.wiener_values()
        zT = adjoint.values_at(T, W[:, -1])
        lhs_paths = np.sum(fwd.terminal().coeffs * zT, axis=1) \
            - float(y0.coeffs @ adjoint.values_at(0.0, 0.0)[0])
        rhs_paths = np.zeros(bundle.paths)
    else:
        zT = adjoint.terminal_mean
        lhs_paths = (fwd.terminal().coeffs @ zT) - float(y0.coeffs @ adjoint.values_at(0.0))
        rhs_paths = np.zeros(bundle.paths)
        if signal is not None and signal.stages:
            step_ints = np.empty(bundle.n_steps)
            for k in range(bundle.n_steps):
                part = 0.0
                for st in signal.stages:
                    for a0, b0 in st.active:
                        p, q = max(a0, times[k]), min(b0, times[k + 1])
                        if p < q:
                            Tm = cross_profile_integral(lam, T, st.lambdas_window,
                                                        st.end, cpair, p, q)
                            part += float(zT @ ((st.loads * Tm) @ st.zeta))
                step_ints[k] = part
            mid = 0.5 * (factor.values[:, :-1] + factor.values[:, 1:])
            rhs_paths = mid @ step_ints
    diff = lhs_paths - rhs_paths
    scale = max(1.0, abs(float(np.mean(lhs_paths))), abs(float(np.mean(rhs_paths))))
    return DualityResult(lhs=float(np.mean(lhs_paths)), rhs=float(np.mean(rhs_paths)),
                         residual=abs(float(np.mean(diff))) / scale,
                         stderr=float(np.std(diff, ddof=1) / np.sqrt(bundle.paths)) / scale,
                         method="mc")
