"""Experiment harness: configuration, command dispatch, and persistence.

Configuration is a TOML file with nested sections (domain, time,
coefficients, run, plus per-command sections); anything omitted falls back
to the built-in defaults below.  Every run writes CSV tables stamped with
the configuration digest and a JSON run record with the key scalars;
charts are emitted as standalone SVG files.

Exit codes: 0 success; 2 configuration problems (bad file, inconsistent
intervals, violated measure preconditions, inadequate schedules); 3
numerical failures (singular Gramians, degenerate observation, solver
breakdown); 4 failed built-in verification of a command's invariants.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import control as ctl
from . import observability as obs
from . import operator as op
from .domain import ControlRegion, DomainConfig, TimeSet
from .errors import (ConfigurationError, DegenerateObservationError, DynheatError,
                     IllPosedWindowError, MeasureConditionError, NumericError,
                     PlanningError, VerificationError)
from .noise import CoefficientPair, PiecewiseConstant, sample_brownian
from .recording import RunRecord, StopWatch, config_digest, svg_line_chart, write_csv
from .solvers import (ModeState, check_duality, solve_backward, solve_backward_mc,
                      solve_forward)

DEFAULT_CONFIG = {
    "domain": {"length": 1.0, "n_cells": 64, "control_region": [[0.3, 0.8]]},
    "time": {"horizon": 1.0, "control_times": [[0.0, 1.0]], "n_steps": 512},
    "coefficients": {"a_breakpoints": [0.0, 1.0], "a_values": [0.25],
                     "b_breakpoints": [0.0, 1.0], "b_values": [0.2]},
    "run": {"seed": 7, "paths": 2000, "modes": 16},
    "spectral_inequality": {"n_windows": 20},
    "interpolation": {"n_states": 6, "n_times": 12, "min_gap": 0.02},
    "slicing": {"s": 0.0, "c_fit": 1.0, "dt": 1e-4},
    "observability": {"s": 0.0, "n_modes": 6, "n_samples": 4},
    "null_control": {"n_stages": 4, "first_window": 3.0, "growth": 4.0,
                     "control_fraction": 0.5, "target": 1e-8},
    "approx_control": {"eps": 1e-3, "n_modes": 8},
    "counterexample": {"s0": 0.4},
}

COMMANDS = ("spectrum", "spectral-inequality", "interpolation", "slicing",
            "observability", "null-control", "approx-control", "counterexample",
            "duality-check")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, seed=None, paths=None) -> dict:
    cfg = DEFAULT_CONFIG
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            with p.open("rb") as f:
                cfg = _merge(cfg, tomllib.load(f))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config file {p} does not parse: {exc}") from exc
    if seed is not None:
        cfg = _merge(cfg, {"run": {"seed": int(seed)}})
    if paths is not None:
        cfg = _merge(cfg, {"run": {"paths": int(paths)}})
    return cfg


class Experiment:
    """Configured instances shared by the commands."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.digest = config_digest(cfg)
        d = cfg["domain"]
        self.domain = DomainConfig(length=float(d["length"]), n_cells=int(d["n_cells"]))
        self.region = ControlRegion.validated(d["control_region"], self.domain)
        t = cfg["time"]
        self.horizon = float(t["horizon"])
        self.times = TimeSet(horizon=self.horizon, intervals=tuple(
            tuple(iv) for iv in t["control_times"]))
        self.n_steps = int(t["n_steps"])
        c = cfg["coefficients"]
        a = PiecewiseConstant(tuple(c["a_breakpoints"]), tuple(c["a_values"]))
        b = PiecewiseConstant(tuple(c["b_breakpoints"]), tuple(c["b_values"]))
        self.coeffs = CoefficientPair(a=a, b=b)
        if abs(self.coeffs.horizon - self.horizon) > 1e-12:
            raise ConfigurationError("coefficient breakpoints must end at the horizon")
        dt = self.horizon / self.n_steps
        if not (self.coeffs.a.aligned_to(dt) and self.coeffs.b.aligned_to(dt)):
            raise ConfigurationError(
                "coefficient breakpoints must be multiples of horizon / n_steps")
        r = cfg["run"]
        self.seed = int(r["seed"])
        self.paths = int(r["paths"])
        self.modes = int(r["modes"])
        self._basis = None

    @property
    def basis(self):
        if self._basis is None:
            self._basis = op.eigendecompose(op.assemble(self.domain))
        return self._basis

    def bundle(self, paths=None, n_steps=None):
        return sample_brownian(self.seed, n_steps or self.n_steps,
                               paths or self.paths, self.horizon)


# ---------------------------------------------------------------------------
# commands

def cmd_spectrum(ex: Experiment, out: Path, record: RunRecord):
    basis = ex.basis
    rows = [(j + 1, lam) for j, lam in enumerate(basis.lambdas)]
    record.outputs.append(write_csv(out / "spectrum.csv", ["j", "lambda"], rows,
                                    ex.digest))
    record.outputs.append(svg_line_chart(
        out / "spectrum.svg",
        {"eigenvalues": (list(range(1, basis.count + 1)), list(basis.lambdas))},
        "Spectrum of the bulk-surface operator", "mode index", "eigenvalue",
        ex.digest))
    record.scalars.update({
        "lambda_1": float(basis.lambdas[0]),
        "lambda_2": float(basis.lambdas[1]),
        "lambda_max": float(basis.lambdas[-1]),
        "n_modes": basis.count,
    })
    if abs(basis.lambdas[0]) > 1e-10:
        raise VerificationError(f"lambda_1 = {basis.lambdas[0]:.3e} is not zero")


def cmd_spectral_inequality(ex: Experiment, out: Path, record: RunRecord):
    n_windows = int(ex.cfg["spectral_inequality"]["n_windows"])
    rs, kappas, slope, intercept, resid = op.spectral_inequality_profile(
        ex.basis, ex.region, n_windows)
    rows = [(k + 1, r, np.sqrt(r), kap, np.log(kap))
            for k, (r, kap) in enumerate(zip(rs, kappas))]
    record.outputs.append(write_csv(
        out / "spectral_inequality.csv",
        ["window", "r", "sqrt_r", "kappa", "log_kappa"], rows, ex.digest))
    record.outputs.append(svg_line_chart(
        out / "spectral_inequality.svg",
        {"kappa(r)": (list(np.sqrt(rs)), list(kappas))},
        "Restriction constant growth", "sqrt(r)", "kappa", ex.digest, log_y=True))
    monotone = bool(np.all(np.diff(kappas) >= -1e-9 * kappas[:-1]))
    record.scalars.update({"fit_slope": slope, "fit_intercept": intercept,
                           "fit_residual": resid, "monotone": monotone,
                           "kappa_first": float(kappas[0]),
                           "kappa_last": float(kappas[-1])})
    if not monotone or slope <= 0:
        raise VerificationError("restriction constant growth violates monotonicity")


def cmd_interpolation(ex: Experiment, out: Path, record: RunRecord):
    icfg = ex.cfg["interpolation"]
    n_states, n_times = int(icfg["n_states"]), int(icfg["n_times"])
    min_gap = float(icfg["min_gap"])
    rng = np.random.default_rng(ex.seed)
    m = min(ex.modes, ex.basis.count)
    states = [ModeState(rng.standard_normal(m), time_stamp=ex.horizon)
              for _ in range(n_states)]
    t_grid = ex.horizon - np.geomspace(min_gap, ex.horizon * 0.9, n_times)[::-1]
    samples, fitted, slope, intercept, resid = obs.interpolation_profile(
        states, t_grid, ex.region, ex.basis, ex.coeffs)
    rows = [(i, s.t, s.gap, s.ratio, obs.implied_constant(s.ratio, s.gap), s.amplitude)
            for i, s in enumerate(samples)]
    record.outputs.append(write_csv(
        out / "interpolation.csv",
        ["sample", "t", "gap", "ratio", "implied_C", "amplitude"], rows, ex.digest))
    finite = [(1.0 / s.gap, s.ratio) for s in samples if np.isfinite(s.ratio)]
    record.outputs.append(svg_line_chart(
        out / "interpolation.svg",
        {"ratio": ([x for x, _ in finite], [y for _, y in finite])},
        "Interpolation ratio profile", "1/(T-t)", "ratio", ex.digest, log_y=True))
    record.scalars.update({"fitted_C": fitted, "fit_slope": slope,
                           "fit_intercept": intercept, "fit_residual": resid,
                           "max_amplitude": float(max(s.amplitude for s in samples))})


def cmd_slicing(ex: Experiment, out: Path, record: RunRecord):
    scfg = ex.cfg["slicing"]
    seq = obs.build_slicing(ex.times, float(scfg["s"]), float(scfg["c_fit"]),
                            float(scfg["dt"]))
    checks = seq.verify(ex.times)
    rows = [(c["i"], seq.times[c["i"] - 1], seq.times[c["i"]],
             seq.etas[c["i"] - 1], c["gap"], c["slice_measure"], c["eta_measure"],
             int(c["slice_ok"]), int(c["eta_ok"]), int(c["ratio_ok"]))
            for c in checks]
    record.outputs.append(write_csv(
        out / "slicing.csv",
        ["i", "t_i", "t_ip1", "eta_i", "gap", "slice_measure", "eta_measure",
         "slice_ok", "eta_ok", "ratio_ok"], rows, ex.digest))
    all_ok = all(c["slice_ok"] and c["eta_ok"] and c["ratio_ok"] for c in checks)
    record.scalars.update({"rho": seq.rho, "t_tilde": seq.t_tilde,
                           "n_slices": seq.truncation, "all_ok": all_ok})
    if not all_ok:
        raise VerificationError("slicing invariants failed")


def cmd_observability(ex: Experiment, out: Path, record: RunRecord):
    ocfg = ex.cfg["observability"]
    report = obs.estimate_observability_constant(
        ex.times, ex.region, float(ocfg["s"]), ex.basis, ex.coeffs,
        int(ocfg["n_modes"]), int(ocfg["n_samples"]), seed=ex.seed)
    report.config_digest = ex.digest
    rows = [(sid, num, den, ratio) for sid, num, den, ratio in report.ratio_samples]
    record.outputs.append(write_csv(
        out / "observability.csv",
        ["start", "energy", "observation_sq", "ratio"], rows, ex.digest))
    record.scalars.update({"constant_estimate": float(report.constant_estimate),
                           "regime": report.regime})


def cmd_null_control(ex: Experiment, out: Path, record: RunRecord):
    ncfg = ex.cfg["null_control"]
    sched = ctl.LebeauRobbianoSchedule(
        n_stages=int(ncfg["n_stages"]), first_window=float(ncfg["first_window"]),
        growth=float(ncfg["growth"]), control_fraction=float(ncfg["control_fraction"]),
        target=float(ncfg["target"]))
    rng = np.random.default_rng(ex.seed)
    m = min(ex.modes, ex.basis.count)
    y0 = ModeState(rng.standard_normal(m), time_stamp=0.0)
    plan = ctl.lebeau_robbiano_plan(y0, ex.times, ex.region, ex.basis, ex.coeffs, sched)
    plan = ctl.simulate_plan(plan, y0, ex.coeffs, ex.bundle(), ex.basis)
    rows = [(i + 1, st.kind, st.start, st.end, st.r, st.window_size, st.cost_sq,
             st.norm_after, st.high_norm_before, st.high_norm_after,
             st.high_decay_bound)
            for i, st in enumerate(plan.stages)]
    record.outputs.append(write_csv(
        out / "null_control_stages.csv",
        ["stage", "kind", "start", "end", "window_r", "window_size", "cost_sq",
         "norm_after", "high_before", "high_after", "high_bound"], rows, ex.digest))
    record.outputs.append(svg_line_chart(
        out / "null_control_norms.svg",
        {"|state| after stage": ([st.end for st in plan.stages],
                                 [max(st.norm_after, 1e-300) for st in plan.stages])},
        "Staged null control", "time", "reduced norm", ex.digest, log_y=True))
    # reduced trajectory and the realized control on a coarse grid
    grid = np.linspace(0.0, ex.horizon, 65)
    lam = ex.basis.lambdas[:m]
    traj = [y0.coeffs]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        traj.append(ctl.propagate_reduced(traj[-1], t0, t1, plan.signal,
                                          ex.coeffs, lam))
    n_show = min(4, m)
    traj_rows = [(t, float(np.linalg.norm(state)), *state[:n_show])
                 for t, state in zip(grid, traj)]
    record.outputs.append(write_csv(
        out / "null_control_trajectory.csv",
        ["t", "reduced_norm"] + [f"mode_{j + 1}" for j in range(n_show)],
        traj_rows, ex.digest))
    record.outputs.append(_control_grid_csv(out / "null_control_profile.csv",
                                            plan.signal, ex, grid[::4]))
    record.scalars.update({
        "initial_norm": plan.initial_norm,
        "predicted_cost_sq": plan.predicted_cost,
        "predicted_terminal_norm": plan.predicted_terminal_norm,
        "achieved_terminal_rms": plan.achieved_terminal_norm,
        "achieved_expected_sq": plan.achieved_expected_sq,
        "terminal_ratio": plan.achieved_expected_sq / plan.initial_norm ** 2,
        "control_linf_norm": plan.signal.linf_stochastic_norm(
            np.linspace(0.0, ex.horizon, 257)),
    })


def _control_grid_csv(path, signal, ex: Experiment, times):
    """Control profile as a (t, node, x, value) grid."""
    rows = []
    for t in times:
        v = signal.nodal_profile(float(t), ex.basis, ex.region)
        rows.extend((float(t), i, float(x), float(val))
                    for i, (x, val) in enumerate(zip(ex.domain.nodes, v)))
    return write_csv(path, ["t", "node", "x", "value"], rows, ex.digest)


def cmd_approx_control(ex: Experiment, out: Path, record: RunRecord):
    acfg = ex.cfg["approx_control"]
    m = min(int(acfg["n_modes"]), ex.basis.count)
    eps = float(acfg["eps"])
    rng = np.random.default_rng(ex.seed)
    y0 = ModeState(rng.standard_normal(m), time_stamp=0.0)
    target = ModeState(rng.standard_normal(m) * 0.5, time_stamp=ex.horizon)
    res = ctl.approximate_control(y0, target, eps, ex.times, ex.region,
                                  ex.basis, ex.coeffs)
    hist = res.gap_history
    step = max(1, len(hist) // 2000)
    rows = [(i, hist[i]) for i in range(0, len(hist), step)]
    record.outputs.append(write_csv(out / "approx_control_descent.csv",
                                    ["iteration", "best_gap"], rows, ex.digest))
    record.outputs.append(svg_line_chart(
        out / "approx_control_descent.svg",
        {"best gap": ([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])},
        "Penalized dual descent", "iteration", "window terminal gap", ex.digest,
        log_y=True))
    record.outputs.append(_control_grid_csv(out / "approx_control_profile.csv",
                                            res.signal, ex,
                                            np.linspace(0.0, ex.horizon, 17)))
    record.scalars.update({"eps": eps, "reduced_gap": res.reduced_gap,
                           "cost_sq": res.cost_sq, "iterations": res.iterations,
                           "stochastic_distance": res.stochastic_distance})
    if res.reduced_gap > eps:
        raise VerificationError(
            f"approximate control gap {res.reduced_gap:.3e} exceeds eps={eps:g}")


def cmd_counterexample(ex: Experiment, out: Path, record: RunRecord):
    s0 = float(ex.cfg["counterexample"]["s0"])
    bundle = ex.bundle()
    witness = ctl.build_counterexample(ex.times, s0, ex.coeffs, bundle, ex.basis)
    rows = [(t, float(np.mean(witness.phi[:, k])),
             float(np.sqrt(np.mean(witness.phi[:, k] ** 2))))
            for k, t in enumerate(witness.times)]
    record.outputs.append(write_csv(out / "counterexample_profile.csv",
                                    ["t", "mean_phi", "rms_phi"], rows, ex.digest))
    record.outputs.append(svg_line_chart(
        out / "counterexample_profile.svg",
        {"rms of the witness": ([r[0] for r in rows], [r[2] for r in rows])},
        "Counterexample witness growth", "time", "rms value", ex.digest))
    record.scalars.update({
        "s0": s0,
        "observation_norm": witness.observation_sup,
        "value_at_s0": witness.value_at_s0,
        "terminal_second_moment": witness.terminal_second_moment,
        "terminal_second_moment_exact": witness.terminal_second_moment_exact,
        "terminal_stderr": witness.terminal_stderr,
    })
    if witness.observation_sup != 0.0:
        raise VerificationError("witness observation is not identically zero")


def cmd_duality_check(ex: Experiment, out: Path, record: RunRecord):
    m = min(ex.modes, ex.basis.count)
    lam = ex.basis.lambdas[:m]
    rng = np.random.default_rng(ex.seed)
    y0 = ModeState(rng.standard_normal(m), time_stamp=0.0)
    zT = ModeState(rng.standard_normal(m), time_stamp=ex.horizon)
    adj = solve_backward(zT, ex.coeffs, lam)
    rows = []
    free = check_duality(y0, None, adj, ex.coeffs, method="exact")
    rows.append(("exact_free", free.lhs, free.rhs, free.residual, 0.0))
    signal = ctl.partial_null_control(y0, float(lam[min(3, m - 1)]),
                                      (0.0, ex.horizon), ex.times, ex.region,
                                      ex.basis, ex.coeffs)
    ctrl = check_duality(y0, signal, adj, ex.coeffs, method="exact")
    rows.append(("exact_controlled", ctrl.lhs, ctrl.rhs, ctrl.residual, 0.0))
    mc = check_duality(y0, signal, adj, ex.coeffs, bundle=ex.bundle(), method="mc")
    rows.append(("mc_controlled", mc.lhs, mc.rhs, mc.residual, mc.stderr))
    chaos = solve_backward_mc(zT.coeffs, 0.3 * np.ones(m), ex.coeffs, lam, ex.horizon)
    mcc = check_duality(y0, None, chaos, ex.coeffs, bundle=ex.bundle(), method="mc")
    rows.append(("mc_chaos", mcc.lhs, mcc.rhs, mcc.residual, mcc.stderr))
    record.outputs.append(write_csv(out / "duality.csv",
                                    ["regime", "lhs", "rhs", "residual", "stderr"],
                                    rows, ex.digest))
    record.scalars.update({
        "residual_exact_free": free.residual,
        "residual_exact_controlled": ctrl.residual,
        "residual_mc": mc.residual, "stderr_mc": mc.stderr,
        "residual_mc_chaos": mcc.residual, "stderr_mc_chaos": mcc.stderr,
    })
    if free.residual > 1e-10 or ctrl.residual > 1e-10:
        raise VerificationError("exact duality residual exceeds 1e-10")
    if not (mc.within(3.0) and mcc.within(3.0)):
        raise VerificationError("Monte Carlo duality residual beyond 3 standard errors")


_DISPATCH = {
    "spectrum": cmd_spectrum,
    "spectral-inequality": cmd_spectral_inequality,
    "interpolation": cmd_interpolation,
    "slicing": cmd_slicing,
    "observability": cmd_observability,
    "null-control": cmd_null_control,
    "approx-control": cmd_approx_control,
    "counterexample": cmd_counterexample,
    "duality-check": cmd_duality_check,
}


def run(command: str, config_path=None, out_dir="runs", seed=None, paths=None
        ) -> RunRecord:
    """Run one command and persist its outputs; returns the run record."""
    if command not in _DISPATCH:
        raise ConfigurationError(f"unknown command {command!r}; choose from {COMMANDS}")
    cfg = load_config(config_path, seed=seed, paths=paths)
    ex = Experiment(cfg)
    out = Path(out_dir) / command.replace("-", "_")
    record = RunRecord(command=command, config_digest=ex.digest, seed=ex.seed)
    with StopWatch() as sw:
        _DISPATCH[command](ex, out, record)
    record.wall_time = sw.elapsed
    record.outputs.append(record.save(out / "run_record.json"))
    return record


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynheat",
        description="Desk-scale controllability experiments for stochastic heat "
                    "equations with dynamic boundary conditions")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="TOML configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--paths", type=int, default=None, help="override run.paths")
    parser.add_argument("--out", default="runs", help="output directory")
    args = parser.parse_args(argv)
    try:
        record = run(args.command, config_path=args.config, out_dir=args.out,
                     seed=args.seed, paths=args.paths)
    except (ConfigurationError, MeasureConditionError, PlanningError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, IllPosedWindowError, DegenerateObservationError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 4
    except DynheatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"{record.command}: digest={record.config_digest} "
          f"wall={record.wall_time:.2f}s")
    for k, v in sorted(record.scalars.items()):
        print(f"  {k} = {v}")
    for p in record.outputs:
        print(f"  wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
