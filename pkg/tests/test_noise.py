"""Coefficients, Brownian sampling, and the stochastic exponential factor."""

import numpy as np
import pytest

import dynheat as dh
from dynheat.errors import ConfigurationError


def test_piecewise_constant_eval_and_integral():
    f = dh.PiecewiseConstant((0.0, 0.25, 1.0), (2.0, -1.0))
    assert f(0.0) == 2.0
    assert f(0.25) == -1.0          # right-continuous at the knot
    assert f(0.9) == -1.0
    assert f.integral(0.0, 1.0) == pytest.approx(2.0 * 0.25 - 0.75, abs=1e-15)
    assert f.integral(0.1, 0.3) == pytest.approx(2.0 * 0.15 - 0.05, abs=1e-15)
    assert f.integral(0.3, 0.1) == pytest.approx(-f.integral(0.1, 0.3), abs=1e-15)
    assert f.sup == 2.0


def test_piecewise_validation():
    with pytest.raises(ConfigurationError):
        dh.PiecewiseConstant((0.0, 0.5), (1.0, 2.0))
    with pytest.raises(ConfigurationError):
        dh.PiecewiseConstant((0.0, 0.5, 0.5, 1.0), (1.0, 2.0, 3.0))
    with pytest.raises(ConfigurationError):
        dh.PiecewiseConstant((0.1, 1.0), (1.0,))


def test_delta_matches_definition(coeffs_piecewise):
    c = coeffs_piecewise
    assert c.delta == 2.0 * c.a_sup + c.b_sup ** 2
    assert c.a_sup == 0.3
    assert c.b_sup == 0.25


def test_same_seed_bitwise_identical():
    b1 = dh.sample_brownian(123, 64, 50, 1.0)
    b2 = dh.sample_brownian(123, 64, 50, 1.0)
    assert np.array_equal(b1.increments, b2.increments)


def test_path_streams_independent_of_count():
    # per-path seeding: the first paths do not change when more are added
    b_small = dh.sample_brownian(123, 32, 10, 1.0)
    b_big = dh.sample_brownian(123, 32, 40, 1.0)
    assert np.array_equal(b_small.increments, b_big.increments[:10])


def test_terminal_mean_clt_bound():
    paths = 100_000
    b = dh.sample_brownian(42, 8, paths, 1.0)
    WT = b.increments.sum(axis=1)
    assert abs(WT.mean()) <= 4.0 * np.sqrt(1.0 / paths)


def test_terminal_variance_within_5_percent():
    paths = 100_000
    b = dh.sample_brownian(43, 8, paths, 1.0)
    WT = b.increments.sum(axis=1)
    assert WT.var() == pytest.approx(1.0, rel=0.05)


def test_factor_is_one_without_noise():
    c = dh.CoefficientPair.constant(0.4, 0.0, 1.0)
    b = dh.sample_brownian(1, 16, 100, 1.0)
    M = dh.stochastic_factor(b, c)
    assert np.array_equal(M.values, np.ones_like(M.values))


def test_factor_martingale_mean():
    c = dh.CoefficientPair.constant(0.0, 1.0, 1.0)
    b = dh.sample_brownian(11, 32, 100_000, 1.0)
    M = dh.stochastic_factor(b, c)
    term = M.terminal
    se = term.std(ddof=1) / np.sqrt(b.paths)
    assert abs(term.mean() - 1.0) <= 3.0 * se
    assert np.all(term > 0.0)
    assert np.array_equal(M.values[:, 0], np.ones(b.paths))


def test_factor_second_moment():
    c = dh.CoefficientPair.constant(0.0, 0.7, 1.0)
    b = dh.sample_brownian(12, 32, 100_000, 1.0)
    term = dh.stochastic_factor(b, c).terminal
    expect = dh.second_moment_factor(c, 1.0)   # exp of the integral of b^2
    sq = term ** 2
    se = sq.std(ddof=1) / np.sqrt(b.paths)
    assert abs(sq.mean() - expect) <= 3.0 * se


def test_factor_pathwise_log_identity(coeffs_piecewise):
    # log M + (1/2) int b^2 must reproduce the Ito sums of the increments
    b = dh.sample_brownian(13, 40, 64, 1.0)
    M = dh.stochastic_factor(b, coeffs_piecewise)
    t_left = b.times[:-1]
    bvals = coeffs_piecewise.b(t_left)
    ito = np.cumsum(bvals[None, :] * b.increments, axis=1)
    comp = np.cumsum(0.5 * bvals ** 2 * b.dt)
    assert np.max(np.abs(np.log(M.values[:, 1:]) + comp[None, :] - ito)) <= 1e-12


def test_misaligned_breakpoints_rejected():
    c = dh.CoefficientPair(a=dh.PiecewiseConstant.constant(0.0, 1.0),
                           b=dh.PiecewiseConstant((0.0, 1.0 / 3.0, 1.0), (0.5, 0.1)))
    b = dh.sample_brownian(1, 16, 10, 1.0)
    with pytest.raises(ConfigurationError):
        dh.stochastic_factor(b, c)
