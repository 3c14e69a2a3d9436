import math

import numpy as np
import pytest

import pcprior


def test_calibration_rates():
    h = pcprior.calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
    assert h.lambda_range == pytest.approx(-0.1 * math.log(0.05), rel=1e-14)
    assert h.lambda_sigma == pytest.approx(-math.log(0.05) / 10.0, rel=1e-14)
    with pytest.raises(ValueError):
        pcprior.calibrate_pc(-1.0, 0.05, 10.0, 0.05, 2)


def test_range_marginal_tail_probability():
    h = pcprior.calibrate_pc(0.3, 0.1, 2.0, 0.2, 2)
    # trapezoid on a log grid for P(rho < rho0)
    r = np.exp(np.linspace(math.log(1e-4), math.log(0.3), 20001))
    f = np.exp([pcprior.pc_range_logdensity(x, h) for x in r]) * r
    below = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(np.log(r))))
    assert below == pytest.approx(0.1, abs=1e-4)


def test_kld_and_crps_closed_forms():
    assert pcprior.scaled_kld(1.0, 2.0, 2) == pytest.approx(1.5 * math.pi, rel=1e-10)
    assert pcprior.scaled_kld(2.0, 2.0, 2) == pytest.approx(4 * 1.5 * math.pi, rel=1e-9)
    assert pcprior.crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(0.233695, abs=1e-6)
    with pytest.raises(ArithmeticError):
        pcprior.scaled_kld(1.0, 1.0, 2)


def test_exponential_covariance():
    assert pcprior.matern_cov(0.5, 1.0) == pytest.approx(math.exp(-1.0))


def test_simulate_and_fit():
    loc = pcprior.uniform_design(25)
    assert loc.shape == (25, 2)
    y = pcprior.sample_grf(loc, 0.3, seed=4)
    assert y.shape == (25,)
    assert np.array_equal(y, pcprior.sample_grf(loc, 0.3, seed=4))
    h = pcprior.calibrate_pc(0.05, 0.05, 10.0, 0.05, 2)
    fit = pcprior.fit_direct(loc, y, h, iterations=3000, burn_in=1000, seed=2)
    assert fit["names"] == ["log_rho", "log_sigma2"]
    assert fit["samples"].shape == (3000, 2)
    assert 0.05 < fit["acceptance_rate"] < 0.8
    jf = pcprior.fit_direct(loc, y, pcprior.JeffreysRule(), iterations=2000, burn_in=500)
    assert np.all(np.isfinite(jf["samples"]))


def test_small_coverage_cell():
    loc = pcprior.uniform_design(25)
    cell = pcprior.coverage_study(pcprior.UniformRange(0.01, 2.0), 0.1, loc, replicates=4,
                                  iterations=1500, burn_in=500, seed=3, threads=1)
    assert cell["replicates"] == 4
    assert 0.0 <= cell["coverage_range"] <= 1.0
