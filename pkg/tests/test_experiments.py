import math

import numpy as np
import pytest

from proxymt.errors import ContractError, DomainError
from proxymt.estimator import multitaper_estimate
from proxymt.experiments import (ExperimentCurve, TaperCache, c2_norm, derive_seed, fit_bound_constant,
                                 fit_loglog_slope, mse_bound_rhs, mse_statistics, run_cryoem_synthetic,
                                 run_mse_sweep, run_specwin_sweep, run_subgrid_comparison, specwin_bound_rhs)
from proxymt.fields import SpectralGrid, frequency_lattice
from proxymt.grid import disk_mask, full_mask
from proxymt.tapers import proxy_tapers


def test_slope_of_exact_power_law():
    x = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    fit = fit_loglog_slope(x, y=x ** -2.0)
    assert fit["slope"] == pytest.approx(-2.0, abs=1e-12)
    assert fit["stderr"] < 1e-12


def test_slope_of_constant_is_zero():
    fit = fit_loglog_slope([1.0, 2.0, 3.0], y=[5.0, 5.0, 5.0])
    assert fit["slope"] == pytest.approx(0.0, abs=1e-14)


def test_slope_contracts():
    with pytest.raises(DomainError):
        fit_loglog_slope([1.0, 2.0, 3.0], y=[1.0, 0.0, 2.0])
    with pytest.raises(ContractError):
        fit_loglog_slope([1.0, 2.0], y=[1.0, 2.0])


def test_curve_validation_and_csv(tmp_path):
    c = ExperimentCurve("t", "R", ("err",), ("K",))
    c.rows = [{"R": 1.0, "err": 0.5, "K": 3}, {"R": 2.0, "err": 0.25, "K": 7}]
    c.validate()
    c.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines == ["R,err,K", "1.0,0.5,3", "2.0,0.25,7"]
    assert fit_loglog_slope(ExperimentCurve("t", "R", ("err",), (), rows=c.rows + [{"R": 4.0, "err": 0.125}]))[
        "slope"] == pytest.approx(-1.0)
    c.rows.append({"R": 2.0, "err": 0.1, "K": 1})
    with pytest.raises(ContractError):
        c.validate()
    c.rows[-1] = {"R": 3.0, "err": -0.1, "K": 1}
    with pytest.raises(ContractError):
        c.validate()


def test_mse_decomposition_identity():
    rng = np.random.default_rng(0)
    est = rng.gamma(2.0, size=(16, 5, 7))
    truth = rng.random((5, 7))
    st = mse_statistics(est, truth)
    np.testing.assert_allclose(st["bias2"] + st["variance"], st["mse"], rtol=1e-12)
    np.testing.assert_allclose(st["mse"], ((est - truth) ** 2).mean(0), rtol=1e-14)


def test_mse_estimate_monte_carlo_error_halves_with_double_m():
    """Variance of the sample MSE at one frequency scales as 1/M."""
    m = full_mask((12, 12))
    tap = proxy_tapers(m, K=4, T=2, seed=0)
    rng = np.random.default_rng(1)
    reps = 300
    draws = np.array([multitaper_estimate(rng.standard_normal((12, 12)), tap).values[3, 2] for _ in range(reps * 24)])
    sq = (draws - 1.0) ** 2
    var_m = sq[: reps * 8].reshape(reps, 8).mean(1).var()
    var_2m = sq[reps * 8:].reshape(reps, 16).mean(1).var()
    assert 1.6 <= var_m / var_2m <= 2.6


def test_c2_norm_of_cosine():
    xs = frequency_lattice((256, 256))
    S = SpectralGrid(2.0 + np.cos(2 * np.pi * xs[0]))
    expected = 3.0 + 2 * np.pi + 4 * np.pi ** 2
    assert c2_norm(S) == pytest.approx(expected, rel=1e-3)


def test_bound_formulas():
    assert specwin_bound_rhs(1000, 100, 0.125, 16, 2) == pytest.approx(100 * 0.125 / 16 * (1 + math.log(10)))
    rhs = mse_bound_rhs(1000, 100, 100, 2, 2.0)
    expected = (100 ** 2 / 1000 ** 2 + 100 ** 2 * (1 + math.log(10)) ** 2 / (1000 * 100) + 1 / 100) * 4
    assert rhs == pytest.approx(expected)
    fit = fit_bound_constant([1.0, 2.0], [2.0, 2.0])
    assert fit["C"] == 1.0 and fit["spread"] == 2.0


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(1, 2, k) for k in range(50)}) == 50


def test_specwin_sweep_small_is_deterministic():
    a = run_specwin_sweep(64, 0.25, [6, 10, 16, 24], T=2, seed=3)
    b = run_specwin_sweep(64, 0.25, [6, 10, 16, 24], T=2, seed=3)
    assert a.rows == b.rows
    assert a.column("K").tolist() == [int(math.ceil(disk_mask(64, r).n_omega / 16 - 1e-9)) for r in (6, 10, 16, 24)]
    err = a.column("l1_window_error")
    assert np.all(err > 0) and np.all(err < 2)
    # lattice Riemann sums sit close to the exact value at this resolution
    np.testing.assert_allclose(a.column("l1_window_error_lattice"), err, atol=0.1)


def test_specwin_sweep_rejects_unsorted_radii():
    with pytest.raises(ContractError):
        run_specwin_sweep(32, 0.25, [8, 4, 12])


def test_mse_sweep_small():
    c = run_mse_sweep(64, [8, 16, 24], M=8, seed=0)
    assert c.meta["c2_norm"] > 0
    row = c.rows[0]
    assert row["max_bias2"] <= row["max_mse"] * (1 + 1e-12)
    assert row["max_variance"] <= row["max_mse"] * (1 + 1e-12)
    assert row["mse_over_log2"] == pytest.approx(row["max_mse"] / math.log(row["n_omega"]) ** 2)
    assert row["W"] == pytest.approx(row["n_omega"] ** (-1 / 6))
    with pytest.raises(ContractError):
        run_mse_sweep(64, [8, 16, 24], M=4)


def test_subgrid_comparison_small_converges_with_t():
    low = run_subgrid_comparison(64, 0.125, T=2, seed=0, sub=40)
    high = run_subgrid_comparison(64, 0.125, T=60, seed=0, sub=40)
    assert low["K"] == high["K"] == 25
    assert high["deviation"] < 1e-10 < low["deviation"]
    assert high["nrmse_tensor"] == low["nrmse_tensor"]


def test_cryoem_small():
    curves = run_cryoem_synthetic(64, [24, 28], M=3, seed=0)
    assert set(curves) == {"bias2", "variance", "mse"}
    for name in ("mper", "cmt", "pmt"):
        b, v, m = (curves[k].column(name) for k in ("bias2", "variance", "mse"))
        assert np.all(m >= 0)
    with pytest.raises(DomainError):
        run_cryoem_synthetic(64, [50], M=3)


def test_taper_cache_round_trip(tmp_path):
    cache = TaperCache(tmp_path)
    mask = disk_mask(20, 7)
    a = cache.proxy(mask, 9, 2, 1, 0.3)
    b = cache.proxy(mask, 9, 2, 1, 0.3)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert len(list(tmp_path.iterdir())) == 1
