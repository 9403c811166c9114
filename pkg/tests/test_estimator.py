import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from proxymt.errors import ContractError
from proxymt.estimator import (cmt_estimate, corner_tapers, default_rect_count, mask_taper, mper_estimate,
                               multitaper_estimate, tapered_periodogram)
from proxymt.fields import FieldSample, SpectralGrid
from proxymt.grid import DomainMask, corner_subgrids_mask, disk_complement_mask, full_mask
from proxymt.tapers import proxy_tapers, rotate_tapers, tensor_tapers


def naive_dft_periodogram(x, taper_grid, freq_dims):
    """Explicit double sum over sites and lattice frequencies."""
    out = np.empty(freq_dims)
    sites = list(zip(*np.nonzero(taper_grid)))
    for k0 in range(freq_dims[0]):
        for k1 in range(freq_dims[1]):
            xi = (k0 / freq_dims[0] - 0.5, k1 / freq_dims[1] - 0.5)
            acc = 0j
            for q in sites:
                acc += taper_grid[q] * x[q] * np.exp(-2j * np.pi * (q[0] * xi[0] + q[1] * xi[1]))
            out[k0, k1] = abs(acc) ** 2
    return out


def random_mask(seed, dims, fill=0.6):
    occ = np.random.default_rng(seed).random(dims) < fill
    occ.flat[0] = True
    return DomainMask(occ)


@pytest.mark.parametrize("seed", range(4))
def test_periodogram_matches_naive_dft(seed):
    rng = np.random.default_rng(seed)
    m = random_mask(seed, (8, 8))
    t = rng.standard_normal(m.n_omega)
    t /= np.linalg.norm(t)
    x = rng.standard_normal((8, 8))
    fd = (8, 8) if seed % 2 == 0 else (12, 16)
    got = tapered_periodogram(x, m, t, fd).values
    ref = naive_dft_periodogram(x, m.embed(t), fd)
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_periodogram_accepts_grid_taper_and_checks_contract():
    m = random_mask(0, (6, 6))
    t = np.full(m.n_omega, 1 / np.sqrt(m.n_omega))
    x = np.random.default_rng(1).standard_normal((6, 6))
    a = tapered_periodogram(x, m, t).values
    b = tapered_periodogram(x, m, m.embed(t)).values
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ContractError):
        tapered_periodogram(x, m, 2 * t)
    bad = m.embed(t)
    bad[~m.occupancy] = 0.1
    with pytest.raises(ContractError):
        tapered_periodogram(x, m, bad)
    with pytest.raises(ContractError):
        tapered_periodogram(np.ones((5, 6)), m, t)
    with pytest.raises(ContractError):
        tapered_periodogram(x, m, t, (4, 6))


def test_multitaper_is_mean_of_periodograms():
    m = random_mask(2, (10, 10))
    tap = proxy_tapers(m, K=5, T=2, seed=0)
    x = np.random.default_rng(0).standard_normal((10, 10))
    est = multitaper_estimate(FieldSample(x), tap, (16, 20))
    ref = np.mean([tapered_periodogram(x, m, tap.vectors[:, k], (16, 20)).values for k in range(5)], axis=0)
    np.testing.assert_allclose(est.values, ref, rtol=1e-12)
    assert est.meta["K"] == 5 and est.meta["taper_kind"] == "proxy"


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_span_invariance(seed):
    m = random_mask(seed, (12, 12))
    tap = proxy_tapers(m, K=8, T=2, seed=seed % 1000)
    U = ortho_group.rvs(8, random_state=seed % 2 ** 31)
    x = np.random.default_rng(seed).standard_normal((12, 12))
    a = multitaper_estimate(x, tap).values
    b = multitaper_estimate(x, rotate_tapers(tap, U)).values
    assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_estimate_is_symmetric_in_frequency():
    m = disk_complement_mask(16, 5)
    tap = proxy_tapers(m, W=0.25, T=2, seed=0)
    x = np.random.default_rng(0).standard_normal((16, 16))
    est = multitaper_estimate(x, tap)
    np.testing.assert_allclose(est.values, est.reflected(), rtol=1e-12, atol=1e-14)


def test_mper_is_mask_taper_periodogram():
    m = random_mask(4, (9, 9))
    x = np.random.default_rng(0).standard_normal((9, 9))
    np.testing.assert_allclose(np.linalg.norm(mask_taper(m)), 1.0)
    a = mper_estimate(x, m).values
    b = tapered_periodogram(x, m, mask_taper(m)).values
    np.testing.assert_array_equal(a, b)
    # at zero frequency the masked periodogram is the squared normalised sum
    assert a[4, 4] == pytest.approx(x[m.occupancy].sum() ** 2 / m.n_omega, rel=1e-12)


def test_white_noise_estimate_is_unbiased():
    m = random_mask(5, (16, 16))
    tap = proxy_tapers(m, K=12, T=2, seed=0)
    rng = np.random.default_rng(9)
    acc = np.mean([multitaper_estimate(rng.standard_normal((16, 16)), tap).values for _ in range(400)], axis=0)
    assert acc.mean() == pytest.approx(1.0, rel=0.02)


def test_cmt_averages_rectangle_estimates():
    N, R = 48, 22.0
    cs = corner_subgrids_mask(N, R)
    x = np.random.default_rng(0).standard_normal((N, N))
    W = 0.25
    taps = corner_tapers(cs, W)
    assert [t.K for t in taps] == [default_rect_count(d, W) for _, d in cs.rectangles]
    est = cmt_estimate(x, cs, W, rect_tapers=taps).values
    ref = np.mean([multitaper_estimate(x, t).values for t in taps], axis=0)
    np.testing.assert_allclose(est, ref, rtol=1e-12)
    np.testing.assert_allclose(cmt_estimate(x, cs, W).values, est, rtol=1e-12)


def test_default_rect_count():
    assert default_rect_count((85, 85), 1 / 16) == 29
    assert default_rect_count((4, 4), 0.5) == 4
    assert default_rect_count((2, 2), 0.01) == 1
