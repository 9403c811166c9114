import numpy as np
import pytest
from scipy.integrate import quad

from proxymt.errors import ContractError
from proxymt.fields import SpectralGrid
from proxymt.simulate import (DensitySpec, constant_density, cryo_noise_density, sample_field, synthetic_projection,
                              triple_disk_density)
from proxymt.tapers import make_rng

A = 1.0 / 8.0


def lens_area(r):
    """Overlap area of two radius-A disks whose centres are r apart."""
    return 2 * A * A * np.arccos(r / (2 * A)) - (r / 2) * np.sqrt(4 * A * A - r * r)


def triple_disk_at_zero():
    # S(0) = int_{|eta| < A} (1_disk * 1_disk)(eta) d eta
    return 2 * np.pi * quad(lambda r: lens_area(r) * r, 0, A, epsabs=1e-15, epsrel=1e-13)[0]


# frozen from the quadrature above
S0_QUADRATURE = 0.0014132216385650312


def test_quadrature_oracle_is_frozen():
    assert triple_disk_at_zero() == pytest.approx(S0_QUADRATURE, rel=1e-12)


@pytest.mark.parametrize("n,tol", [(128, 0.03), (256, 0.01)])
def test_triple_disk_peak_matches_quadrature(n, tol):
    S = triple_disk_density((n, n))
    assert S.values[n // 2, n // 2] == pytest.approx(S0_QUADRATURE, rel=tol)
    assert S.values.argmax() == np.ravel_multi_index((n // 2, n // 2), (n, n))
    assert S.integral() == pytest.approx((np.pi * A * A) ** 3, rel=3 * tol)


def test_triple_disk_is_symmetric_nonnegative_and_compact():
    S = triple_disk_density((96, 96))
    np.testing.assert_allclose(S.values, S.reflected(), rtol=0, atol=1e-20)
    assert S.values.min() > -1e-17
    xi = np.arange(96) / 96 - 0.5
    r = np.hypot(*np.meshgrid(xi, xi, indexing="ij"))
    assert np.abs(S.values[r > 3 * A + 0.03]).max() < 1e-17
    with pytest.raises(ContractError):
        triple_disk_density((32, 32))


def test_sample_field_matches_independent_filter():
    S = cryo_noise_density((32, 24))
    x = sample_field(S, (32, 24), seed=5)
    w = make_rng(5).standard_normal((32, 24))
    h = np.sqrt(np.fft.ifftshift(0.5 * (S.values + S.reflected())))
    ref = np.fft.ifft2(h * np.fft.fft2(w)).real
    np.testing.assert_allclose(x.values, ref, rtol=1e-12, atol=1e-13)


def test_expected_periodogram_is_density():
    n = 64
    S = triple_disk_density((n, n))
    scale = 1.0 / S.values.max()
    S = SpectralGrid(S.values * scale)
    acc = np.zeros((n, n))
    draws = 300
    for s in range(draws):
        x = sample_field(S, (n, n), seed=s).values
        acc += np.abs(np.fft.fftshift(np.fft.fft2(x))) ** 2 / (n * n)
    acc /= draws
    band = S.values > 0.1
    rel = acc[band] / S.values[band]
    # each bin is an average of 300 (roughly) exponential variables
    assert abs(rel.mean() - 1) < 0.02
    assert np.abs(rel - 1).max() < 6 / np.sqrt(draws) * 2


def test_constant_density_gives_white_noise_variance():
    x = sample_field(constant_density((128, 128), 2.5), (128, 128), seed=1)
    assert x.values.var() == pytest.approx(2.5, rel=0.03)
    assert x.meta["seed"] == 1


def test_sample_field_determinism_and_contracts():
    S = constant_density((16, 16))
    a = sample_field(S, (16, 16), 3).values
    np.testing.assert_array_equal(a, sample_field(S, (16, 16), 3).values)
    assert not np.array_equal(a, sample_field(S, (16, 16), 4).values)
    with pytest.raises(ContractError):
        sample_field(S, (16, 8), 0)
    with pytest.raises(ContractError):
        sample_field(SpectralGrid(-np.ones((4, 4))), (4, 4), 0)


def test_density_spec():
    assert DensitySpec("constant", (8, 8), {"sigma2": 3.0}).grid().values.max() == 3.0
    g = cryo_noise_density((8, 8))
    assert DensitySpec("grid", (8, 8), {"grid": g}).grid() is g
    with pytest.raises(ContractError):
        DensitySpec("grid", (4, 4), {"grid": g}).grid()
    with pytest.raises(ContractError):
        DensitySpec("nope", (8, 8)).grid()


def test_cryo_noise_density_is_normalised():
    S = cryo_noise_density((64, 64))
    assert S.values.mean() == pytest.approx(1.0, rel=1e-12)
    assert S.values.min() > 0
    np.testing.assert_allclose(S.values, S.reflected(), rtol=1e-14)


def test_projection_support_and_power():
    N = 128
    img = synthetic_projection((N, N), seed=3).values
    ax = np.arange(N) - N / 2
    r = np.hypot(*np.meshgrid(ax, ax, indexing="ij"))
    assert np.all(img[r >= 0.35 * N] == 0)
    assert (img[r < 0.35 * N] ** 2).mean() == pytest.approx(0.1, rel=1e-12)
    other = synthetic_projection((N, N), seed=4).values
    assert not np.allclose(img, other)
    np.testing.assert_array_equal(img, synthetic_projection((N, N), seed=3).values)
