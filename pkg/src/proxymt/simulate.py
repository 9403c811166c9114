"""Test densities and synthetic fields.

Fields are drawn on the torus Q_N by filtering white noise in the DFT domain
(circulant embedding of the process). The expected full-grid periodogram of a
draw equals the density at every lattice bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ContractError
from .fields import FieldSample, SpectralGrid, frequency_lattice
from .tapers import make_rng, RNG_ALGORITHM

__all__ = [
    "DensitySpec",
    "constant_density",
    "triple_disk_density",
    "cryo_noise_density",
    "sample_field",
    "synthetic_projection",
    "SYNTHESIS_NOTE",
]

SYNTHESIS_NOTE = "periodic (circulant) synthesis on Q_N: X = Re IDFT(sqrt(S) DFT(white noise))"
DISK_RADIUS = 1.0 / 8.0


@dataclass
class DensitySpec:
    """A named spectral density, realised on a lattice by :meth:`grid`.

    ``kind`` is ``"constant"`` (``params["sigma2"]``), ``"triple_disk"`` or
    ``"grid"`` (``params["grid"]`` holds a :class:`SpectralGrid`).
    """

    kind: str
    freq_dims: tuple
    params: dict = field(default_factory=dict)

    def grid(self) -> SpectralGrid:
        if self.kind == "constant":
            return constant_density(self.freq_dims, self.params.get("sigma2", 1.0))
        if self.kind == "triple_disk":
            return triple_disk_density(self.freq_dims)
        if self.kind == "grid":
            g = self.params["grid"]
            if g.freq_dims != tuple(self.freq_dims):
                raise ContractError("custom density lattice does not match freq_dims")
            return g
        raise ContractError(f"unknown density kind {self.kind!r}")


def constant_density(freq_dims: Sequence[int], sigma2: float = 1.0) -> SpectralGrid:
    if sigma2 < 0:
        raise ContractError("variance must be nonnegative")
    return SpectralGrid(np.full(tuple(freq_dims), float(sigma2)), {"density": "constant", "sigma2": float(sigma2)})


def _symmetrise(v: np.ndarray) -> np.ndarray:
    """Average a DFT-order array with its reflection ``k -> -k mod n``."""
    r = v
    for ax in range(v.ndim):
        r = np.roll(np.flip(r, axis=ax), 1, axis=ax)
    return 0.5 * (v + r)


def triple_disk_density(freq_dims: Sequence[int]) -> SpectralGrid:
    """Three-fold periodic self-convolution of the indicator of ``|xi| < 1/8``.

    The indicator is sampled on the lattice and convolved through the DFT; each
    convolution carries one factor of the cell volume so the result
    approximates the continuous convolution on the torus.
    """
    freq_dims = tuple(int(n) for n in freq_dims)
    if min(freq_dims) < 64:
        raise ContractError("triple-disk density needs at least 64 lattice points per axis")
    xs = frequency_lattice(freq_dims)
    disk = (np.sqrt(sum(x * x for x in xs)) < DISK_RADIUS).astype(np.float64)
    cell = 1.0 / float(np.prod(freq_dims))
    f = sfft.fftn(np.fft.ifftshift(disk))
    s = sfft.ifftn(f ** 3).real * cell ** 2
    # the convolution of indicators is nonnegative; drop FFT round-off below zero
    s = np.clip(_symmetrise(s), 0.0, None)
    return SpectralGrid(np.fft.fftshift(s), {"density": "triple_disk", "radius": DISK_RADIUS})


def cryo_noise_density(freq_dims: Sequence[int], floor: float = 1.0, width: float = 0.3) -> SpectralGrid:
    """Smooth radially decaying noise spectrum with a white floor, unit variance.

    Stand-in for a measured detector/ice noise profile: a Gaussian bump of
    standard deviation ``width`` on top of ``floor``, scaled so the lattice
    mean (the pixel variance of a draw) is 1.
    """
    xs = frequency_lattice(freq_dims)
    r2 = sum(x * x for x in xs)
    s = floor + np.exp(-r2 / (2 * width ** 2))
    s /= s.mean()
    return SpectralGrid(s, {"density": "cryo_noise", "floor": floor, "width": width})


def _density_grid(density, dims) -> SpectralGrid:
    if isinstance(density, DensitySpec):
        density = density.grid()
    if not isinstance(density, SpectralGrid):
        density = SpectralGrid(np.asarray(density))
    if density.freq_dims != tuple(dims):
        raise ContractError(f"density lattice {density.freq_dims} does not match field dims {tuple(dims)}")
    return density


def sample_field(density, dims: Sequence[int], seed: int) -> FieldSample:
    """Draw a zero-mean Gaussian field on the torus with lattice density ``S``.

    ``X = Re IDFT(sqrt(S) * DFT(w))`` with ``w`` standard white noise; the
    density is symmetrised under ``xi -> -xi`` first so the filtered field is
    real up to rounding (checked). Then ``E |DFT X|^2 / prod(dims) = S``.
    """
    dims = tuple(int(n) for n in dims)
    S = _density_grid(density, dims)
    peak = float(np.abs(S.values).max())
    if S.values.min() < -1e-12 * peak:
        raise ContractError("spectral density has negative values")
    root = np.sqrt(np.clip(_symmetrise(S.unshifted()), 0.0, None))
    w = make_rng(seed).standard_normal(dims)
    y = sfft.ifftn(root * sfft.fftn(w))
    scale = max(float(np.abs(y.real).max()), np.finfo(float).tiny)
    if float(np.abs(y.imag).max()) > 1e-10 * scale:
        raise ContractError("filtered field has a non-negligible imaginary part")
    meta = {"seed": int(seed), "rng": RNG_ALGORITHM, "synthesis": SYNTHESIS_NOTE}
    meta.update({k: v for k, v in S.meta.items() if isinstance(v, (int, float, str))})
    return FieldSample(y.real, meta)


# twelve (width, amplitude) pairs; width as a fraction of N
_BLOB_WIDTHS = np.array([0.030, 0.045, 0.060, 0.035, 0.050, 0.040, 0.055, 0.030, 0.065, 0.045, 0.038, 0.052])
_BLOB_AMPS = np.array([1.0, 0.8, 0.6, 1.2, 0.7, 0.9, 0.5, 1.1, 0.4, 0.85, 0.95, 0.65])
# fixed centre constellation in polar form (radius as a fraction of N, angle)
_BLOB_RADII = np.array([0.00, 0.06, 0.06, 0.06, 0.11, 0.11, 0.11, 0.11, 0.16, 0.16, 0.16, 0.16])
_BLOB_ANGLES = np.array([0.0, 0.3, 2.4, 4.5, 1.0, 2.6, 4.1, 5.7, 0.2, 1.8, 3.4, 5.0])


def synthetic_projection(dims: Sequence[int], seed: int, *, noise_power: float = 1.0,
                         noise_to_signal: float = 10.0, support: float = 0.35) -> FieldSample:
    """Clean "projection image": a blob mixture confined to a central disk.

    Twelve isotropic Gaussians with fixed widths and amplitudes sit on a fixed
    centre constellation; ``seed`` permutes which blob goes to which centre and
    rotates the constellation, mimicking a change of viewing direction. A
    radial envelope ``(1 - (r / (support N))^2)^3`` forces the image to vanish
    beyond ``support * N`` from the centre. Amplitude is scaled so the mean
    squared value over that disk is ``noise_power / noise_to_signal``.
    """
    dims = tuple(int(n) for n in dims)
    N = min(dims)
    d = len(dims)
    rng = make_rng(seed)
    perm = rng.permutation(len(_BLOB_WIDTHS))
    theta = rng.uniform(0.0, 2 * math.pi)
    axes = np.meshgrid(*[np.arange(n, dtype=np.float64) - n / 2 for n in dims], indexing="ij")
    r = np.sqrt(sum(a * a for a in axes))
    img = np.zeros(dims)
    for i, j in enumerate(perm):
        rad, ang = _BLOB_RADII[j] * N, _BLOB_ANGLES[j] + theta
        centre = np.zeros(d)
        centre[0], centre[1 % d] = rad * math.cos(ang), rad * math.sin(ang)
        dist2 = sum((a - c) ** 2 for a, c in zip(axes, centre))
        img += _BLOB_AMPS[i] * np.exp(-dist2 / (2 * (_BLOB_WIDTHS[i] * N) ** 2))
    R0 = support * N
    inside = r < R0
    img *= np.where(inside, np.clip(1 - (r / R0) ** 2, 0, None) ** 3, 0.0)
    power = float((img[inside] ** 2).mean())
    img *= math.sqrt(noise_power / noise_to_signal / power)
    return FieldSample(img, {"seed": int(seed), "support": support, "noise_to_signal": noise_to_signal})
