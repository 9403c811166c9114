"""Value types for fields on Q_N and for functions sampled on the frequency torus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError

__all__ = ["SpectralGrid", "FieldSample", "frequency_axes", "frequency_lattice"]


def frequency_axes(freq_dims: Sequence[int]) -> list[np.ndarray]:
    """Per-axis lattice ``xi_j = k / n_j - 1/2``, ``k = 0, ..., n_j - 1``."""
    return [np.arange(n) / n - 0.5 for n in freq_dims]


def frequency_lattice(freq_dims: Sequence[int]) -> list[np.ndarray]:
    return np.meshgrid(*frequency_axes(freq_dims), indexing="ij")


@dataclass
class SpectralGrid:
    """Samples of a 1-periodic function on the centred frequency lattice.

    ``values[k]`` is the value at ``xi = k / freq_dims - 1/2``, i.e. the
    ``fftshift`` of DFT bin order. ``meta`` carries estimator kind, K, W and
    seed lineage for serialisation.
    """

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def freq_dims(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def cell_volume(self) -> float:
        return 1.0 / float(np.prod(self.freq_dims))

    def integral(self) -> float:
        """Riemann sum over the torus."""
        return float(self.values.sum() * self.cell_volume)

    def reflected(self) -> np.ndarray:
        """Values at ``-xi``: index ``k`` maps to ``(-k) mod n`` in DFT order."""
        v = np.fft.ifftshift(self.values)
        for ax in range(v.ndim):
            v = np.roll(np.flip(v, axis=ax), 1, axis=ax)
        return np.fft.fftshift(v)

    def unshifted(self) -> np.ndarray:
        """Values in DFT bin order (frequency zero first)."""
        return np.fft.ifftshift(self.values)

    def check_nonnegative(self, tol: float = 1e-12) -> None:
        if self.values.min() < -tol:
            raise ContractError(f"spectral values dip to {self.values.min():.3e} below zero")


@dataclass
class FieldSample:
    """One real realisation on Q_N."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ContractError("field contains non-finite values")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.values.shape)
