"""The spatio-spectral concentration operator restricted to a domain.

``T[q, q'] = 1_Omega(q) h[q - q'] 1_Omega(q')`` with the separable sinc kernel
``h[q] = prod_j sin(pi W q_j) / (pi q_j)``. Applying ``T`` means inserting a
vector into the grid, convolving with ``h`` and reading the result back on
Omega. The convolution is linear, so it is realised as a circular one on a grid
padded to at least ``2 N_j - 1`` per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ContractError, DomainError, ResourceError
from .grid import DomainMask

__all__ = [
    "BandwidthSpec",
    "make_bandwidth",
    "sinc_kernel_1d",
    "sinc_kernel",
    "ConcentrationOperator",
    "apply_concentration",
    "dense_operator",
    "trace_diagnostics",
    "DENSE_CAP",
]

DENSE_CAP = 20_000
_BATCH = 32


@dataclass(frozen=True)
class BandwidthSpec:
    """Taper count ``K`` and bandwidth ``W`` tied to a domain size.

    ``W`` is the full side length of the target frequency box
    ``[-W/2, W/2]^d``.
    """

    K: int
    W: float
    n_omega: int
    d: int

    @property
    def shannon_number(self) -> float:
        return self.n_omega * self.W ** self.d


def make_bandwidth(mask: DomainMask | int, *, K: Optional[int] = None, W: Optional[float] = None,
                   d: Optional[int] = None) -> BandwidthSpec:
    """Complete a (K, W) pair from one of its members.

    With ``K`` given, ``W = (K / n_omega)^(1/d)``; with ``W`` given,
    ``K = ceil(n_omega W^d)``. Passing both keeps both verbatim, which is how
    callers choose a taper count off the ceiling rule.

    ``mask`` may be a :class:`DomainMask` or a bare site count (then ``d`` is
    required).
    """
    if isinstance(mask, DomainMask):
        n, d = mask.n_omega, mask.ndim
    else:
        n = int(mask)
        if d is None:
            raise ContractError("d is required when mask is a site count")
    if K is None and W is None:
        raise ContractError("give K or W")
    if K is not None:
        K = int(K)
        if K < 1 or K > n:
            raise DomainError(f"K={K} outside [1, n_omega={n}]")
    if W is None:
        W = (K / n) ** (1.0 / d)
    W = float(W)
    if not 0 < W <= 0.5:
        raise DomainError(f"bandwidth W={W:.6g} outside (0, 1/2]; the sinc band would alias")
    if K is None:
        # guard against W**d * n landing a hair above an integer
        K = int(math.ceil(n * W ** d - 1e-9))
        K = min(max(K, 1), n)
    return BandwidthSpec(K=K, W=W, n_omega=n, d=d)


def sinc_kernel_1d(N: int, W: float) -> np.ndarray:
    """``r[k] = sin(pi W k) / (pi k)`` for lags ``k = -(N-1), ..., N-1``."""
    k = np.arange(-(N - 1), N, dtype=np.float64)
    return W * np.sinc(W * k)


def sinc_kernel(dims: Sequence[int], W: float) -> np.ndarray:
    """Full separable kernel on the lag box, shape ``(2 N_j - 1, ...)``.

    Entry ``[N_1 - 1 + k_1, ...]`` holds ``h[k]``.
    """
    h = np.ones((), dtype=np.float64)
    for n in dims:
        h = np.multiply.outer(h, sinc_kernel_1d(n, W))
    return h


def _wrapped_axis_kernel(n: int, p: int, W: float, power: int) -> np.ndarray:
    r = np.zeros(p)
    vals = sinc_kernel_1d(n, W) ** power
    r[:n] = vals[n - 1:]
    if n > 1:
        r[p - n + 1:] = vals[:n - 1]
    return r


class ConcentrationOperator:
    """FFT plan for ``T`` on a fixed mask and bandwidth.

    The kernel transform is computed once; :meth:`apply` then costs one
    forward and one inverse real FFT of the padded grid per column.

    Parameters
    ----------
    mask : DomainMask
    W : float
        Bandwidth (full box side).
    power : int
        Use ``|h|^power`` as kernel; ``power=2`` gives the correlation needed
        for ``trace(T^2)``.
    workers : int, optional
        Passed to :mod:`scipy.fft`.
    """

    def __init__(self, mask: DomainMask, W: float, *, power: int = 1, workers: Optional[int] = None):
        self.mask = mask
        self.W = float(W)
        self.workers = workers
        dims = mask.dims
        self.padded = tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in dims)
        self._axes = tuple(range(1, len(dims) + 1))
        kern = np.ones((), dtype=np.float64)
        for n, p in zip(dims, self.padded):
            kern = np.multiply.outer(kern, _wrapped_axis_kernel(n, p, self.W, power))
        self._kernel_hat = sfft.rfftn(kern, workers=workers)
        self._kernel_hat.setflags(write=False)
        self._crop = (slice(None),) + tuple(slice(0, n) for n in dims)

    @property
    def n(self) -> int:
        return self.mask.n_omega

    def convolve_grids(self, grids: np.ndarray) -> np.ndarray:
        """Linear convolution of a stack ``(k, *dims)`` with the kernel, cropped to ``dims``."""
        f = sfft.rfftn(grids, s=self.padded, axes=self._axes, workers=self.workers)
        f *= self._kernel_hat
        out = sfft.irfftn(f, s=self.padded, axes=self._axes, workers=self.workers)
        return out[self._crop]

    def apply(self, block: np.ndarray, batch: int = _BATCH) -> np.ndarray:
        """Return ``T @ block`` for ``block`` of shape ``(n_omega,)`` or ``(n_omega, k)``."""
        block = np.asarray(block, dtype=np.float64)
        single = block.ndim == 1
        if single:
            block = block[:, None]
        if block.ndim != 2 or block.shape[0] != self.n:
            raise ContractError(f"expected vectors of length {self.n}, got shape {block.shape}")
        out = np.empty_like(block)
        for s in range(0, block.shape[1], batch):
            chunk = block[:, s:s + batch]
            conv = self.convolve_grids(self.mask.embed(chunk))
            out[:, s:s + chunk.shape[1]] = self.mask.restrict(conv)
        return out[:, 0] if single else out

    __matmul__ = apply


def apply_concentration(mask: DomainMask, bw: BandwidthSpec | float, block) -> np.ndarray:
    """One-shot ``T @ block``; build a :class:`ConcentrationOperator` to reuse the plan."""
    W = bw.W if isinstance(bw, BandwidthSpec) else float(bw)
    return ConcentrationOperator(mask, W).apply(block)


def dense_operator(mask: DomainMask, bw: BandwidthSpec | float, cap: int = DENSE_CAP) -> np.ndarray:
    """Materialise ``T`` as an ``(n_omega, n_omega)`` symmetric matrix."""
    W = bw.W if isinstance(bw, BandwidthSpec) else float(bw)
    n = mask.n_omega
    if n > cap:
        raise ResourceError(f"dense operator with n_omega={n} exceeds cap {cap}")
    c = mask.coords()
    T = np.ones((n, n))
    for j in range(mask.ndim):
        diff = c[:, j][:, None] - c[:, j][None, :]
        T *= W * np.sinc(W * diff)
    return T


def trace_diagnostics(mask: DomainMask, bw: BandwidthSpec | float) -> dict:
    """``trace T``, ``trace T^2`` and their difference ``sum_k lambda_k (1 - lambda_k)``.

    ``trace T^2 = sum_{q,q' in Omega} |h[q - q']|^2`` is evaluated as the
    correlation of the indicator with ``|h|^2`` by FFT, never through the
    dense matrix.
    """
    W = bw.W if isinstance(bw, BandwidthSpec) else float(bw)
    d = mask.ndim
    trace_T = W ** d * mask.n_omega
    sq = ConcentrationOperator(mask, W, power=2)
    ind = mask.indicator()[None]
    trace_T2 = float((sq.convolve_grids(ind)[0] * ind[0]).sum())
    return {"trace_T": trace_T, "trace_T2": trace_T2, "defect": trace_T - trace_T2}
