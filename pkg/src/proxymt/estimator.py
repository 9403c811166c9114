"""Spectral density estimators on a domain.

All estimators return a :class:`~proxymt.fields.SpectralGrid` on the centred
lattice ``xi = k / freq_dims - 1/2``. Periodograms are squared moduli of a
zero-padded DFT of the taper-weighted field.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ContractError, DomainError
from .fields import FieldSample, SpectralGrid
from .grid import CornerSubgrids, DomainMask
from .tapers import TaperSet, tensor_tapers

__all__ = [
    "tapered_periodogram",
    "multitaper_estimate",
    "mper_estimate",
    "mask_taper",
    "cmt_estimate",
    "corner_tapers",
    "default_rect_count",
]

_BATCH = 64


def _values(field) -> np.ndarray:
    return field.values if isinstance(field, FieldSample) else np.asarray(field, dtype=np.float64)


def _freq_dims(freq_dims, dims) -> tuple[int, ...]:
    fd = tuple(int(f) for f in freq_dims) if freq_dims is not None else tuple(dims)
    if len(fd) != len(dims) or any(f < n for f, n in zip(fd, dims)):
        raise ContractError(f"freq_dims {fd} must cover field dims {tuple(dims)}")
    return fd


def _periodogram_sum(x: np.ndarray, mask: DomainMask, vectors: np.ndarray, fd) -> np.ndarray:
    """Sum over columns of ``|DFT(m_k x)|^2``, in DFT bin order."""
    xo = mask.restrict(x)
    axes = tuple(range(1, mask.ndim + 1))
    acc = np.zeros(fd)
    for s in range(0, vectors.shape[1], _BATCH):
        chunk = vectors[:, s:s + _BATCH] * xo[:, None]
        F = sfft.fftn(mask.embed(chunk), s=fd, axes=axes)
        acc += (F.real ** 2 + F.imag ** 2).sum(axis=0)
    return acc


def tapered_periodogram(field, mask: DomainMask, taper: np.ndarray,
                        freq_dims: Optional[Sequence[int]] = None, tol: float = 1e-8) -> SpectralGrid:
    """``|sum_{q in Omega} m[q] X[q] e^{-2 pi i q xi}|^2`` for one unit-norm taper.

    ``taper`` is a vector in canonical site order, or a full grid that must
    vanish off ``mask``.
    """
    x = _values(field)
    if x.shape != mask.dims:
        raise ContractError(f"field dims {x.shape} != mask dims {mask.dims}")
    m = np.asarray(taper, dtype=np.float64)
    if m.shape == mask.dims:
        if np.any(m[~mask.occupancy] != 0):
            raise ContractError("taper is not supported on the mask")
        m = mask.restrict(m)
    if m.shape != (mask.n_omega,):
        raise ContractError(f"taper has shape {m.shape}, expected ({mask.n_omega},)")
    if abs(np.linalg.norm(m) - 1.0) > tol:
        raise ContractError(f"taper norm {np.linalg.norm(m):.12g} is not 1")
    fd = _freq_dims(freq_dims, mask.dims)
    vals = np.fft.fftshift(_periodogram_sum(x, mask, m[:, None], fd))
    return SpectralGrid(vals, {"estimator": "tapered_periodogram", "K": 1})


def multitaper_estimate(field, tapers: TaperSet, freq_dims: Optional[Sequence[int]] = None) -> SpectralGrid:
    """Average of the ``K`` tapered periodograms."""
    x = _values(field)
    if x.shape != tapers.mask.dims:
        raise ContractError(f"field dims {x.shape} != mask dims {tapers.mask.dims}")
    fd = _freq_dims(freq_dims, tapers.mask.dims)
    vals = np.fft.fftshift(_periodogram_sum(x, tapers.mask, tapers.vectors, fd)) / tapers.K
    meta = {"estimator": "multitaper", "K": tapers.K, "W": tapers.meta.get("W"), "taper_kind": tapers.kind}
    for key in ("T", "seed"):
        if key in tapers.meta:
            meta[key] = tapers.meta[key]
    return SpectralGrid(vals, meta)


def mask_taper(mask: DomainMask) -> np.ndarray:
    """Normalised indicator ``n_omega^{-1/2} 1_Omega`` in canonical order."""
    return np.full(mask.n_omega, 1.0 / np.sqrt(mask.n_omega))


def mper_estimate(field, mask: DomainMask, freq_dims: Optional[Sequence[int]] = None) -> SpectralGrid:
    """Masked periodogram: the single-taper estimate with :func:`mask_taper`."""
    est = tapered_periodogram(field, mask, mask_taper(mask), freq_dims)
    est.meta["estimator"] = "mper"
    return est


def default_rect_count(rect_dims: Sequence[int], W: float) -> int:
    """``ceil(n_rect W^d)``, capped at the rectangle size."""
    n = int(np.prod(rect_dims))
    return int(min(n, max(1, np.ceil(n * W ** len(rect_dims) - 1e-9))))


def cmt_estimate(field, corners: CornerSubgrids, W: float, K_per_rect: Optional[int] = None,
                 freq_dims: Optional[Sequence[int]] = None, *, rect_tapers: Optional[list] = None) -> SpectralGrid:
    """Tensor multitaper estimate on each corner rectangle, averaged with equal weights.

    ``rect_tapers`` may pass precomputed per-rectangle :class:`TaperSet`
    objects (as returned by :func:`corner_tapers`) to skip the eigensolves.
    """
    x = _values(field)
    if rect_tapers is None:
        rect_tapers = corner_tapers(corners, W, K_per_rect)
    if len(rect_tapers) == 0:
        raise DomainError("no corner rectangles")
    fd = _freq_dims(freq_dims, x.shape)
    acc = np.zeros(fd)
    for tap in rect_tapers:
        acc += multitaper_estimate(x, tap, fd).values
    acc /= len(rect_tapers)
    Ks = [t.K for t in rect_tapers]
    return SpectralGrid(acc, {"estimator": "cmt", "K_per_rect": Ks, "W": float(W)})


def corner_tapers(corners: CornerSubgrids, W: float, K_per_rect: Optional[int] = None) -> list[TaperSet]:
    parent = corners.mask.dims
    out = []
    for offset, dims in corners.rectangles:
        if min(dims) < 1:
            raise DomainError(f"degenerate corner rectangle {dims}")
        K = K_per_rect if K_per_rect is not None else default_rect_count(dims, W)
        K = min(K, int(np.prod(dims)))
        out.append(tensor_tapers(dims, W, K, parent_dims=parent, offset=offset))
    return out

