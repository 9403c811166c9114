"""Acquisition domains on the integer grid Q_N = {0, ..., N-1}^d.

A :class:`DomainMask` is an immutable boolean occupancy grid. Sites inside the
domain are enumerated in row-major order; that enumeration is the canonical
coordinate system for every vector "on Omega" used elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "DomainMask",
    "CornerSubgrids",
    "digital_perimeter",
    "full_mask",
    "rectangle_mask",
    "disk_mask",
    "disk_complement_mask",
    "corner_subgrids_mask",
]


def digital_perimeter(mask) -> int:
    """Count occupancy transitions along every axis direction.

    The indicator is extended by zero outside the grid, so occupied sites on
    the border of Q_N contribute to the count.

    Parameters
    ----------
    mask : DomainMask or array_like of bool

    Returns
    -------
    int
        ``sum_q sum_j |1(q + e_j) - 1(q)|``.
    """
    occ = mask.occupancy if isinstance(mask, DomainMask) else np.asarray(mask, dtype=bool)
    if not occ.any():
        raise DomainError("digital perimeter of an empty mask is undefined")
    padded = np.pad(occ.astype(np.int8), 1)
    return int(sum(np.abs(np.diff(padded, axis=ax)).sum() for ax in range(occ.ndim)))


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Boolean occupancy grid with cached cardinality and digital perimeter.

    Attributes
    ----------
    occupancy : ndarray of bool, shape ``dims``
        Read-only; ``True`` marks a site of Omega.
    n_omega : int
        Number of occupied sites.
    n_boundary : int
        Digital perimeter.
    """

    occupancy: np.ndarray
    n_omega: int = field(init=False)
    n_boundary: int = field(init=False)

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=bool, copy=True)
        if occ.ndim < 1 or min(occ.shape) < 1:
            raise DomainError(f"mask needs positive extents, got shape {occ.shape}")
        n = int(occ.sum())
        if n == 0:
            raise DomainError("mask is empty")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "n_omega", n)
        object.__setattr__(self, "n_boundary", digital_perimeter(occ))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.occupancy.shape)

    @property
    def ndim(self) -> int:
        return self.occupancy.ndim

    @property
    def flat_index(self) -> np.ndarray:
        """Row-major flat indices of the occupied sites (canonical order)."""
        idx = np.flatnonzero(self.occupancy.ravel())
        idx.setflags(write=False)
        return idx

    def coords(self) -> np.ndarray:
        """Integer coordinates of occupied sites, shape ``(n_omega, d)``."""
        return np.argwhere(self.occupancy)

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Insert vectors on Omega into the full grid, zero elsewhere.

        ``values`` has shape ``(n_omega,)`` or ``(n_omega, k)``; the result has
        shape ``dims`` or ``(k, *dims)``.
        """
        values = np.asarray(values)
        if values.shape[0] != self.n_omega:
            raise DomainError(f"expected {self.n_omega} values, got {values.shape[0]}")
        if values.ndim == 1:
            out = np.zeros(self.occupancy.size, dtype=values.dtype)
            out[self.flat_index] = values
            return out.reshape(self.dims)
        out = np.zeros((values.shape[1], self.occupancy.size), dtype=values.dtype)
        out[:, self.flat_index] = values.T
        return out.reshape((values.shape[1],) + self.dims)

    def restrict(self, grid: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`embed`: read a full grid (or stack) on Omega."""
        grid = np.asarray(grid)
        if grid.shape == self.dims:
            return grid.ravel()[self.flat_index]
        flat = grid.reshape(grid.shape[0], -1)
        return flat[:, self.flat_index].T

    def indicator(self) -> np.ndarray:
        return self.occupancy.astype(np.float64)

    def digest(self) -> str:
        """Stable content hash, used as a cache key."""
        import hashlib

        h = hashlib.sha256(repr(self.dims).encode())
        h.update(np.packbits(self.occupancy.ravel()).tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, DomainMask):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.occupancy, other.occupancy))

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return f"DomainMask(dims={self.dims}, n_omega={self.n_omega}, n_boundary={self.n_boundary})"


def _center_distance(N: int, d: int) -> np.ndarray:
    axes = np.meshgrid(*[np.arange(N, dtype=np.float64) - N / 2] * d, indexing="ij")
    return np.sqrt(sum(a * a for a in axes))


def full_mask(dims: Sequence[int]) -> DomainMask:
    return DomainMask(np.ones(tuple(dims), dtype=bool))


def rectangle_mask(parent_dims: Sequence[int], offset: Sequence[int], rect_dims: Sequence[int]) -> DomainMask:
    """Axis-aligned box ``offset + [0, rect_dims)`` inside a parent grid."""
    parent_dims, offset, rect_dims = tuple(parent_dims), tuple(offset), tuple(rect_dims)
    if not (len(parent_dims) == len(offset) == len(rect_dims)):
        raise DomainError("dimension mismatch in rectangle specification")
    if any(o < 0 or r < 1 or o + r > p for p, o, r in zip(parent_dims, offset, rect_dims)):
        raise DomainError(f"rectangle {offset}+{rect_dims} does not fit in {parent_dims}")
    occ = np.zeros(parent_dims, dtype=bool)
    occ[tuple(slice(o, o + r) for o, r in zip(offset, rect_dims))] = True
    return DomainMask(occ)


def disk_complement_mask(N: int, R: float, d: int = 2) -> DomainMask:
    """Sites of Q_N strictly farther than ``R`` from ``(N/2, ..., N/2)``."""
    if N < 2 or R < 0 or R >= N:
        raise DomainError(f"need N >= 2 and 0 <= R < N, got N={N}, R={R}")
    occ = _center_distance(N, d) > R
    if not occ.any():
        raise DomainError(f"disk complement with R={R} in Q_{N}^{d} is empty")
    return DomainMask(occ)


def disk_mask(N: int, R: float, d: int = 2) -> DomainMask:
    """Sites of Q_N strictly closer than ``R`` to ``(N/2, ..., N/2)``."""
    if N < 2 or R < 0:
        raise DomainError(f"need N >= 2 and R >= 0, got N={N}, R={R}")
    occ = _center_distance(N, d) < R
    if not occ.any():
        raise DomainError(f"disk with R={R} in Q_{N}^{d} is empty")
    return DomainMask(occ)


@dataclass(frozen=True)
class CornerSubgrids:
    """Union of the four square subgrids inscribed in the corners of Q_N.

    ``rectangles`` lists ``(offset, dims)`` pairs, one per corner, in the order
    a = (0,0), (0,1), (1,0), (1,1).
    """

    mask: DomainMask
    rectangles: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    threshold: float


def corner_subgrids_mask(N: int, R: float) -> CornerSubgrids:
    """Corner squares ``{q : |q - N a|_inf < N/2 - R/sqrt(2)}`` for a in {0,1}^2.

    Each square's inner vertex lies at distance ``R`` from the grid centre, so
    the union is inscribed in the disk complement of radius ``R``.
    """
    t = N / 2 - R / math.sqrt(2)
    if N < 2 or t <= 0:
        raise DomainError(f"corner subgrids empty for N={N}, R={R}")
    # sites with q < t near the origin, and N - q < t near the far corner
    lo = int(math.ceil(t))  # count of q in {0, ..., N-1} with q < t
    hi = int(math.ceil(t)) - 1  # count of q with N - q < t, i.e. q > N - t
    lo, hi = min(lo, N), min(max(hi, 0), N)
    spans = {0: (0, lo), 1: (N - hi, hi)}
    if lo == 0 or hi == 0:
        raise DomainError(f"corner subgrids degenerate for N={N}, R={R} (threshold {t:.3f})")
    occ = np.zeros((N, N), dtype=bool)
    rects = []
    for a0 in (0, 1):
        for a1 in (0, 1):
            (o0, n0), (o1, n1) = spans[a0], spans[a1]
            occ[o0:o0 + n0, o1:o1 + n1] = True
            rects.append(((o0, o1), (n0, n1)))
    return CornerSubgrids(DomainMask(occ), tuple(rects), t)
