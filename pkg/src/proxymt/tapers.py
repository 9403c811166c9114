"""Taper families on a domain and their accumulated spectral window.

Three constructions are provided:

* :func:`proxy_tapers` -- block power iteration on the concentration operator,
  returning an orthonormal basis of (an approximation to) the span of its top
  ``K`` eigenvectors. Individual eigenvectors are ill-conditioned on plateau
  spectra; the span is not, and the multitaper estimate depends only on it.
* :func:`slepian_1d` -- classical discrete prolate spheroidal sequences from the
  commuting tridiagonal matrix.
* :func:`tensor_tapers` -- products of per-axis Slepian sequences on a box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .errors import ContractError, DomainError, NumericError
from .fields import SpectralGrid, frequency_lattice
from .grid import DomainMask, full_mask, rectangle_mask
from .operator import BandwidthSpec, ConcentrationOperator, dense_operator, make_bandwidth

__all__ = [
    "TaperSet",
    "RNG_ALGORITHM",
    "make_rng",
    "block_power_iterates",
    "proxy_tapers",
    "slepian_1d",
    "tensor_tapers",
    "default_tensor_counts",
    "accumulated_spectral_window",
    "spectral_window_l1_error",
    "in_band_energy",
    "rotate_tapers",
    "rayleigh_quotients",
]

RNG_ALGORITHM = "numpy Philox-4x64 counter-based bit generator; normals by Generator.standard_normal (ziggurat)"
_RANK_TOL = 1e-12
_FFT_BATCH = 64


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class TaperSet:
    """Orthonormal tapers stored as the columns of ``vectors`` (canonical site order)."""

    mask: DomainMask
    vectors: np.ndarray
    kind: str
    lambdas: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.mask.n_omega:
            raise ContractError(f"taper length {v.shape[0]} != n_omega {self.mask.n_omega}")
        self.vectors = v
        if self.lambdas is not None:
            self.lambdas = np.asarray(self.lambdas, dtype=np.float64)

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def orthonormality_defect(self) -> float:
        return float(np.linalg.norm(self.gram() - np.eye(self.K)))

    def grids(self) -> np.ndarray:
        """Tapers embedded in Q_N, shape ``(K, *dims)``."""
        return self.mask.embed(self.vectors)

    def projector(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def _qr_positive(A: np.ndarray) -> np.ndarray:
    Q, R = sla.qr(A, mode="economic", overwrite_a=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= _RANK_TOL * max(diag.max(), np.finfo(float).tiny):
        raise NumericError("block power step lost rank (tiny R diagonal); reseed or lower K")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q *= signs
    return Q


def block_power_iterates(op: ConcentrationOperator, L: np.ndarray, T: int) -> Iterator[np.ndarray]:
    """Yield the orthonormal iterate after each of ``T`` steps ``L <- qr(T L).Q``."""
    for _ in range(T):
        L = _qr_positive(op.apply(L))
        yield L


def proxy_tapers(mask: DomainMask, K: Optional[int] = None, T: int = 2, seed: int = 0, *,
                 W: Optional[float] = None, op: Optional[ConcentrationOperator] = None) -> TaperSet:
    """Proxy Slepian tapers by block power iteration.

    Parameters
    ----------
    mask : DomainMask
    K : int, optional
        Taper count. If only ``K`` is given, ``W = (K / n_omega)^(1/d)``.
    T : int
        Number of power steps.
    seed : int
        Seed of the Gaussian starting block.
    W : float, optional
        Bandwidth. If only ``W`` is given, ``K = ceil(n_omega W^d)``.
    op : ConcentrationOperator, optional
        Pre-built operator for ``(mask, W)``, reused across calls.

    Returns
    -------
    TaperSet
        ``kind="proxy"``; ``lambdas`` are the per-column Rayleigh quotients,
        unsorted.
    """
    bw = make_bandwidth(mask, K=K, W=W)
    if T < 1:
        raise ContractError("T must be at least 1")
    if op is None:
        op = ConcentrationOperator(mask, bw.W)
    L = make_rng(seed).standard_normal((mask.n_omega, bw.K))
    for L in block_power_iterates(op, L, T):
        pass
    lam = rayleigh_quotients(L, op)
    meta = {"K": bw.K, "W": bw.W, "T": int(T), "seed": int(seed), "rng": RNG_ALGORITHM}
    return TaperSet(mask, L, "proxy", lam, meta)


def rayleigh_quotients(vectors, op: ConcentrationOperator) -> np.ndarray:
    V = vectors.vectors if isinstance(vectors, TaperSet) else np.asarray(vectors)
    return np.einsum("ij,ij->j", V, op.apply(V))


def _sign_fix(v: np.ndarray) -> np.ndarray:
    # mirror-symmetric sequences tie in magnitude; take the lowest tied index
    a = np.abs(v)
    idx = np.argmax(a >= a.max(axis=0) * (1 - 1e-9), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


def _slepian_vectors(N: int, W: float, K: int) -> np.ndarray:
    n = np.arange(N, dtype=np.float64)
    diag = ((N - 1) / 2.0 - n) ** 2 * math.cos(math.pi * W)
    off = n[1:] * (N - n[1:]) / 2.0
    try:
        _, vecs = sla.eigh_tridiagonal(diag, off, select="i", select_range=(N - K, N - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"tridiagonal eigensolver failed for N={N}, W={W}") from exc
    return _sign_fix(vecs[:, ::-1])


def _lambdas_1d(N: int, W: float, vecs: np.ndarray) -> np.ndarray:
    mask = full_mask((N,))
    if N <= 2000:
        Tm = dense_operator(mask, W)
        return np.einsum("ij,ij->j", vecs, Tm @ vecs)
    return rayleigh_quotients(vecs, ConcentrationOperator(mask, W))


def slepian_1d(N: int, W: float, K: int) -> TaperSet:
    """First ``K`` Slepian sequences of length ``N`` for the band ``[-W/2, W/2]``.

    Eigenvectors of the tridiagonal matrix with diagonal
    ``((N-1)/2 - n)^2 cos(pi W)`` and off-diagonal ``n (N - n) / 2``, which
    commutes with the concentration operator on ``{0, ..., N-1}``. The
    largest tridiagonal eigenvalues correspond to the best concentrated
    sequences. Signs make the largest-magnitude entry positive (the first
    one, when a mirror pair ties).
    """
    if not 1 <= K <= N:
        raise DomainError(f"need 1 <= K <= N, got K={K}, N={N}")
    if not 0 < W <= 0.5:
        raise DomainError(f"bandwidth W={W} outside (0, 1/2]")
    vecs = _slepian_vectors(N, W, K)
    lam = _lambdas_1d(N, W, vecs)
    return TaperSet(full_mask((N,)), vecs, "slepian1d", lam, {"K": K, "W": float(W)})


def default_tensor_counts(rect_dims: Sequence[int], W: float) -> tuple[int, ...]:
    """Per-axis taper counts ``ceil(N_j W)``; their product is the default tensor K."""
    return tuple(min(n, max(1, math.ceil(n * W - 1e-9))) for n in rect_dims)


def tensor_tapers(rect_dims: Sequence[int], W: float, K: Optional[int] = None, *,
                  parent_dims: Optional[Sequence[int]] = None,
                  offset: Optional[Sequence[int]] = None) -> TaperSet:
    """Top-``K`` products of per-axis Slepian sequences on a box.

    Candidates are ranked by the product of per-axis concentrations; ties
    fall back to lexicographic order of the index tuple. Without ``K`` the
    full grid of ``prod_j ceil(N_j W)`` products is returned, which keeps the
    selected space separated from the rest of the spectrum.

    The box sits at ``offset`` inside ``parent_dims`` (default: the box
    itself).
    """
    rect_dims = tuple(int(n) for n in rect_dims)
    parent_dims = tuple(parent_dims) if parent_dims is not None else rect_dims
    offset = tuple(offset) if offset is not None else (0,) * len(rect_dims)
    total = int(np.prod(rect_dims))
    if K is None:
        counts = default_tensor_counts(rect_dims, W)
        K = int(np.prod(counts))
    if not 1 <= K <= total:
        raise DomainError(f"need 1 <= K <= {total}, got K={K}")
    axes = [slepian_1d(n, W, min(n, K)) for n in rect_dims]
    cand = list(itertools.product(*[range(a.K) for a in axes]))
    prods = np.array([np.prod([axes[j].lambdas[i] for j, i in enumerate(c)]) for c in cand])
    # lexsort: last key primary; candidates are already in lexicographic order
    order = np.lexsort((np.arange(len(cand)), -prods))[:K]
    chosen = [cand[i] for i in order]
    vecs = np.empty((total, K))
    for col, c in enumerate(chosen):
        t = np.ones(())
        for j, i in enumerate(c):
            t = np.multiply.outer(t, axes[j].vectors[:, i])
        vecs[:, col] = t.ravel()
    mask = rectangle_mask(parent_dims, offset, rect_dims)
    # rectangle sites in row-major parent order coincide with row-major box order
    meta = {"K": K, "W": float(W), "indices": [list(map(int, c)) for c in chosen],
            "rect_dims": list(rect_dims), "offset": list(offset)}
    return TaperSet(mask, vecs, "tensor", prods[order], meta)


def _window_grid(tapers: TaperSet, freq_dims: Sequence[int]) -> np.ndarray:
    dims = tapers.mask.dims
    freq_dims = tuple(int(f) for f in freq_dims)
    if len(freq_dims) != len(dims) or any(f < n for f, n in zip(freq_dims, dims)):
        raise ContractError(f"freq_dims {freq_dims} must cover mask dims {dims}")
    axes = tuple(range(1, len(dims) + 1))
    acc = np.zeros(freq_dims)
    for s in range(0, tapers.K, _FFT_BATCH):
        g = tapers.mask.embed(tapers.vectors[:, s:s + _FFT_BATCH])
        F = sfft.fftn(g, s=freq_dims, axes=axes)
        acc += (F.real ** 2 + F.imag ** 2).sum(axis=0)
    return acc


def accumulated_spectral_window(tapers: TaperSet, freq_dims: Optional[Sequence[int]] = None) -> SpectralGrid:
    """``rho(xi) = K^-1 sum_k |M_k(xi)|^2`` on the centred lattice.

    ``freq_dims`` defaults to the mask dims; larger values zero-pad.
    """
    freq_dims = tuple(freq_dims) if freq_dims is not None else tapers.mask.dims
    rho = np.fft.fftshift(_window_grid(tapers, freq_dims) / tapers.K)
    return SpectralGrid(rho, {"kind": "spectral_window", "K": tapers.K, "taper_kind": tapers.kind})


def _box_indicator(freq_dims: Sequence[int], W: float) -> np.ndarray:
    box = np.ones(tuple(freq_dims), dtype=bool)
    for x in frequency_lattice(freq_dims):
        box &= (x >= -W / 2) & (x < W / 2)
    return box


def in_band_energy(tapers: TaperSet, W: float, freq_dims: Optional[Sequence[int]] = None) -> np.ndarray:
    """Lattice estimate of ``int_{[-W/2, W/2]^d} |M_k|^2`` for every taper."""
    freq_dims = tuple(freq_dims) if freq_dims is not None else tapers.mask.dims
    box = np.fft.ifftshift(_box_indicator(freq_dims, W))
    axes = tuple(range(1, tapers.mask.ndim + 1))
    cell = 1.0 / float(np.prod(freq_dims))
    out = np.empty(tapers.K)
    for s in range(0, tapers.K, _FFT_BATCH):
        g = tapers.mask.embed(tapers.vectors[:, s:s + _FFT_BATCH])
        F = sfft.fftn(g, s=freq_dims, axes=axes)
        p = F.real ** 2 + F.imag ** 2
        out[s:s + p.shape[0]] = p[:, box].sum(axis=1) * cell
    return out


def spectral_window_l1_error(tapers: TaperSet, bw: BandwidthSpec | float,
                             freq_dims: Optional[Sequence[int]] = None, method: str = "lattice") -> float:
    """``|| rho - W^-d 1_[-W/2, W/2]^d ||_L1`` over the frequency torus.

    ``method="lattice"`` takes the Riemann sum on the ``freq_dims`` lattice with
    the box sampled half-open at the lattice points. ``method="exact"`` uses
    that ``rho <= n_omega / K <= W^-d`` whenever ``K >= n_omega W^d``: the
    integrand then has a fixed sign inside and outside the box, and the norm
    collapses to ``2 (1 - mean_k lambda_k)`` with ``lambda_k`` the Rayleigh
    quotients of the tapers, free of any discretisation error.
    """
    W = bw.W if isinstance(bw, BandwidthSpec) else float(bw)
    d = tapers.mask.ndim
    if method == "exact":
        if tapers.K < tapers.mask.n_omega * W ** d * (1 - 1e-12):
            raise ContractError("exact window error needs K >= n_omega W^d")
        lam = rayleigh_quotients(tapers, ConcentrationOperator(tapers.mask, W))
        return float(2.0 * (1.0 - lam.mean()))
    if method != "lattice":
        raise ContractError(f"unknown method {method!r}")
    rho = accumulated_spectral_window(tapers, freq_dims)
    target = _box_indicator(rho.freq_dims, W) / W ** d
    return float(np.abs(rho.values - target).mean())


def rotate_tapers(tapers: TaperSet, ortho: np.ndarray, tol: float = 1e-10) -> TaperSet:
    """Replace the tapers by ``g~_k = sum_k' U[k, k'] g_k'``; the span is unchanged."""
    U = np.asarray(ortho, dtype=np.float64)
    if U.shape != (tapers.K, tapers.K):
        raise ContractError(f"rotation must be {tapers.K}x{tapers.K}, got {U.shape}")
    if np.linalg.norm(U.T @ U - np.eye(tapers.K)) > tol:
        raise ContractError("rotation matrix is not orthogonal")
    meta = dict(tapers.meta, rotated_from=tapers.kind)
    return replace(tapers, vectors=tapers.vectors @ U.T, kind="custom", lambdas=None, meta=meta)
