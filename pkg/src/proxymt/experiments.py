"""Reproduction harnesses: sweeps over domain size, estimator comparisons, slope fits.

Every harness is a pure function of its arguments. Random fields are drawn
with seeds derived from ``(seed, stream, realisation)`` so the same images are
reused at every radius of a sweep (common random numbers), which keeps fitted
slopes from picking up independent Monte-Carlo noise per point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ContractError, DomainError
from .estimator import corner_tapers, cmt_estimate, default_rect_count, mper_estimate, multitaper_estimate
from .fields import SpectralGrid
from .grid import DomainMask, corner_subgrids_mask, disk_complement_mask, disk_mask, rectangle_mask
from .operator import ConcentrationOperator, make_bandwidth
from .simulate import cryo_noise_density, sample_field, synthetic_projection, triple_disk_density
from .tapers import TaperSet, proxy_tapers, spectral_window_l1_error, tensor_tapers

__all__ = [
    "ExperimentCurve",
    "TaperCache",
    "derive_seed",
    "fit_loglog_slope",
    "specwin_bound_rhs",
    "mse_bound_rhs",
    "c2_norm",
    "fit_bound_constant",
    "mse_statistics",
    "run_specwin_sweep",
    "run_mse_sweep",
    "run_subgrid_comparison",
    "run_cryoem_synthetic",
]

# stream identifiers for derive_seed
_FIELD_STREAM = 1
_NOISE_STREAM = 2
_SIGNAL_STREAM = 3


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit seed for the sub-stream ``path`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ExperimentCurve:
    """Rows of a sweep: one abscissa, nonnegative statistics, auxiliary columns.

    ``rows`` are dicts holding every name in ``columns``. ``statistics`` lists
    the columns that are measured quantities (finite and nonnegative);
    the remaining columns are bookkeeping such as ``n_omega`` or ``K``.
    """

    name: str
    abscissa: str
    statistics: tuple
    auxiliary: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple:
        return (self.abscissa,) + tuple(self.statistics) + tuple(self.auxiliary)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ContractError(f"curve {self.name!r} has no column {name!r}")
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def validate(self) -> "ExperimentCurve":
        x = self.column(self.abscissa)
        if np.any(np.diff(x) <= 0):
            raise ContractError(f"abscissa {self.abscissa!r} is not strictly increasing")
        for s in self.statistics:
            v = self.column(s)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ContractError(f"statistic {s!r} has non-finite or negative entries")
        return self

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, list(self.columns), ([r[c] for c in self.columns] for r in self.rows))


class TaperCache:
    """Proxy taper banks on disk, keyed by (mask digest, K, T, seed)."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def _path(self, mask: DomainMask, K: int, T: int, seed: int) -> Path:
        return self.directory / f"{mask.digest()[:16]}_K{K}_T{T}_s{seed}"

    def proxy(self, mask: DomainMask, K: int, T: int, seed: int, W: float) -> TaperSet:
        from .io import load_tapers, save_tapers

        p = self._path(mask, K, T, seed)
        if (p / "tapers.json").exists():
            tap = load_tapers(p)
            if tap.mask == mask and abs(tap.meta.get("W", -1) - W) <= 1e-15 * max(1.0, W):
                return tap
        tap = proxy_tapers(mask, K=K, T=T, seed=seed, W=W)
        save_tapers(p, tap)
        return tap


def _proxy(mask, K, T, seed, W, cache: Optional[TaperCache]) -> TaperSet:
    if cache is not None:
        return cache.proxy(mask, K, T, seed, W)
    return proxy_tapers(mask, K=K, T=T, seed=seed, W=W)


def fit_loglog_slope(curve, column: Optional[str] = None, y=None) -> dict:
    """Ordinary least squares slope of ``log y`` against ``log x``.

    Call as ``fit_loglog_slope(curve, "stat")`` or ``fit_loglog_slope(x, y=y)``.
    """
    if isinstance(curve, ExperimentCurve):
        x = curve.column(curve.abscissa)
        y = curve.column(column if column is not None else curve.statistics[0])
    else:
        x = np.asarray(curve, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ContractError("slope fit needs at least three (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DomainError("log-log fit needs positive finite values")
    fit = stats.linregress(np.log(x), np.log(y))
    return {"slope": float(fit.slope), "stderr": float(fit.stderr), "intercept": float(fit.intercept)}


def specwin_bound_rhs(n_omega: int, n_boundary: int, W: float, K: int, d: int) -> float:
    """``(n_boundary W^(d-1) / K) (1 + log(n_omega / n_boundary))``."""
    return n_boundary * W ** (d - 1) / K * (1.0 + math.log(n_omega / n_boundary))


def mse_bound_rhs(n_omega: int, n_boundary: int, K: int, d: int, c2: float = 1.0) -> float:
    """Bracketed rate of the mean squared error bound, times ``c2^2``."""
    log_term = 1.0 + math.log(n_omega / n_boundary)
    smooth = K ** (4.0 / d) / n_omega ** (4.0 / d)
    leak = n_boundary ** 2 * log_term ** 2 / (n_omega ** (2.0 - 2.0 / d) * K ** (2.0 / d))
    return (smooth + leak + 1.0 / K) * c2 ** 2


def c2_norm(S: SpectralGrid) -> float:
    """``max |S| + max |grad S| + max |Hessian S|`` by periodic central differences."""
    v = S.values
    h = [1.0 / n for n in S.freq_dims]
    total = float(np.abs(v).max())
    grads = [(np.roll(v, -1, ax) - np.roll(v, 1, ax)) / (2 * h[ax]) for ax in range(v.ndim)]
    total += float(np.sqrt(sum(g * g for g in grads)).max())
    hess = 0.0
    for a in range(v.ndim):
        for b in range(v.ndim):
            if a == b:
                dab = (np.roll(v, -1, a) - 2 * v + np.roll(v, 1, a)) / h[a] ** 2
            else:
                dab = (np.roll(grads[a], -1, b) - np.roll(grads[a], 1, b)) / (2 * h[b])
            hess = max(hess, float(np.abs(dab).max()))
    return total + hess


def fit_bound_constant(measured, rhs) -> dict:
    """Smallest ``C`` with ``measured <= C rhs`` on every row, and the ratio spread."""
    r = np.asarray(measured, dtype=np.float64) / np.asarray(rhs, dtype=np.float64)
    return {"C": float(r.max()), "spread": float(r.max() / r.min()), "ratios": r}


def mse_statistics(estimates: np.ndarray, truth: np.ndarray) -> dict:
    """Per-frequency sample MSE, squared bias and (population) variance.

    ``estimates`` stacks realisations on axis 0. With the population variance
    ``bias2 + variance == mse`` holds up to rounding.
    """
    E = np.asarray(estimates, dtype=np.float64)
    err = E - truth
    mean = err.mean(axis=0)
    return {
        "mse": (err ** 2).mean(axis=0),
        "bias2": mean ** 2,
        "variance": ((err - mean) ** 2).mean(axis=0),
    }


def _aggregate(v: np.ndarray, how: str) -> float:
    if how == "max":
        return float(v.max())
    if how == "mean":
        return float(v.mean())
    raise ContractError(f"unknown aggregation {how!r}")


def _check_radii(radii) -> list:
    r = [float(x) for x in radii]
    if not r or any(b <= a for a, b in zip(r, r[1:])):
        raise ContractError("radii must be a nonempty strictly increasing list")
    return r


def run_specwin_sweep(N: int, W: float, radii: Sequence[float], T: int = 2, seed: int = 0, *,
                      d: int = 2, lattice: bool = True, cache: Optional[TaperCache] = None) -> ExperimentCurve:
    """Spectral window error of proxy tapers on disks of growing radius.

    ``l1_window_error`` is the exact L1 distance ``2 (1 - mean lambda)``;
    ``l1_window_error_lattice`` is the Riemann sum on the ``N^d`` lattice
    (skipped when ``lattice`` is false), which carries a discretisation floor.
    """
    radii = _check_radii(radii)
    curve = ExperimentCurve(
        "specwin", "R",
        ("l1_window_error", "l1_window_error_lattice", "bound_rhs", "ratio"),
        ("n_omega", "n_boundary", "W", "K", "T", "seed"),
        meta={"N": N, "W": W, "T": T, "seed": seed, "d": d},
    )
    for R in radii:
        mask = disk_mask(N, R, d)
        bw = make_bandwidth(mask, W=W)
        tap = _proxy(mask, bw.K, T, seed, bw.W, cache)
        err = spectral_window_l1_error(tap, bw, method="exact")
        lat = spectral_window_l1_error(tap, bw, method="lattice") if lattice else float("nan")
        rhs = specwin_bound_rhs(mask.n_omega, mask.n_boundary, bw.W, bw.K, d)
        curve.rows.append({
            "R": R, "l1_window_error": err, "l1_window_error_lattice": lat if lattice else 0.0,
            "bound_rhs": rhs, "ratio": err / rhs, "n_omega": mask.n_omega,
            "n_boundary": mask.n_boundary, "W": bw.W, "K": bw.K, "T": T, "seed": seed,
        })
    return curve.validate()


def run_mse_sweep(N: int, radii: Sequence[float], M: int, seed: int = 0, *, T: int = 2,
                  aggregate: str = "max", cache: Optional[TaperCache] = None) -> ExperimentCurve:
    """Monte-Carlo MSE of proxy multitaper estimates with ``W = n_omega^(-1/6)``.

    The target is the triple-disk density on the ``N x N`` lattice. Each row
    reports the maximum over frequency (or mean, via ``aggregate``) of the
    sample MSE, squared bias and variance, and the MSE divided by
    ``log^2 n_omega``. ``bound_rhs`` is the bracketed MSE rate times
    ``||S||_C2^2``.
    """
    if M < 8:
        raise ContractError("M must be at least 8")
    radii = _check_radii(radii)
    d = 2
    S = triple_disk_density((N,) * d)
    c2 = c2_norm(S)
    fields = [sample_field(S, (N,) * d, derive_seed(seed, _FIELD_STREAM, nu)) for nu in range(M)]
    curve = ExperimentCurve(
        "mse", "R",
        ("max_mse", "max_bias2", "max_variance", "mse_over_log2", "bound_rhs"),
        ("n_omega", "n_boundary", "W", "K", "M", "T", "seed"),
        meta={"N": N, "M": M, "T": T, "seed": seed, "aggregate": aggregate, "c2_norm": c2},
    )
    for R in radii:
        mask = disk_mask(N, R, d)
        W = mask.n_omega ** (-1.0 / 6.0)
        bw = make_bandwidth(mask, W=W)
        tap = _proxy(mask, bw.K, T, seed, bw.W, cache)
        est = np.stack([multitaper_estimate(f, tap).values for f in fields])
        st = mse_statistics(est, S.values)
        mse = _aggregate(st["mse"], aggregate)
        curve.rows.append({
            "R": R, "max_mse": mse, "max_bias2": _aggregate(st["bias2"], aggregate),
            "max_variance": _aggregate(st["variance"], aggregate),
            "mse_over_log2": mse / math.log(mask.n_omega) ** 2,
            "bound_rhs": mse_bound_rhs(mask.n_omega, mask.n_boundary, bw.K, d, c2),
            "n_omega": mask.n_omega, "n_boundary": mask.n_boundary, "W": bw.W, "K": bw.K,
            "M": M, "T": T, "seed": seed,
        })
    return curve.validate()


def _nrmse(est: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(est - ref) / np.linalg.norm(ref))


def run_subgrid_comparison(N: int = 128, W: float = 1.0 / 16.0, T: int = 2, seed: int = 0, *,
                           sub: int = 85, K: Optional[int] = None, R_complement: float = 43.0) -> dict:
    """Tensor Slepian versus proxy tapers on a centred ``sub x sub`` square.

    One triple-disk field is drawn. ``K`` defaults to the tensor count
    ``prod ceil(sub W)``, which ends on a gap in the product spectrum; the
    proxy tapers use the same ``K``. A third estimate uses proxy tapers on the
    complement of the radius ``R_complement`` disk with ``K = ceil(n W^2)``.
    """
    dims = (N, N)
    S = triple_disk_density(dims)
    X = sample_field(S, dims, derive_seed(seed, _FIELD_STREAM, 0))
    off = ((N - sub) // 2,) * 2
    tens = tensor_tapers((sub, sub), W, K, parent_dims=dims, offset=off)
    K = tens.K
    mask = rectangle_mask(dims, off, (sub, sub))
    prox = proxy_tapers(mask, K=K, T=T, seed=seed, W=W)
    S_mt = multitaper_estimate(X, tens).values
    S_pmt = multitaper_estimate(X, prox).values
    comp = disk_complement_mask(N, R_complement)
    comp_tap = proxy_tapers(comp, T=T, seed=seed, W=W)
    S_comp = multitaper_estimate(X, comp_tap).values
    return {
        "N": N, "W": W, "T": T, "seed": seed, "sub": sub, "K": K,
        "nrmse_tensor": _nrmse(S_mt, S.values),
        "nrmse_proxy": _nrmse(S_pmt, S.values),
        "deviation": _nrmse(S_pmt, S_mt),
        "R_complement": R_complement, "K_complement": comp_tap.K,
        "nrmse_complement": _nrmse(S_comp, S.values),
    }


def run_cryoem_synthetic(N: int = 128, radii: Sequence[float] = tuple(range(48, 71, 2)), M: int = 32,
                         seed: int = 0, *, T: int = 2, noise_to_signal: float = 10.0,
                         aggregate: str = "max", bandwidth: str = "per_domain",
                         noise: Optional[SpectralGrid] = None, cache: Optional[TaperCache] = None) -> dict:
    """Noise spectrum estimation outside a central particle disk.

    Each image is a clean synthetic projection plus a field drawn from
    :func:`~proxymt.simulate.cryo_noise_density`. Per radius three estimators
    of the noise density are compared on every image: the masked periodogram
    on the disk complement (``mper``), tensor multitapers on the four corner
    squares (``cmt``) and proxy multitapers on the disk complement (``pmt``).

    ``bandwidth="per_domain"`` gives each multitaper estimator
    ``W = n^(-1/6)`` for its own sample count ``n``; ``"shared"`` uses the
    disk-complement value for both. ``noise`` overrides the default noise
    density.

    Returns three curves keyed ``"bias2"``, ``"variance"`` and ``"mse"``, each
    with one column per estimator.
    """
    radii = _check_radii(radii)
    if any(not 0 < R < N / math.sqrt(2) for R in radii):
        raise DomainError("radii must lie in (0, N / sqrt(2))")
    if M < 2:
        raise ContractError("M must be at least 2")
    if bandwidth not in ("per_domain", "shared"):
        raise ContractError(f"unknown bandwidth policy {bandwidth!r}")
    dims = (N, N)
    S = noise if noise is not None else cryo_noise_density(dims)
    images = []
    for nu in range(M):
        sig = synthetic_projection(dims, derive_seed(seed, _SIGNAL_STREAM, nu), noise_to_signal=noise_to_signal)
        noise = sample_field(S, dims, derive_seed(seed, _NOISE_STREAM, nu))
        images.append(sig.values + noise.values)
    names = ("mper", "cmt", "pmt")
    aux = ("n_omega", "n_grid", "W_pmt", "W_cmt", "K_pmt", "K_cmt", "M", "T", "seed")
    meta = {"N": N, "M": M, "T": T, "seed": seed, "aggregate": aggregate, "bandwidth": bandwidth,
            "noise_to_signal": noise_to_signal}
    curves = {k: ExperimentCurve(f"cryoem_{k}", "R", names, aux, meta=dict(meta)) for k in ("bias2", "variance", "mse")}
    for R in radii:
        omega = disk_complement_mask(N, R)
        corners = corner_subgrids_mask(N, R)
        W_pmt = omega.n_omega ** (-1.0 / 6.0)
        W_cmt = W_pmt if bandwidth == "shared" else corners.mask.n_omega ** (-1.0 / 6.0)
        pmt = _proxy(omega, make_bandwidth(omega, W=W_pmt).K, T, seed, W_pmt, cache)
        rect = corner_tapers(corners, W_cmt)
        est = {k: [] for k in names}
        for x in images:
            est["mper"].append(mper_estimate(x, omega).values)
            est["cmt"].append(cmt_estimate(x, corners, W_cmt, rect_tapers=rect).values)
            est["pmt"].append(multitaper_estimate(x, pmt).values)
        row_aux = {"n_omega": omega.n_omega, "n_grid": corners.mask.n_omega, "W_pmt": W_pmt, "W_cmt": W_cmt,
                   "K_pmt": pmt.K, "K_cmt": sum(t.K for t in rect), "M": M, "T": T, "seed": seed}
        rows = {k: {"R": R, **row_aux} for k in curves}
        for name in names:
            st = mse_statistics(np.stack(est[name]), S.values)
            for k in curves:
                rows[k][name] = _aggregate(st[k], aggregate)
        for k in curves:
            curves[k].rows.append(rows[k])
    return {k: c.validate() for k, c in curves.items()}
